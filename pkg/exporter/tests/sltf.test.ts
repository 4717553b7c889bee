import { describe, expect, it } from 'vitest';

import { TensorFormatError, readTensor, writeTensor } from '../src/sltf';

describe('sltf', () => {
  it('round trips a float32 tensor bitwise', () => {
    const data = new Float32Array([1.5, -2.25, 3.125, 0.0, 1e-30, 7e20]);
    const buf = writeTensor(data, [2, 3]);
    expect(buf.length).toBe(8 + 8 + 24);
    const back = readTensor(buf);
    expect(back.dtype).toBe('float32');
    expect(back.shape).toEqual([2, 3]);
    expect(Array.from(back.data as Float32Array)).toEqual(Array.from(data));
  });

  it('writes the documented header layout', () => {
    const buf = writeTensor(new Float32Array([0]), [1]);
    expect(buf.toString('ascii', 0, 4)).toBe('SLTF');
    expect(buf.readUInt16LE(4)).toBe(1); // version
    expect(buf.readUInt8(6)).toBe(1); // f32 code
    expect(buf.readUInt8(7)).toBe(1); // ndim
    expect(buf.readUInt32LE(8)).toBe(1);
  });

  it('round trips integer dtypes', () => {
    for (const data of [new Uint8Array([0, 255]), new Uint16Array([0, 65535]),
                        new Int32Array([-5, 9])]) {
      const back = readTensor(writeTensor(data, [2]));
      expect(Array.from(back.data as Uint8Array)).toEqual(Array.from(data as Uint8Array));
    }
  });

  it('rejects malformed input', () => {
    expect(() => readTensor(Buffer.from('XXXX0000'))).toThrow(TensorFormatError);
    const good = writeTensor(new Float32Array([1, 2]), [2]);
    expect(() => readTensor(good.subarray(0, good.length - 1))).toThrow(/truncated/);
    expect(() => writeTensor(new Float32Array([1]), [2])).toThrow(/elements/);
    expect(() => writeTensor(new Float32Array([1]), [1, 1, 1, 1, 1])).toThrow(/ndim/);
  });
});
