// SLTF binary tensor format: "SLTF", u16 version, u8 dtype, u8 ndim,
// ndim x u32 dims, little-endian row-major payload.

const MAGIC = 'SLTF';
const VERSION = 1;

export type Dtype = 'float32' | 'uint8' | 'uint16' | 'int32';

const DTYPE_CODES: Record<Dtype, number> = {
  float32: 1,
  uint8: 2,
  uint16: 3,
  int32: 4,
};

const CODE_DTYPES: Record<number, Dtype> = {
  1: 'float32',
  2: 'uint8',
  3: 'uint16',
  4: 'int32',
};

const BYTES_PER: Record<Dtype, number> = {
  float32: 4,
  uint8: 1,
  uint16: 2,
  int32: 4,
};

export type TensorData = Float32Array | Uint8Array | Uint16Array | Int32Array;

export interface Tensor {
  dtype: Dtype;
  shape: number[];
  data: TensorData;
}

export class TensorFormatError extends Error {}

function dtypeOf(data: TensorData): Dtype {
  if (data instanceof Float32Array) return 'float32';
  if (data instanceof Uint8Array) return 'uint8';
  if (data instanceof Uint16Array) return 'uint16';
  return 'int32';
}

export function writeTensor(data: TensorData, shape: number[]): Buffer {
  if (shape.length < 1 || shape.length > 4) {
    throw new TensorFormatError(`ndim must be 1..4, got ${shape.length}`);
  }
  const count = shape.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new TensorFormatError(
      `shape ${JSON.stringify(shape)} needs ${count} elements, got ${data.length}`,
    );
  }
  const dtype = dtypeOf(data);
  const header = Buffer.alloc(8 + 4 * shape.length);
  header.write(MAGIC, 0, 'ascii');
  header.writeUInt16LE(VERSION, 4);
  header.writeUInt8(DTYPE_CODES[dtype], 6);
  header.writeUInt8(shape.length, 7);
  shape.forEach((dim, i) => header.writeUInt32LE(dim, 8 + 4 * i));
  const payload = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  return Buffer.concat([header, payload]);
}

export function readTensor(buf: Buffer): Tensor {
  if (buf.length < 8) throw new TensorFormatError('truncated header');
  if (buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new TensorFormatError('bad magic');
  }
  const version = buf.readUInt16LE(4);
  if (version !== VERSION) throw new TensorFormatError(`unknown version ${version}`);
  const code = buf.readUInt8(6);
  const dtype = CODE_DTYPES[code];
  if (!dtype) throw new TensorFormatError(`unknown dtype code ${code}`);
  const ndim = buf.readUInt8(7);
  if (ndim < 1 || ndim > 4) throw new TensorFormatError(`bad ndim ${ndim}`);
  if (buf.length < 8 + 4 * ndim) throw new TensorFormatError('truncated dims');
  const shape: number[] = [];
  for (let i = 0; i < ndim; i++) shape.push(buf.readUInt32LE(8 + 4 * i));
  const count = shape.reduce((a, b) => a * b, 1);
  const start = 8 + 4 * ndim;
  const byteLen = count * BYTES_PER[dtype];
  if (buf.length < start + byteLen) throw new TensorFormatError('truncated payload');
  // copy so the typed array is aligned and detached from the input buffer
  const bytes = Uint8Array.prototype.slice.call(buf, start, start + byteLen);
  let data: TensorData;
  switch (dtype) {
    case 'float32': data = new Float32Array(bytes.buffer); break;
    case 'uint8': data = bytes; break;
    case 'uint16': data = new Uint16Array(bytes.buffer); break;
    case 'int32': data = new Int32Array(bytes.buffer); break;
  }
  return { dtype, shape, data };
}
