// Binary PPM (P6, maxval 255) reader, matching the primary pipeline's
// image format. Header tokens may be separated by whitespace and
// '#' comments.

import { TensorFormatError } from './sltf';

export interface PpmImage {
  width: number;
  height: number;
  // row-major RGB, 3 bytes per pixel
  data: Uint8Array;
}

function isSpace(b: number): boolean {
  return b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d || b === 0x0c || b === 0x0b;
}

function nextToken(buf: Buffer, pos: number): [string, number] {
  while (pos < buf.length) {
    if (isSpace(buf[pos])) {
      pos++;
    } else if (buf[pos] === 0x23) { // '#'
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
    } else {
      break;
    }
  }
  const start = pos;
  while (pos < buf.length && !isSpace(buf[pos])) pos++;
  if (start === pos) throw new TensorFormatError('truncated PPM header');
  return [buf.toString('ascii', start, pos), pos];
}

export function readPpm(buf: Buffer): PpmImage {
  let pos = 0;
  let tok: string;
  [tok, pos] = nextToken(buf, pos);
  if (tok !== 'P6') throw new TensorFormatError(`bad PPM magic ${tok}`);
  [tok, pos] = nextToken(buf, pos);
  const width = parseInt(tok, 10);
  [tok, pos] = nextToken(buf, pos);
  const height = parseInt(tok, 10);
  [tok, pos] = nextToken(buf, pos);
  const maxval = parseInt(tok, 10);
  if (!(width > 0 && height > 0)) throw new TensorFormatError('bad PPM dimensions');
  if (maxval !== 255) throw new TensorFormatError(`unsupported maxval ${maxval}`);
  pos += 1; // single whitespace byte after maxval
  const n = width * height * 3;
  if (buf.length < pos + n) throw new TensorFormatError('truncated PPM payload');
  return { width, height, data: new Uint8Array(buf.subarray(pos, pos + n)) };
}
