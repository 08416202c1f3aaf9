/**
 * Codec-free PNM image formats: P5 (binary masks, engine-compatible) and
 * P6 (RGB images, the adapter's input format).
 */

import { FormatError } from './ipft.js';

export interface Mask {
  height: number;
  width: number;
  /** 0 or 1 per pixel, row-major */
  data: Uint8Array;
}

export interface RgbImage {
  height: number;
  width: number;
  /** interleaved RGB, row-major */
  data: Uint8Array;
}

const WHITESPACE = new Set([0x20, 0x09, 0x0a, 0x0d, 0x0b, 0x0c]);

function nextToken(buf: Buffer, pos: number): [string, number] {
  const n = buf.length;
  while (pos < n) {
    if (buf[pos] === 0x23 /* '#' */) {
      while (pos < n && buf[pos] !== 0x0a) pos++;
    } else if (WHITESPACE.has(buf[pos])) {
      pos++;
    } else {
      break;
    }
  }
  const start = pos;
  while (pos < n && !WHITESPACE.has(buf[pos])) pos++;
  if (start === pos) throw new FormatError('unexpected end of PNM header');
  return [buf.toString('ascii', start, pos), pos];
}

/** Returns [width, height, maxval, payload offset]. */
function parseHeader(buf: Buffer, magic: string): [number, number, number, number] {
  if (buf.toString('ascii', 0, 2) !== magic) {
    throw new FormatError(`bad magic, expected ${magic}`);
  }
  if (buf.length < 3 || (!WHITESPACE.has(buf[2]) && buf[2] !== 0x23)) {
    throw new FormatError('PNM magic must be followed by whitespace');
  }
  let pos = 2;
  const values: number[] = [];
  for (let i = 0; i < 3; i++) {
    const [token, next] = nextToken(buf, pos);
    if (!/^\d+$/.test(token)) throw new FormatError(`non-numeric header token ${token}`);
    values.push(parseInt(token, 10));
    pos = next;
  }
  if (pos >= buf.length || !WHITESPACE.has(buf[pos])) {
    throw new FormatError('PNM header must end with one whitespace byte');
  }
  return [values[0], values[1], values[2], pos + 1];
}

export function writeMask(mask: Mask): Buffer {
  const header = Buffer.from(`P5\n${mask.width} ${mask.height}\n255\n`, 'ascii');
  const payload = Buffer.alloc(mask.data.length);
  for (let i = 0; i < mask.data.length; i++) payload[i] = mask.data[i] ? 255 : 0;
  return Buffer.concat([header, payload]);
}

export function readMask(buf: Buffer): Mask {
  const [width, height, maxval, offset] = parseHeader(buf, 'P5');
  if (maxval !== 255) throw new FormatError(`maxval must be 255, got ${maxval}`);
  const payload = buf.subarray(offset);
  if (payload.length !== width * height) {
    throw new FormatError(`size mismatch: ${width}x${height} vs ${payload.length} bytes`);
  }
  const data = new Uint8Array(width * height);
  for (let i = 0; i < data.length; i++) data[i] = payload[i] > 127 ? 1 : 0;
  return { height, width, data };
}

export function writeImage(img: RgbImage): Buffer {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, 'ascii');
  return Buffer.concat([header, Buffer.from(img.data)]);
}

export function readImage(buf: Buffer): RgbImage {
  const [width, height, maxval, offset] = parseHeader(buf, 'P6');
  if (maxval !== 255) throw new FormatError(`maxval must be 255, got ${maxval}`);
  const payload = buf.subarray(offset);
  if (payload.length !== 3 * width * height) {
    throw new FormatError(`size mismatch: ${width}x${height} RGB vs ${payload.length} bytes`);
  }
  return { height, width, data: new Uint8Array(payload) };
}
