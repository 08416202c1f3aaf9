/**
 * IPFT feature tensor codec, byte-compatible with the engine.
 *
 * Layout (little-endian): magic "IPFT", u32 version (1), u32 grid height,
 * u32 grid width, u32 channels, u32 image height, u32 image width,
 * u8 source tag (0=dino 1=sd 2=fused 3=other), 3 zero pad bytes, then
 * height*width*channels float32 values in row-major (row, col, channel).
 */

export const IPFT_MAGIC = 'IPFT';
export const IPFT_VERSION = 1;
export const IPFT_HEADER_LEN = 32;

export type SourceTag = 'dino' | 'sd' | 'fused' | 'other';

const TAG_CODES: Record<SourceTag, number> = { dino: 0, sd: 1, fused: 2, other: 3 };
const CODE_TAGS: SourceTag[] = ['dino', 'sd', 'fused', 'other'];

export interface FeatureMap {
  height: number;
  width: number;
  channels: number;
  imageHeight: number;
  imageWidth: number;
  sourceTag: SourceTag;
  /** row-major (row, col, channel) */
  data: Float32Array;
}

export class FormatError extends Error {}

function checkDims(fm: FeatureMap): void {
  const { height, width, channels, imageHeight, imageWidth, data } = fm;
  if (height < 1 || width < 1 || channels < 1) {
    throw new FormatError(`dimensions must be >= 1, got ${height}x${width}x${channels}`);
  }
  if (data.length !== height * width * channels) {
    throw new FormatError(`data length ${data.length} != ${height * width * channels}`);
  }
  if (imageHeight < height || imageWidth < width) {
    throw new FormatError(
      `feature grid ${height}x${width} finer than image ${imageHeight}x${imageWidth}`,
    );
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) throw new FormatError(`non-finite value at flat index ${i}`);
  }
}

export function writeFeatureMap(fm: FeatureMap): Buffer {
  checkDims(fm);
  const buf = Buffer.alloc(IPFT_HEADER_LEN + 4 * fm.data.length);
  buf.write(IPFT_MAGIC, 0, 'ascii');
  buf.writeUInt32LE(IPFT_VERSION, 4);
  buf.writeUInt32LE(fm.height, 8);
  buf.writeUInt32LE(fm.width, 12);
  buf.writeUInt32LE(fm.channels, 16);
  buf.writeUInt32LE(fm.imageHeight, 20);
  buf.writeUInt32LE(fm.imageWidth, 24);
  buf.writeUInt8(TAG_CODES[fm.sourceTag], 28);
  for (let i = 0; i < fm.data.length; i++) {
    buf.writeFloatLE(fm.data[i], IPFT_HEADER_LEN + 4 * i);
  }
  return buf;
}

export function readFeatureMap(buf: Buffer): FeatureMap {
  if (buf.length < IPFT_HEADER_LEN) throw new FormatError('truncated header');
  if (buf.toString('ascii', 0, 4) !== IPFT_MAGIC) {
    throw new FormatError(`bad magic ${JSON.stringify(buf.toString('ascii', 0, 4))}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== IPFT_VERSION) throw new FormatError(`unsupported version ${version}`);
  const height = buf.readUInt32LE(8);
  const width = buf.readUInt32LE(12);
  const channels = buf.readUInt32LE(16);
  const imageHeight = buf.readUInt32LE(20);
  const imageWidth = buf.readUInt32LE(24);
  const tagCode = buf.readUInt8(28);
  const sourceTag = CODE_TAGS[tagCode];
  if (sourceTag === undefined) throw new FormatError(`unknown source tag code ${tagCode}`);
  const count = height * width * channels;
  if (buf.length !== IPFT_HEADER_LEN + 4 * count) {
    throw new FormatError(
      `payload size mismatch: expected ${4 * count} bytes, got ${buf.length - IPFT_HEADER_LEN}`,
    );
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) data[i] = buf.readFloatLE(IPFT_HEADER_LEN + 4 * i);
  const fm: FeatureMap = { height, width, channels, imageHeight, imageWidth, sourceTag, data };
  checkDims(fm);
  return fm;
}
