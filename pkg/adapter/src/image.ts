/** Deterministic synthetic test images: a colored blob on a plain background. */

import { mulberry32 } from './extract.js';
import type { Mask, RgbImage } from './pnm.js';

export interface BlobSpec {
  width: number;
  height: number;
  background: [number, number, number];
  blobColor: [number, number, number];
  /** blob rectangle: x, y, w, h in pixels */
  blob: [number, number, number, number];
  noise: number;
  seed: number;
}

export function makeBlobImage(spec: BlobSpec): { image: RgbImage; mask: Mask } {
  const { width, height } = spec;
  const data = new Uint8Array(3 * width * height);
  const mask = new Uint8Array(width * height);
  const [bx, by, bw, bh] = spec.blob;
  const rand = spec.noise > 0 ? mulberry32(spec.seed >>> 0) : null;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const inside = x >= bx && x < bx + bw && y >= by && y < by + bh;
      const color = inside ? spec.blobColor : spec.background;
      mask[y * width + x] = inside ? 1 : 0;
      const o = 3 * (y * width + x);
      for (let ch = 0; ch < 3; ch++) {
        let v = color[ch];
        if (rand !== null) v += Math.round(spec.noise * (rand() * 2 - 1));
        data[o + ch] = Math.min(255, Math.max(0, v));
      }
    }
  }
  return { image: { height, width, data }, mask: { height, width, data: mask } };
}
