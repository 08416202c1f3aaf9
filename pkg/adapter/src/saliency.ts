/**
 * Foreground (salient object) masks for prompt images. The unsupervised
 * detectors (tsdn, a2s) need their weights; `contrast` is the stub:
 * color distance from the border-estimated background, thresholded at
 * half the peak. `gt-passthrough` re-emits a provided ground-truth mask.
 */

import type { Mask, RgbImage } from './pnm.js';

export function contrastSaliency(img: RgbImage): Mask {
  const { height, width, data } = img;
  let bgR = 0;
  let bgG = 0;
  let bgB = 0;
  let n = 0;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if (y === 0 || x === 0 || y === height - 1 || x === width - 1) {
        const o = 3 * (y * width + x);
        bgR += data[o];
        bgG += data[o + 1];
        bgB += data[o + 2];
        n += 1;
      }
    }
  }
  bgR /= n;
  bgG /= n;
  bgB /= n;
  const dist = new Float64Array(width * height);
  let peak = 0;
  for (let i = 0; i < width * height; i++) {
    const o = 3 * i;
    dist[i] = Math.sqrt((data[o] - bgR) ** 2 + (data[o + 1] - bgG) ** 2 + (data[o + 2] - bgB) ** 2);
    peak = Math.max(peak, dist[i]);
  }
  // flat images have no salient object; 20 units of 8-bit color is noise floor
  const threshold = Math.max(peak / 2, 20);
  const mask = new Uint8Array(width * height);
  for (let i = 0; i < mask.length; i++) mask[i] = dist[i] > threshold ? 1 : 0;
  return { height, width, data: mask };
}
