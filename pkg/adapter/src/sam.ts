/**
 * Promptable segmentation. The real path hands off to SAM weights (not
 * bundled); the stub classifies every pixel by whether its color sits
 * closer to the positive-point seed colors than to the negative ones,
 * which is enough to exercise the engine's external-segmenter contract.
 */

import type { Mask, RgbImage } from './pnm.js';
import type { PromptSet } from './prompts.js';
import { FormatError } from './ipft.js';

function seedColor(img: RgbImage, x: number, y: number): [number, number, number] {
  let r = 0;
  let g = 0;
  let b = 0;
  let n = 0;
  for (let dy = -1; dy <= 1; dy++) {
    for (let dx = -1; dx <= 1; dx++) {
      const px = x + dx;
      const py = y + dy;
      if (px < 0 || py < 0 || px >= img.width || py >= img.height) continue;
      const o = 3 * (py * img.width + px);
      r += img.data[o];
      g += img.data[o + 1];
      b += img.data[o + 2];
      n += 1;
    }
  }
  return [r / n, g / n, b / n];
}

export function stubSegment(img: RgbImage, prompts: PromptSet): Mask {
  for (const p of [...prompts.positives, ...prompts.negatives]) {
    if (p.x >= img.width || p.y >= img.height) {
      throw new FormatError(`prompt (${p.x}, ${p.y}) outside ${img.height}x${img.width} image`);
    }
  }
  const positives = prompts.positives.map((p) => seedColor(img, p.x, p.y));
  const negatives = prompts.negatives.map((p) => seedColor(img, p.x, p.y));
  const data = new Uint8Array(img.width * img.height);
  for (let y = 0; y < img.height; y++) {
    for (let x = 0; x < img.width; x++) {
      const o = 3 * (y * img.width + x);
      const r = img.data[o];
      const g = img.data[o + 1];
      const b = img.data[o + 2];
      const dist = (s: [number, number, number]) =>
        (r - s[0]) ** 2 + (g - s[1]) ** 2 + (b - s[2]) ** 2;
      const dPos = Math.min(...positives.map(dist));
      const dNeg = Math.min(...negatives.map(dist));
      data[y * img.width + x] = dPos < dNeg ? 1 : 0;
    }
  }
  return { height: img.height, width: img.width, data };
}
