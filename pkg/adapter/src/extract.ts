/**
 * Feature extraction backends.
 *
 * The real foundation models (dino, sd, clip, mae) need their weights on
 * disk; pointing --weights at them is the integration seam for an ONNX or
 * torch runtime. The deterministic `stub` backend computes per-cell color
 * and gradient statistics instead, so format and pipeline contracts can be
 * exercised on any machine. The sd flavor adds seeded pseudo-noise, echoing
 * the seeded-noise determinism of diffusion feature extraction.
 */

import type { FeatureMap, SourceTag } from './ipft.js';
import type { RgbImage } from './pnm.js';

export type ModelName = 'dino' | 'sd' | 'clip' | 'mae';

export interface ExtractionConfig {
  model: ModelName;
  grid: number;
  channels: number;
  ddimTimestep: number;
  /** which U-Net block sd features are tapped from; unused by the stub */
  sdUnetTap: string;
  seed: number;
  noiseAmplitude: number;
}

export const MODEL_TAGS: Record<ModelName, SourceTag> = {
  dino: 'dino',
  sd: 'sd',
  clip: 'other',
  mae: 'other',
};

/** Deterministic 32-bit PRNG (mulberry32). */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function cellOf(pixel: number, cells: number, extent: number): number {
  return Math.floor(((2 * pixel + 1) * cells) / (2 * extent));
}

const BASE_CHANNELS = 8;

/**
 * Per-cell statistics over the uniform tiling the engine also uses:
 * mean R/G/B, luminance std, mean |dx|, mean |dy|, mean luminance,
 * red-blue contrast; channels beyond 8 repeat the base scaled down.
 */
export function extractStubFeatures(img: RgbImage, cfg: ExtractionConfig): FeatureMap {
  const grid = cfg.grid;
  const c = cfg.channels;
  const { height, width, data } = img;
  const sums = new Float64Array(grid * grid * BASE_CHANNELS);
  const sumSqLum = new Float64Array(grid * grid);
  const counts = new Float64Array(grid * grid);

  const lumAt = (x: number, y: number): number => {
    const o = 3 * (y * width + x);
    return (data[o] + data[o + 1] + data[o + 2]) / 3;
  };

  for (let y = 0; y < height; y++) {
    const gy = cellOf(y, grid, height);
    for (let x = 0; x < width; x++) {
      const gx = cellOf(x, grid, width);
      const cell = gy * grid + gx;
      const o = 3 * (y * width + x);
      const r = data[o];
      const g = data[o + 1];
      const b = data[o + 2];
      const lum = (r + g + b) / 3;
      const dx = Math.abs(lumAt(Math.min(x + 1, width - 1), y) - lum);
      const dy = Math.abs(lumAt(x, Math.min(y + 1, height - 1)) - lum);
      const base = cell * BASE_CHANNELS;
      sums[base + 0] += r;
      sums[base + 1] += g;
      sums[base + 2] += b;
      sums[base + 4] += dx;
      sums[base + 5] += dy;
      sums[base + 6] += lum;
      sums[base + 7] += r - b;
      sumSqLum[cell] += lum * lum;
      counts[cell] += 1;
    }
  }

  const out = new Float32Array(grid * grid * c);
  const noise =
    cfg.model === 'sd' && cfg.noiseAmplitude > 0
      ? mulberry32((cfg.seed * 1000003 + cfg.ddimTimestep) >>> 0)
      : null;
  for (let cell = 0; cell < grid * grid; cell++) {
    const n = counts[cell] || 1;
    const base = cell * BASE_CHANNELS;
    const meanLum = sums[base + 6] / n;
    const variance = Math.max(sumSqLum[cell] / n - meanLum * meanLum, 0);
    const stats = [
      sums[base + 0] / n / 255,
      sums[base + 1] / n / 255,
      sums[base + 2] / n / 255,
      Math.sqrt(variance) / 255,
      sums[base + 4] / n / 255,
      sums[base + 5] / n / 255,
      meanLum / 255,
      sums[base + 7] / n / 255,
    ];
    for (let k = 0; k < c; k++) {
      let value = stats[k % BASE_CHANNELS] / (1 + Math.floor(k / BASE_CHANNELS));
      if (noise !== null) value += cfg.noiseAmplitude * (noise() * 2 - 1);
      out[cell * c + k] = value;
    }
  }

  return {
    height: grid,
    width: grid,
    channels: c,
    imageHeight: height,
    imageWidth: width,
    sourceTag: MODEL_TAGS[cfg.model],
    data: out,
  };
}
