#!/usr/bin/env node
/**
 * Model-adapter CLI. All artifacts are exchanged with the engine through
 * its file formats: IPFT feature tensors, P5 masks, prompt JSON.
 *
 * Exit codes: 0 success, 2 usage or validation error, 1 runtime error
 * (missing weights, unreadable files).
 */

import { existsSync, readFileSync, writeFileSync } from 'node:fs';
import { parseArgs } from 'node:util';

import { extractStubFeatures, MODEL_TAGS, type ExtractionConfig, type ModelName } from './extract.js';
import { makeBlobImage } from './image.js';
import { FormatError, writeFeatureMap } from './ipft.js';
import { readImage, readMask, writeImage, writeMask } from './pnm.js';
import { readPrompts } from './prompts.js';
import { contrastSaliency } from './saliency.js';
import { stubSegment } from './sam.js';

class UsageError extends Error {}
class RuntimeFailure extends Error {}

function requireOption(value: string | undefined, flag: string): string {
  if (value === undefined) throw new UsageError(`missing required option ${flag}`);
  return value;
}

function parseIntOption(value: string | undefined, flag: string, fallback: number): number {
  if (value === undefined) return fallback;
  const n = Number(value);
  if (!Number.isInteger(n) || n < 0) throw new UsageError(`${flag} expects a non-negative integer`);
  return n;
}

function parseFloatOption(value: string | undefined, flag: string, fallback: number): number {
  if (value === undefined) return fallback;
  const n = Number(value);
  if (!Number.isFinite(n) || n < 0) throw new UsageError(`${flag} expects a non-negative number`);
  return n;
}

function parseTriple(value: string | undefined, flag: string, fallback: [number, number, number]): [number, number, number] {
  if (value === undefined) return fallback;
  const parts = value.split(',').map(Number);
  if (parts.length !== 3 || parts.some((v) => !Number.isInteger(v) || v < 0 || v > 255)) {
    throw new UsageError(`${flag} expects R,G,B with values in 0..255`);
  }
  return parts as [number, number, number];
}

function loadImage(path: string) {
  if (!existsSync(path)) throw new RuntimeFailure(`unreadable image: ${path} does not exist`);
  try {
    return readImage(readFileSync(path));
  } catch (err) {
    throw new RuntimeFailure(`unreadable image ${path}: ${err}`);
  }
}

function requireWeights(weights: string | undefined, what: string): void {
  if (weights === undefined || !existsSync(weights)) {
    throw new RuntimeFailure(
      `model weights not found for ${what}` +
        (weights ? `: ${weights}` : ' (pass --weights PATH, or use --backend stub / --method contrast)'),
    );
  }
}

function cmdExtractFeatures(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      image: { type: 'string' },
      out: { type: 'string' },
      model: { type: 'string' },
      backend: { type: 'string' },
      weights: { type: 'string' },
      grid: { type: 'string' },
      channels: { type: 'string' },
      timestep: { type: 'string' },
      'unet-tap': { type: 'string' },
      seed: { type: 'string' },
      noise: { type: 'string' },
    },
  });
  const model = requireOption(values.model, '--model');
  if (!(model in MODEL_TAGS)) {
    throw new UsageError(`--model must be one of dino, sd, clip, mae; got ${model}`);
  }
  const backend = values.backend ?? 'real';
  if (backend !== 'real' && backend !== 'stub') {
    throw new UsageError(`--backend must be real or stub, got ${backend}`);
  }
  const cfg: ExtractionConfig = {
    model: model as ModelName,
    grid: parseIntOption(values.grid, '--grid', 16),
    channels: parseIntOption(values.channels, '--channels', 8),
    ddimTimestep: parseIntOption(values.timestep, '--timestep', 50),
    sdUnetTap: values['unet-tap'] ?? 'decoder-mid',
    seed: parseIntOption(values.seed, '--seed', 0),
    noiseAmplitude: parseFloatOption(values.noise, '--noise', 0.05),
  };
  if (cfg.grid < 1 || cfg.channels < 1) throw new UsageError('--grid and --channels must be >= 1');
  if (cfg.ddimTimestep < 1) throw new UsageError('--timestep must be >= 1');
  const image = loadImage(requireOption(values.image, '--image'));
  if (image.height < cfg.grid || image.width < cfg.grid) {
    throw new UsageError(`--grid ${cfg.grid} finer than the ${image.height}x${image.width} image`);
  }
  if (backend === 'real') {
    requireWeights(values.weights, model);
    // integration seam for an ONNX / torch runtime; nothing ships weights here
    throw new RuntimeFailure(`real ${model} inference is not wired in this environment`);
  }
  const fm = extractStubFeatures(image, cfg);
  writeFileSync(requireOption(values.out, '--out'), writeFeatureMap(fm));
  console.log(
    JSON.stringify({
      model,
      backend,
      source_tag: fm.sourceTag,
      grid: cfg.grid,
      channels: cfg.channels,
      timestep: cfg.ddimTimestep,
      unet_tap: cfg.sdUnetTap,
      seed: cfg.seed,
      image_height: image.height,
      image_width: image.width,
    }),
  );
}

function cmdRunSam(argv: string[]): void {
  const { values, positionals } = parseArgs({
    args: argv,
    options: {
      image: { type: 'string' },
      backend: { type: 'string' },
      weights: { type: 'string' },
    },
    allowPositionals: true,
  });
  if (positionals.length !== 2) {
    throw new UsageError('run-sam expects exactly two positionals: PROMPTS_JSON OUT_MASK');
  }
  const [promptsPath, outPath] = positionals;
  const backend = values.backend ?? 'stub';
  if (backend !== 'real' && backend !== 'stub') {
    throw new UsageError(`--backend must be real or stub, got ${backend}`);
  }
  if (!existsSync(promptsPath)) throw new RuntimeFailure(`prompt file not found: ${promptsPath}`);
  const prompts = readPrompts(readFileSync(promptsPath));
  const image = loadImage(requireOption(values.image, '--image'));
  if (backend === 'real') {
    requireWeights(values.weights, 'sam');
    throw new RuntimeFailure('real sam inference is not wired in this environment');
  }
  const mask = stubSegment(image, prompts);
  writeFileSync(outPath, writeMask(mask));
  console.log(
    JSON.stringify({
      backend,
      positives: prompts.positives.length,
      negatives: prompts.negatives.length,
      mask_height: mask.height,
      mask_width: mask.width,
    }),
  );
}

function cmdMakeSaliencyMask(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      image: { type: 'string' },
      method: { type: 'string' },
      weights: { type: 'string' },
      gt: { type: 'string' },
      out: { type: 'string' },
    },
  });
  const method = requireOption(values.method, '--method');
  const out = requireOption(values.out, '--out');
  if (method === 'gt-passthrough') {
    const gtPath = requireOption(values.gt, '--gt');
    if (!existsSync(gtPath)) throw new RuntimeFailure(`ground-truth mask not found: ${gtPath}`);
    const mask = readMask(readFileSync(gtPath));
    writeFileSync(out, writeMask(mask));
  } else if (method === 'contrast') {
    const image = loadImage(requireOption(values.image, '--image'));
    writeFileSync(out, writeMask(contrastSaliency(image)));
  } else if (method === 'tsdn' || method === 'a2s') {
    requireWeights(values.weights, method);
    throw new RuntimeFailure(`real ${method} inference is not wired in this environment`);
  } else {
    throw new UsageError(
      `--method must be tsdn, a2s, contrast or gt-passthrough; got ${method}`,
    );
  }
  console.log(JSON.stringify({ method, out }));
}

function cmdMakeImage(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      out: { type: 'string' },
      'gt-out': { type: 'string' },
      width: { type: 'string' },
      height: { type: 'string' },
      bg: { type: 'string' },
      blob: { type: 'string' },
      'blob-color': { type: 'string' },
      noise: { type: 'string' },
      seed: { type: 'string' },
    },
  });
  const width = parseIntOption(values.width, '--width', 64);
  const height = parseIntOption(values.height, '--height', 64);
  let blob: [number, number, number, number] = [
    Math.floor(width / 4),
    Math.floor(height / 4),
    Math.floor(width / 3),
    Math.floor(height / 3),
  ];
  if (values.blob !== undefined) {
    const parts = values.blob.split(',').map(Number);
    if (parts.length !== 4 || parts.some((v) => !Number.isInteger(v) || v < 0)) {
      throw new UsageError('--blob expects x,y,w,h non-negative integers');
    }
    blob = parts as [number, number, number, number];
  }
  const { image, mask } = makeBlobImage({
    width,
    height,
    background: parseTriple(values.bg, '--bg', [28, 40, 48]),
    blobColor: parseTriple(values['blob-color'], '--blob-color', [212, 96, 32]),
    blob,
    noise: parseFloatOption(values.noise, '--noise', 0),
    seed: parseIntOption(values.seed, '--seed', 0),
  });
  writeFileSync(requireOption(values.out, '--out'), writeImage(image));
  if (values['gt-out'] !== undefined) writeFileSync(values['gt-out'], writeMask(mask));
  console.log(JSON.stringify({ out: values.out, width, height, blob }));
}

const COMMANDS: Record<string, (argv: string[]) => void> = {
  'extract-features': cmdExtractFeatures,
  'run-sam': cmdRunSam,
  'make-saliency-mask': cmdMakeSaliencyMask,
  'make-image': cmdMakeImage,
};

function main(): void {
  const [command, ...rest] = process.argv.slice(2);
  if (!command || command === '--help' || command === '-h') {
    console.log('usage: cli.js <extract-features|run-sam|make-saliency-mask|make-image> [options]');
    process.exit(command ? 0 : 2);
  }
  const handler = COMMANDS[command];
  if (!handler) {
    console.error(`error: unknown command ${command}`);
    process.exit(2);
  }
  try {
    handler(rest);
  } catch (err) {
    const code = (err as NodeJS.ErrnoException)?.code;
    if (
      err instanceof UsageError ||
      err instanceof FormatError ||
      (typeof code === 'string' && code.startsWith('ERR_PARSE_ARGS'))
    ) {
      console.error(`error: ${(err as Error).message}`);
      process.exit(2);
    }
    if (err instanceof RuntimeFailure) {
      console.error(`error: ${err.message}`);
      process.exit(1);
    }
    console.error(`error: ${err}`);
    process.exit(1);
  }
}

main();
