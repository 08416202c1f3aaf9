/** Engine prompt JSON (schema version 1): validation mirrors the engine reader. */

import { FormatError } from './ipft.js';

export interface PromptPoint {
  x: number;
  y: number;
  score: number;
}

export interface PromptSet {
  k: number;
  c: number;
  positives: PromptPoint[];
  negatives: PromptPoint[];
}

function parsePoints(doc: Record<string, unknown>, key: string, c: number): PromptPoint[] {
  const items = doc[key];
  if (!Array.isArray(items)) throw new FormatError(`$.${key}: missing or not an array`);
  if (items.length !== c) throw new FormatError(`$.${key}: length ${items.length} != c=${c}`);
  return items.map((item, i) => {
    const path = `$.${key}[${i}]`;
    if (typeof item !== 'object' || item === null) throw new FormatError(`${path}: not an object`);
    const { x, y, score } = item as Record<string, unknown>;
    if (!Number.isInteger(x) || !Number.isInteger(y)) {
      throw new FormatError(`${path}: x and y must be integers`);
    }
    if ((x as number) < 0 || (y as number) < 0) {
      throw new FormatError(`${path}: negative coordinate (${x}, ${y})`);
    }
    if (typeof score !== 'number' || !Number.isFinite(score)) {
      throw new FormatError(`${path}.score: must be a finite number`);
    }
    return { x: x as number, y: y as number, score };
  });
}

export function readPrompts(raw: Buffer | string): PromptSet {
  let doc: unknown;
  try {
    doc = JSON.parse(typeof raw === 'string' ? raw : raw.toString('utf-8'));
  } catch (err) {
    throw new FormatError(`$: invalid JSON: ${err}`);
  }
  if (typeof doc !== 'object' || doc === null) throw new FormatError('$: not an object');
  const obj = doc as Record<string, unknown>;
  if (obj.version !== 1) throw new FormatError(`$.version: unsupported version ${obj.version}`);
  const k = obj.k;
  const c = obj.c;
  if (!Number.isInteger(k) || (k as number) < 1) throw new FormatError('$.k: must be an integer >= 1');
  if (!Number.isInteger(c) || (c as number) < 1) throw new FormatError('$.c: must be an integer >= 1');
  if ((c as number) > (k as number)) throw new FormatError(`$.c: c=${c} must not exceed k=${k}`);
  return {
    k: k as number,
    c: c as number,
    positives: parsePoints(obj, 'positives', c as number),
    negatives: parsePoints(obj, 'negatives', c as number),
  };
}

export function writePrompts(pset: PromptSet): Buffer {
  const doc = {
    version: 1,
    k: pset.k,
    c: pset.c,
    positives: pset.positives,
    negatives: pset.negatives,
  };
  return Buffer.from(JSON.stringify(doc, null, 2) + '\n', 'utf-8');
}
