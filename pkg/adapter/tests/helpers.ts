import { spawnSync } from 'node:child_process';
import { mkdtempSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { fileURLToPath } from 'node:url';

export const CLI = fileURLToPath(new URL('../src/cli.js', import.meta.url));
export const ENGINE = process.env.IPSEG_CLI ?? 'ipseg';
export const PYTHON = process.env.IPSEG_PYTHON ?? 'python3';

export interface RunResult {
  status: number;
  stdout: string;
  stderr: string;
}

export function run(command: string, args: string[]): RunResult {
  const proc = spawnSync(command, args, { encoding: 'utf-8' });
  if (proc.error) throw proc.error;
  return { status: proc.status ?? -1, stdout: proc.stdout, stderr: proc.stderr };
}

export function adapter(args: string[]): RunResult {
  return run(process.execPath, [CLI, ...args]);
}

export function engine(args: string[]): RunResult {
  return run(ENGINE, args);
}

export function tempDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix));
}
