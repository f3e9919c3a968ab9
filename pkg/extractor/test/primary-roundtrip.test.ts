/** The emitted CSV must load through the primary pipeline's reader. */

import { execFileSync } from 'child_process';
import { existsSync, mkdtempSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { PNG } from 'pngjs';
import { describe, expect, it } from 'vitest';

import { getBackbone } from '../src/backbones.js';
import { extractEmbeddings } from '../src/extract.js';

const N = 20;

function buildImageDir(): string {
  const dir = mkdtempSync(join(tmpdir(), 'roundtrip-'));
  for (let i = 0; i < N; i++) {
    const png = new PNG({ width: 32, height: 32 });
    for (let p = 0; p < 32 * 32; p++) {
      png.data[4 * p] = (p * (i + 3)) % 256;
      png.data[4 * p + 1] = (p + 31 * i) % 256;
      png.data[4 * p + 2] = (p * p + i) % 256;
      png.data[4 * p + 3] = 255;
    }
    writeFileSync(join(dir, `img${String(i).padStart(3, '0')}.png`), PNG.sync.write(png));
  }
  return dir;
}

describe('primary-component round trip', () => {
  it('search CLI consumes the extractor output end to end', () => {
    const dir = buildImageDir();
    extractEmbeddings(dir, getBackbone('DinoV2Small'), join(dir, 'image.csv'));

    const rows = ['id,patient,label,age'];
    for (let i = 0; i < N; i++) {
      const id = `img${String(i).padStart(3, '0')}`;
      rows.push(`${id},p${i},${i % 2},${40 + i}`);
    }
    writeFileSync(join(dir, 'tabular.csv'), rows.join('\n') + '\n');
    writeFileSync(
      join(dir, 'manifest.json'),
      JSON.stringify({
        tabular_path: 'tabular.csv',
        embedding_paths: { image: 'image.csv' },
        label_column: 'label',
        group_column: 'patient',
        id_column: 'id',
        task: 'binary',
      }),
    );
    const runDir = join(dir, 'run');
    writeFileSync(
      join(dir, 'config.json'),
      JSON.stringify({
        manifest: join(dir, 'manifest.json'),
        k: 2,
        valid_fraction: 0.2,
        seeds: [0],
        budgets: { tabular: 1, imaging: 1, late: 1, early: 1, joint: 1 },
        ensemble_k: 1,
        space: 'fast',
        output: runDir,
      }),
    );

    const stdout = execFileSync(
      'python3',
      ['-m', 'autofuse', 'search', '--config', join(dir, 'config.json')],
      { encoding: 'utf-8' },
    );
    expect(stdout).toContain('run complete');
    expect(existsSync(join(runDir, 'metrics.csv'))).toBe(true);
  }, 180_000);

  it('a second backbone also validates', () => {
    const dir = buildImageDir();
    const result = extractEmbeddings(dir, getBackbone('ViTBase'), join(dir, 'image.csv'));
    expect(result.rows).toBe(N);

    const rows = ['id,patient,label,mark'];
    for (let i = 0; i < N; i++) {
      const id = `img${String(i).padStart(3, '0')}`;
      rows.push(`${id},p${i},${i % 2},${(i * 7) % 5}`);
    }
    writeFileSync(join(dir, 'tabular.csv'), rows.join('\n') + '\n');
    writeFileSync(
      join(dir, 'manifest.json'),
      JSON.stringify({
        tabular_path: 'tabular.csv',
        embedding_paths: { image: 'image.csv' },
        label_column: 'label',
        group_column: 'patient',
        id_column: 'id',
        task: 'binary',
      }),
    );
    // format-level validation through the primary loader, via its CLI error path:
    // a successful synth-free load happens inside `search`; here we just assert
    // the file parses as the primary's embedding format by running a tiny search
    const runDir = join(dir, 'run');
    writeFileSync(
      join(dir, 'config.json'),
      JSON.stringify({
        manifest: join(dir, 'manifest.json'),
        k: 2,
        valid_fraction: 0.2,
        seeds: [0],
        budgets: { tabular: 1, imaging: 1, late: 1, early: 1, joint: 1 },
        ensemble_k: 1,
        space: 'fast',
        output: runDir,
      }),
    );
    execFileSync('python3', ['-m', 'autofuse', 'search', '--config', join(dir, 'config.json')]);
    expect(existsSync(join(runDir, 'metrics.csv'))).toBe(true);
  }, 180_000);
});
