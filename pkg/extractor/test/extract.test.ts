import { execFileSync } from 'child_process';
import { mkdtempSync, readFileSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { PNG } from 'pngjs';
import { describe, expect, it } from 'vitest';

import { BACKBONES, BackboneUnavailable, getBackbone } from '../src/backbones.js';
import { INPUT_WIDTH, extractEmbeddings, resolveIds } from '../src/extract.js';
import { decodeImage, preprocess, resizeBilinear } from '../src/image.js';
import { makeEncoder, seededEncoder } from '../src/model.js';

function writeTestPng(path: string, seed: number, size = 48): void {
  const png = new PNG({ width: size, height: size });
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = (y * size + x) * 4;
      png.data[i] = (x * 5 + seed * 37) % 256;
      png.data[i + 1] = (y * 7 + seed * 11) % 256;
      png.data[i + 2] = (x * y + seed) % 256;
      png.data[i + 3] = 255;
    }
  }
  writeFileSync(path, PNG.sync.write(png));
}

function makeImageDir(count: number, duplicateOf?: number): string {
  const dir = mkdtempSync(join(tmpdir(), 'images-'));
  for (let i = 0; i < count; i++) {
    writeTestPng(join(dir, `img${String(i).padStart(3, '0')}.png`), duplicateOf !== undefined && i === count - 1 ? duplicateOf : i);
  }
  return dir;
}

describe('backbone registry', () => {
  it('matches the registered embedding widths', () => {
    expect(getBackbone('DinoV2Small').embeddingSize).toBe(384);
    expect(getBackbone('ViTBase').embeddingSize).toBe(768);
    expect(getBackbone('ViTLarge').embeddingSize).toBe(1024);
    expect(getBackbone('ResNet18').embeddingSize).toBe(512);
    expect(getBackbone('ResNet50').embeddingSize).toBe(2048);
    expect(getBackbone('EfficientNetB0').embeddingSize).toBe(320);
    expect(getBackbone('EfficientNetB4').embeddingSize).toBe(448);
    expect(getBackbone('MobileNetV2').embeddingSize).toBe(320);
    expect(Object.keys(BACKBONES)).toHaveLength(17);
  });

  it('rejects unknown names', () => {
    expect(() => getBackbone('NotANet')).toThrow(BackboneUnavailable);
  });
});

describe('preprocessing', () => {
  it('resize preserves constant images', () => {
    const flat = { width: 10, height: 10, data: new Float64Array(300).fill(0.5) };
    const resized = resizeBilinear(flat, 224);
    expect(resized.data.every((v) => Math.abs(v - 0.5) < 1e-12)).toBe(true);
  });

  it('produces the encoder input width', () => {
    const dir = makeImageDir(1);
    const image = decodeImage(join(dir, 'img000.png'));
    const features = preprocess(image, getBackbone('DinoV2Small'));
    expect(features.length).toBe(INPUT_WIDTH);
  });
});

describe('frozen encoder', () => {
  it('is deterministic and dimension-correct', () => {
    const spec = getBackbone('DinoV2Small');
    const a = seededEncoder(spec, INPUT_WIDTH);
    const b = seededEncoder(spec, INPUT_WIDTH);
    const x = new Float64Array(INPUT_WIDTH).fill(0.25);
    expect(Array.from(a.encode(x))).toEqual(Array.from(b.encode(x)));
    expect(a.encode(x).length).toBe(384);
  });

  it('pretrained mode without a checkpoint raises BackboneUnavailable', () => {
    const spec = getBackbone('ViTBase');
    expect(() => makeEncoder(spec, INPUT_WIDTH, { pretrained: true })).toThrow(
      BackboneUnavailable,
    );
  });

  it('loads explicit projection weights', () => {
    const spec = getBackbone('EfficientNetB0');
    const dir = mkdtempSync(join(tmpdir(), 'weights-'));
    const path = join(dir, 'w.json');
    writeFileSync(
      path,
      JSON.stringify({ weights: new Array(INPUT_WIDTH * spec.embeddingSize).fill(0.001) }),
    );
    const encoder = makeEncoder(spec, INPUT_WIDTH, { weightsPath: path });
    expect(encoder.encode(new Float64Array(INPUT_WIDTH).fill(1)).length).toBe(320);
  });
});

describe('extractEmbeddings', () => {
  it('emits one row per image with the declared width', () => {
    const dir = makeImageDir(10);
    const out = join(dir, 'emb.csv');
    const result = extractEmbeddings(dir, getBackbone('DinoV2Small'), out);
    expect(result.rows).toBe(10);
    const lines = readFileSync(out, 'utf-8').trim().split('\n');
    expect(lines).toHaveLength(11);
    expect(lines[0].split(',')).toHaveLength(385);
    expect(lines[0].split(',')[0]).toBe('id');
    expect(lines[0].split(',')[384]).toBe('e383');
    for (const line of lines.slice(1)) {
      expect(line.split(',')).toHaveLength(385);
    }
  });

  it('is bitwise reproducible across runs and backbones', () => {
    const dir = makeImageDir(6);
    for (const name of ['DinoV2Small', 'ViTBase']) {
      const outA = join(dir, `${name}-a.csv`);
      const outB = join(dir, `${name}-b.csv`);
      extractEmbeddings(dir, getBackbone(name), outA);
      extractEmbeddings(dir, getBackbone(name), outB);
      expect(readFileSync(outA)).toEqual(readFileSync(outB));
    }
  });

  it('identical images under two ids embed identically', () => {
    const dir = makeImageDir(4, 0); // last image duplicates the first
    const out = join(dir, 'emb.csv');
    extractEmbeddings(dir, getBackbone('DinoV2Small'), out);
    const lines = readFileSync(out, 'utf-8').trim().split('\n');
    const first = lines[1].split(',').slice(1).join(',');
    const last = lines[lines.length - 1].split(',').slice(1).join(',');
    expect(last).toBe(first);
  });

  it('skips unreadable images and logs them', () => {
    const dir = makeImageDir(3);
    writeFileSync(join(dir, 'broken.png'), Buffer.from('not a png'));
    const logged: string[] = [];
    const result = extractEmbeddings(dir, getBackbone('DinoV2Small'), join(dir, 'emb.csv'), {
      log: (m) => logged.push(m),
    });
    expect(result.rows).toBe(3);
    expect(result.skipped).toHaveLength(1);
    expect(logged[0]).toContain('broken.png');
  });

  it('honors an explicit id mapping', () => {
    const dir = makeImageDir(3);
    const ids = join(dir, 'ids.csv');
    writeFileSync(ids, 'id,filename\nzeta,img000.png\nalpha,img001.png\n');
    const pairs = resolveIds(dir, ids);
    expect(pairs.map((p) => p[0])).toEqual(['alpha', 'zeta']);
  });
});

describe('cli', () => {
  it('runs end to end via node', () => {
    const dir = makeImageDir(5);
    const out = join(dir, 'cli.csv');
    execFileSync('node', [
      'dist/cli.js',
      '--images', dir,
      '--backbone', 'DinoV2Small',
      '--out', out,
    ]);
    const lines = readFileSync(out, 'utf-8').trim().split('\n');
    expect(lines).toHaveLength(6);
  });
});
