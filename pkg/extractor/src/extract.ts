/** The extraction operation: image directory -> embedding CSV. */

import { readFileSync, readdirSync, writeFileSync } from 'fs';
import { basename, extname, join } from 'path';
import { BackboneSpec } from './backbones.js';
import { UnreadableImage, decodeImage, preprocess } from './image.js';
import { Encoder, makeEncoder } from './model.js';

const GRID = 32;
export const INPUT_WIDTH = GRID * GRID * 3;

export interface ExtractOptions {
  idsPath?: string;
  pretrained?: boolean;
  weightsPath?: string;
  log?: (message: string) => void;
}

export interface ExtractResult {
  rows: number;
  skipped: string[];
  outPath: string;
}

/** Fixed 8-significant-digit formatting keeps reruns bitwise identical. */
export function formatValue(v: number): string {
  return v.toPrecision(8);
}

const IMAGE_EXTENSIONS = new Set(['.png', '.jpg', '.jpeg']);

/** (id, path) pairs sorted by id: filename stems or an explicit id,filename CSV. */
export function resolveIds(imageDir: string, idsPath?: string): Array<[string, string]> {
  if (idsPath) {
    const lines = readFileSync(idsPath, 'utf-8').split('\n').filter((l) => l.trim() !== '');
    const pairs: Array<[string, string]> = [];
    for (const line of lines.slice(1)) {
      const comma = line.indexOf(',');
      if (comma < 0) {
        throw new Error(`ids file line is not 'id,filename': ${line}`);
      }
      pairs.push([line.slice(0, comma).trim(), join(imageDir, line.slice(comma + 1).trim())]);
    }
    return pairs.sort((a, b) => (a[0] < b[0] ? -1 : a[0] > b[0] ? 1 : 0));
  }
  const files = readdirSync(imageDir)
    .filter((f) => IMAGE_EXTENSIONS.has(extname(f).toLowerCase()))
    .sort();
  return files.map((f) => [basename(f, extname(f)), join(imageDir, f)]);
}

export function extractEmbeddings(
  imageDir: string,
  spec: BackboneSpec,
  outPath: string,
  options: ExtractOptions = {},
): ExtractResult {
  const log = options.log ?? ((m: string) => console.error(m));
  const encoder: Encoder = makeEncoder(spec, INPUT_WIDTH, {
    pretrained: options.pretrained,
    weightsPath: options.weightsPath,
  });

  const pairs = resolveIds(imageDir, options.idsPath);
  const header = ['id'];
  for (let j = 0; j < spec.embeddingSize; j++) {
    header.push(`e${j}`);
  }
  const lines = [header.join(',')];
  const skipped: string[] = [];
  for (const [id, path] of pairs) {
    let embedding: Float64Array;
    try {
      const image = decodeImage(path);
      embedding = encoder.encode(preprocess(image, spec, GRID));
    } catch (err) {
      if (err instanceof UnreadableImage) {
        skipped.push(path);
        log(`skipping unreadable image ${path}: ${err.message}`);
        continue;
      }
      throw err;
    }
    const row = new Array<string>(spec.embeddingSize + 1);
    row[0] = id;
    for (let j = 0; j < spec.embeddingSize; j++) {
      row[j + 1] = formatValue(embedding[j]);
    }
    lines.push(row.join(','));
  }
  writeFileSync(outPath, lines.join('\n') + '\n');
  return { rows: lines.length - 1, skipped, outPath };
}
