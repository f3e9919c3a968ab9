/** Image decoding (PNG/JPEG) and deterministic preprocessing. */

import { readFileSync } from 'fs';
import { extname } from 'path';
import jpeg from 'jpeg-js';
import { PNG } from 'pngjs';
import { BackboneSpec } from './backbones.js';

export class UnreadableImage extends Error {}

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major RGB triples in [0, 1]. */
  data: Float64Array;
}

export function decodeImage(path: string): RgbImage {
  let buffer: Buffer;
  try {
    buffer = readFileSync(path);
  } catch (err) {
    throw new UnreadableImage(`cannot read ${path}: ${err}`);
  }
  const ext = extname(path).toLowerCase();
  try {
    if (ext === '.png') {
      const png = PNG.sync.read(buffer);
      return rgbaToRgb(png.width, png.height, png.data);
    }
    if (ext === '.jpg' || ext === '.jpeg') {
      const decoded = jpeg.decode(buffer, { useTArray: true, maxMemoryUsageInMB: 512 });
      return rgbaToRgb(decoded.width, decoded.height, decoded.data);
    }
  } catch (err) {
    throw new UnreadableImage(`cannot decode ${path}: ${err}`);
  }
  throw new UnreadableImage(`unsupported image type: ${path}`);
}

function rgbaToRgb(width: number, height: number, rgba: Uint8Array): RgbImage {
  const data = new Float64Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    data[3 * i] = rgba[4 * i] / 255;
    data[3 * i + 1] = rgba[4 * i + 1] / 255;
    data[3 * i + 2] = rgba[4 * i + 2] / 255;
  }
  return { width, height, data };
}

export function resizeBilinear(img: RgbImage, size: number): RgbImage {
  const out = new Float64Array(size * size * 3);
  const scaleX = img.width / size;
  const scaleY = img.height / size;
  for (let y = 0; y < size; y++) {
    const sy = Math.min((y + 0.5) * scaleY - 0.5, img.height - 1);
    const y0 = Math.max(Math.floor(sy), 0);
    const y1 = Math.min(y0 + 1, img.height - 1);
    const fy = Math.min(Math.max(sy - y0, 0), 1);
    for (let x = 0; x < size; x++) {
      const sx = Math.min((x + 0.5) * scaleX - 0.5, img.width - 1);
      const x0 = Math.max(Math.floor(sx), 0);
      const x1 = Math.min(x0 + 1, img.width - 1);
      const fx = Math.min(Math.max(sx - x0, 0), 1);
      for (let c = 0; c < 3; c++) {
        const p00 = img.data[(y0 * img.width + x0) * 3 + c];
        const p01 = img.data[(y0 * img.width + x1) * 3 + c];
        const p10 = img.data[(y1 * img.width + x0) * 3 + c];
        const p11 = img.data[(y1 * img.width + x1) * 3 + c];
        const top = p00 + (p01 - p00) * fx;
        const bottom = p10 + (p11 - p10) * fx;
        out[(y * size + x) * 3 + c] = top + (bottom - top) * fy;
      }
    }
  }
  return { width: size, height: size, data: out };
}

/** Resize, normalize with the backbone's recipe, average-pool to a grid. */
export function preprocess(img: RgbImage, spec: BackboneSpec, grid = 32): Float64Array {
  const resized = resizeBilinear(img, spec.inputSize);
  const cell = spec.inputSize / grid;
  const out = new Float64Array(grid * grid * 3);
  for (let gy = 0; gy < grid; gy++) {
    for (let gx = 0; gx < grid; gx++) {
      const sums = [0, 0, 0];
      let count = 0;
      for (let y = Math.floor(gy * cell); y < Math.floor((gy + 1) * cell); y++) {
        for (let x = Math.floor(gx * cell); x < Math.floor((gx + 1) * cell); x++) {
          for (let c = 0; c < 3; c++) {
            sums[c] += resized.data[(y * spec.inputSize + x) * 3 + c];
          }
          count++;
        }
      }
      for (let c = 0; c < 3; c++) {
        const meanPixel = sums[c] / count;
        out[(gy * grid + gx) * 3 + c] = (meanPixel - spec.mean[c]) / spec.std[c];
      }
    }
  }
  return out;
}
