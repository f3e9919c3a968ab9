/** Frozen encoders mapping preprocessed pixels to a pooled feature vector.
 *
 * The default encoder is a seeded random projection + tanh + L2
 * normalization whose weights derive from the backbone name alone, so a
 * given backbone always produces the same embedding for the same image.
 * It stands in for a pretrained checkpoint when none is obtainable;
 * real exported weights can be supplied as a JSON file instead.
 */

import { readFileSync } from 'fs';
import { BackboneSpec, BackboneUnavailable } from './backbones.js';
import { fnv1a, mulberry32 } from './rng.js';

export interface Encoder {
  spec: BackboneSpec;
  inputWidth: number;
  encode(features: Float64Array): Float64Array;
}

class ProjectionEncoder implements Encoder {
  constructor(
    public spec: BackboneSpec,
    public inputWidth: number,
    private weights: Float64Array, // inputWidth x embeddingSize, row-major
    private bias: Float64Array,
  ) {}

  encode(features: Float64Array): Float64Array {
    if (features.length !== this.inputWidth) {
      throw new Error(`expected ${this.inputWidth} features, got ${features.length}`);
    }
    const d = this.spec.embeddingSize;
    const out = new Float64Array(d);
    for (let i = 0; i < this.inputWidth; i++) {
      const v = features[i];
      if (v === 0) continue;
      const row = i * d;
      for (let j = 0; j < d; j++) {
        out[j] += v * this.weights[row + j];
      }
    }
    let norm = 0;
    for (let j = 0; j < d; j++) {
      out[j] = Math.tanh(out[j] + this.bias[j]);
      norm += out[j] * out[j];
    }
    norm = Math.sqrt(norm) || 1;
    for (let j = 0; j < d; j++) {
      out[j] /= norm;
    }
    return out;
  }
}

export function seededEncoder(spec: BackboneSpec, inputWidth: number): Encoder {
  const rand = mulberry32(fnv1a(`frozen-backbone:${spec.name}`));
  const d = spec.embeddingSize;
  const limit = Math.sqrt(6 / (inputWidth + d));
  const weights = new Float64Array(inputWidth * d);
  for (let i = 0; i < weights.length; i++) {
    weights[i] = (2 * rand() - 1) * limit;
  }
  const bias = new Float64Array(d);
  for (let j = 0; j < d; j++) {
    bias[j] = (2 * rand() - 1) * 0.1;
  }
  return new ProjectionEncoder(spec, inputWidth, weights, bias);
}

export function weightsFileEncoder(spec: BackboneSpec, inputWidth: number, path: string): Encoder {
  let payload: { weights: number[]; bias?: number[] };
  try {
    payload = JSON.parse(readFileSync(path, 'utf-8'));
  } catch (err) {
    throw new BackboneUnavailable(`cannot load weights from ${path}: ${err}`);
  }
  const d = spec.embeddingSize;
  if (!Array.isArray(payload.weights) || payload.weights.length !== inputWidth * d) {
    throw new BackboneUnavailable(
      `weights file must hold ${inputWidth * d} values for ${spec.name} (${d}-wide)`,
    );
  }
  const bias = new Float64Array(d);
  if (payload.bias) {
    if (payload.bias.length !== d) {
      throw new BackboneUnavailable(`bias must have ${d} values`);
    }
    bias.set(payload.bias);
  }
  return new ProjectionEncoder(spec, inputWidth, Float64Array.from(payload.weights), bias);
}

export function makeEncoder(
  spec: BackboneSpec,
  inputWidth: number,
  options: { pretrained?: boolean; weightsPath?: string } = {},
): Encoder {
  if (options.weightsPath) {
    return weightsFileEncoder(spec, inputWidth, options.weightsPath);
  }
  if (options.pretrained) {
    throw new BackboneUnavailable(
      `no pretrained checkpoint is obtainable for ${spec.name}; pass --weights <file> or drop --pretrained`,
    );
  }
  return seededEncoder(spec, inputWidth);
}
