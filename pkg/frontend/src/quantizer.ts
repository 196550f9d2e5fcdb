/**
 * Soft-to-hard vector quantizer over complex feature pairs.
 *
 * Features [B, N, 2C] are split into C two-real subvectors (one complex
 * value each) and matched against a learned codebook of complex points.
 * At high temperature the output is the softmax-weighted codebook mixture;
 * once the temperature reaches the hard threshold the forward pass emits
 * exact nearest-neighbor codes while the gradient keeps flowing through
 * the soft assignment (straight-through).
 */

import {
  add, linear, pairwiseSqDist, param, Rng, scale, softmaxLast, stopGrad, sub,
  Tensor,
} from "./tensor";

export class SoftToHardQuantizer {
  readonly codebook: Tensor;      // [K, 2]
  temperature: number;

  constructor(codebookSize: number, rng: Rng, temperature: number,
              readonly hardThreshold: number) {
    this.codebook = param([codebookSize, 2], rng, 0.5);
    this.temperature = temperature;
  }

  get size(): number {
    return this.codebook.shape[0];
  }

  /** Differentiable quantization; returns features with the same shape. */
  forward(features: Tensor): Tensor {
    const flat = features.reshape([features.size / 2, 2]);
    const d2 = pairwiseSqDist(flat, this.codebook);
    const soft = softmaxLast(scale(d2, -1 / this.temperature));
    const softOut = linear(soft, this.codebook, null);
    if (this.temperature > this.hardThreshold) {
      return softOut.reshape(features.shape);
    }
    const hard = this.hardValues(features);
    // Forward equals the hard codes; gradient follows the soft path.
    const bridge = stopGrad(sub(new Tensor(hard, softOut.shape, false), softOut));
    return add(softOut, bridge).reshape(features.shape);
  }

  /** Nearest-neighbor code indices, one per complex feature. */
  hardIndices(features: Tensor): Int32Array {
    const rows = features.size / 2;
    const out = new Int32Array(rows);
    const cb = this.codebook.data;
    const K = this.size;
    for (let r = 0; r < rows; r++) {
      const fr = features.data[2 * r];
      const fi = features.data[2 * r + 1];
      let best = 0;
      let bestDist = Infinity;
      for (let k = 0; k < K; k++) {
        const dr = fr - cb[2 * k];
        const di = fi - cb[2 * k + 1];
        const d = dr * dr + di * di;
        if (d < bestDist) {
          bestDist = d;
          best = k;
        }
      }
      out[r] = best;
    }
    return out;
  }

  hardValues(features: Tensor): Float32Array {
    const idx = this.hardIndices(features);
    return this.lookup(idx);
  }

  lookup(indices: Int32Array): Float32Array {
    const out = new Float32Array(indices.length * 2);
    for (let r = 0; r < indices.length; r++) {
      out[2 * r] = this.codebook.data[2 * indices[r]];
      out[2 * r + 1] = this.codebook.data[2 * indices[r] + 1];
    }
    return out;
  }

  anneal(decay: number): void {
    this.temperature = Math.max(this.temperature * decay, this.hardThreshold);
  }

  params(): Tensor[] {
    return [this.codebook];
  }
}
