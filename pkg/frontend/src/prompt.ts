/**
 * Frozen toy text embedder.
 *
 * A fixed vocabulary is mapped through a seeded random projection that is
 * never trained, standing in for a large pretrained text encoder. Any
 * embedder with the same (tokens -> [L, promptDim]) contract can be
 * substituted.
 */

import { Rng, Tensor } from "./tensor";

export const VOCABULARY = [
  "pad", "focus", "on", "the", "analyze", "scene", "a", "picture",
  "red", "green", "blue", "yellow",
  "circle", "square", "triangle",
  "left", "right", "top", "bottom", "center",
] as const;

export type Word = (typeof VOCABULARY)[number];

export class PromptEmbedder {
  readonly table: Float32Array;     // [vocab, dim], frozen
  readonly dim: number;
  readonly length: number;

  constructor(dim: number, length: number, seed = 7) {
    this.dim = dim;
    this.length = length;
    const rng = new Rng(seed);
    this.table = new Float32Array(VOCABULARY.length * dim);
    for (let i = 0; i < this.table.length; i++) {
      this.table[i] = rng.gaussian() / Math.sqrt(dim);
    }
  }

  tokenize(words: string[]): number[] {
    const ids = words.map((w) => {
      const idx = (VOCABULARY as readonly string[]).indexOf(w);
      if (idx < 0) throw new Error(`word not in toy vocabulary: ${w}`);
      return idx;
    });
    while (ids.length < this.length) ids.push(0);   // pad
    return ids.slice(0, this.length);
  }

  /** Embed one prompt per batch item: [B, length, dim], no gradient. */
  embedBatch(prompts: string[][]): Tensor {
    const B = prompts.length;
    const out = new Float32Array(B * this.length * this.dim);
    prompts.forEach((words, b) => {
      const ids = this.tokenize(words);
      ids.forEach((id, l) => {
        out.set(this.table.subarray(id * this.dim, (id + 1) * this.dim),
                (b * this.length + l) * this.dim);
      });
    });
    return new Tensor(out, [B, this.length, this.dim], false);
  }
}

export function specificPrompt(color: string, shape: string): string[] {
  return ["focus", "on", "the", color, shape];
}

export function genericPrompt(): string[] {
  return ["analyze", "the", "scene"];
}
