/**
 * Patch-embedding transformer encoder with gated cross-attention to the
 * prompt tokens. Each block applies self-attention, a learnable-gate
 * cross-attention that injects the prompt, and an MLP, all with residual
 * connections and pre-layer-norm. Every block also projects its token
 * state to a complex feature map for multi-scale supervision.
 */

import { CodecConfig, tokenCount } from "./config";
import {
  add, attnMix, attnScores, gelu, linear, layerNorm, param, patchify,
  Rng, scaleByGate, softmaxLast, Tensor, tensor, zeros,
} from "./tensor";

function ones(n: number): Tensor {
  const t = zeros([n], true);
  t.data.fill(1);
  return t;
}

class EncoderBlock {
  ln1g: Tensor; ln1b: Tensor;
  wq: Tensor; wk: Tensor; wv: Tensor; wo: Tensor;
  ln2g: Tensor; ln2b: Tensor;
  cq: Tensor; ck: Tensor; cv: Tensor; co: Tensor;
  gate: Tensor;
  ln3g: Tensor; ln3b: Tensor;
  w1: Tensor; b1: Tensor; w2: Tensor; b2: Tensor;

  constructor(dim: number, promptDim: number, rng: Rng) {
    this.ln1g = ones(dim); this.ln1b = zeros([dim], true);
    this.wq = param([dim, dim], rng); this.wk = param([dim, dim], rng);
    this.wv = param([dim, dim], rng); this.wo = param([dim, dim], rng);
    this.ln2g = ones(dim); this.ln2b = zeros([dim], true);
    this.cq = param([dim, dim], rng);
    this.ck = param([promptDim, dim], rng);
    this.cv = param([promptDim, dim], rng);
    this.co = param([dim, dim], rng);
    this.gate = tensor([0.1], [1]); this.gate.requiresGrad = true;
    this.ln3g = ones(dim); this.ln3b = zeros([dim], true);
    this.w1 = param([dim, 2 * dim], rng); this.b1 = zeros([2 * dim], true);
    this.w2 = param([2 * dim, dim], rng); this.b2 = zeros([dim], true);
  }

  forward(x: Tensor, prompt: Tensor): Tensor {
    // Self-attention.
    let h = layerNorm(x, this.ln1g, this.ln1b);
    const q = linear(h, this.wq, null);
    const k = linear(h, this.wk, null);
    const v = linear(h, this.wv, null);
    const att = softmaxLast(attnScores(q, k));
    let x1 = add(x, linear(attnMix(att, v), this.wo, null));

    // Gated cross-attention; keys and values come from the prompt tokens.
    h = layerNorm(x1, this.ln2g, this.ln2b);
    const cq = linear(h, this.cq, null);
    const ck = linear(prompt, this.ck, null);
    const cv = linear(prompt, this.cv, null);
    const catt = softmaxLast(attnScores(cq, ck));
    const injected = linear(attnMix(catt, cv), this.co, null);
    const x2 = add(x1, scaleByGate(injected, this.gate));

    // MLP.
    h = layerNorm(x2, this.ln3g, this.ln3b);
    const mid = gelu(linear(h, this.w1, this.b1));
    return add(x2, linear(mid, this.w2, this.b2));
  }

  params(): Tensor[] {
    return [this.ln1g, this.ln1b, this.wq, this.wk, this.wv, this.wo,
            this.ln2g, this.ln2b, this.cq, this.ck, this.cv, this.co, this.gate,
            this.ln3g, this.ln3b, this.w1, this.b1, this.w2, this.b2];
  }
}

export interface Encoded {
  /** Final semantic features, [B, N, 2*channels] (re/im interleaved). */
  features: Tensor;
  /** Per-block feature maps, one per encoder block. */
  blockFeatures: Tensor[];
}

export class Encoder {
  readonly cfg: CodecConfig;
  readonly patchW: Tensor;
  readonly patchB: Tensor;
  readonly posEmb: Tensor;
  readonly blocks: EncoderBlock[];
  readonly featW: Tensor[];
  readonly featB: Tensor[];

  constructor(cfg: CodecConfig, rng: Rng) {
    this.cfg = cfg;
    const p = 2 ** cfg.patchFactor;
    const patchDim = p * p * cfg.channels;
    this.patchW = param([patchDim, cfg.embedDim], rng);
    this.patchB = zeros([cfg.embedDim], true);
    this.posEmb = param([tokenCount(cfg), cfg.embedDim], rng, 0.02);
    this.blocks = Array.from({ length: cfg.depth },
                             () => new EncoderBlock(cfg.embedDim, cfg.promptDim, rng));
    this.featW = this.blocks.map(() => param([cfg.embedDim, 2 * cfg.channels], rng));
    this.featB = this.blocks.map(() => zeros([2 * cfg.channels], true));
  }

  /** image: [B, H, W, C] in [0, 1]; promptTokens: [B, L, promptDim]. */
  forward(image: Tensor, promptTokens: Tensor): Encoded {
    const B = image.shape[0];
    const p = 2 ** this.cfg.patchFactor;
    let x = linear(patchify(image, p), this.patchW, this.patchB);
    x = addPositional(x, this.posEmb);
    const blockFeatures: Tensor[] = [];
    this.blocks.forEach((block, i) => {
      x = block.forward(x, promptTokens);
      blockFeatures.push(linear(x, this.featW[i], this.featB[i]));
    });
    return { features: blockFeatures[blockFeatures.length - 1], blockFeatures };
  }

  params(): Tensor[] {
    const out = [this.patchW, this.patchB, this.posEmb,
                 ...this.featW, ...this.featB];
    for (const b of this.blocks) out.push(...b.params());
    return out;
  }

  setGates(value: number): void {
    for (const b of this.blocks) b.gate.data[0] = value;
  }
}

function addPositional(x: Tensor, pos: Tensor): Tensor {
  const [B, N, D] = x.shape;
  const out = zeros(x.shape);
  out.requiresGrad = x.requiresGrad || pos.requiresGrad;
  out.parents = [x, pos];
  out.backwardFn = () => {
    const g = out.grad!;
    if (x.requiresGrad) {
      const gx = x.ensureGrad();
      for (let i = 0; i < g.length; i++) gx[i] += g[i];
    }
    if (pos.requiresGrad) {
      const gp = pos.ensureGrad();
      for (let b = 0; b < B; b++) {
        const o = b * N * D;
        for (let i = 0; i < N * D; i++) gp[i] += g[o + i];
      }
    }
  };
  for (let b = 0; b < B; b++) {
    const o = b * N * D;
    for (let i = 0; i < N * D; i++) out.data[o + i] = x.data[o + i] + pos.data[i];
  }
  return out;
}
