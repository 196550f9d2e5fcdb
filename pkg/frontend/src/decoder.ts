/**
 * FiLM-conditioned convolutional decoder.
 *
 * The received feature grid is adapted by a 1x1 projection, refined at the
 * token resolution, then upsampled stage by stage back to the image size.
 * Every stage re-aligns the (upsampled) feature grid, modulates the
 * normalized activations with FiLM parameters computed from the pooled
 * prompt embedding, refines with a small conv block, and emits its own
 * reconstruction for multi-scale supervision. The finest reconstruction is
 * the decoder output.
 */

import { CodecConfig } from "./config";
import {
  add, conv3x3, filmMod, gelu, layerNorm, linear, meanTokens, param, Rng,
  sigmoid, Tensor, upsample2x, zeros,
} from "./tensor";

function ones(n: number): Tensor {
  const t = zeros([n], true);
  t.data.fill(1);
  return t;
}

class Stage {
  alignW: Tensor; alignB: Tensor;
  lnG: Tensor; lnB: Tensor;
  gammaW: Tensor; gammaB: Tensor;
  betaW: Tensor; betaB: Tensor;
  conv1W: Tensor; conv1B: Tensor;
  conv2W: Tensor; conv2B: Tensor;
  headW: Tensor | null = null;
  headB: Tensor | null = null;

  constructor(featDim: number, ch: number, promptDim: number, rng: Rng,
              withHead: boolean, outChannels: number) {
    this.alignW = param([featDim, ch], rng);
    this.alignB = zeros([ch], true);
    this.lnG = ones(ch); this.lnB = zeros([ch], true);
    this.gammaW = param([promptDim, ch], rng, 0.1);
    this.gammaB = zeros([ch], true);
    this.betaW = param([promptDim, ch], rng, 0.1);
    this.betaB = zeros([ch], true);
    const convScale = 1 / Math.sqrt(9 * ch);
    this.conv1W = param([3, 3, ch, ch], rng, convScale);
    this.conv1B = zeros([ch], true);
    this.conv2W = param([ch, ch], rng);          // 1x1 mixing conv
    this.conv2B = zeros([ch], true);
    if (withHead) {
      this.headW = param([3, 3, ch, outChannels], rng, convScale);
      this.headB = zeros([outChannels], true);
    }
  }

  refine(u: Tensor, pooledPrompt: Tensor, filmIdentity: boolean): Tensor {
    const normed = layerNorm(u, this.lnG, this.lnB);
    let modulated: Tensor;
    if (filmIdentity) {
      modulated = normed;   // gamma = 1, beta = 0 exactly
    } else {
      const gamma = linear(pooledPrompt, this.gammaW, this.gammaB);
      const beta = linear(pooledPrompt, this.betaW, this.betaB);
      const gammaOne = addOne(gamma);
      modulated = filmMod(normed, gammaOne, beta);
    }
    const refined = linear(gelu(conv3x3(modulated, this.conv1W, this.conv1B)),
                           this.conv2W, this.conv2B);
    return add(modulated, refined);
  }

  reconstruct(u: Tensor): Tensor {
    if (!this.headW) throw new Error("stage has no reconstruction head");
    return sigmoid(conv3x3(u, this.headW, this.headB));
  }

  params(): Tensor[] {
    const out = [this.alignW, this.alignB, this.lnG, this.lnB,
                 this.gammaW, this.gammaB, this.betaW, this.betaB,
                 this.conv1W, this.conv1B, this.conv2W, this.conv2B];
    if (this.headW && this.headB) out.push(this.headW, this.headB);
    return out;
  }
}

function addOne(t: Tensor): Tensor {
  const out = zeros(t.shape);
  out.requiresGrad = t.requiresGrad;
  out.parents = [t];
  out.backwardFn = () => {
    if (!t.requiresGrad) return;
    const g = out.grad!;
    const gt = t.ensureGrad();
    for (let i = 0; i < g.length; i++) gt[i] += g[i];
  };
  for (let i = 0; i < t.size; i++) out.data[i] = 1 + t.data[i];
  return out;
}

export class Decoder {
  readonly cfg: CodecConfig;
  readonly seed: Stage;
  readonly stages: Stage[];
  /** Force gamma = 1, beta = 0 so the prompt is ignored (diagnostics). */
  filmIdentity = false;

  constructor(cfg: CodecConfig, rng: Rng) {
    this.cfg = cfg;
    const featDim = 2 * cfg.channels;
    this.seed = new Stage(featDim, cfg.decoderChannels, cfg.promptDim, rng,
                          false, cfg.channels);
    this.stages = Array.from({ length: cfg.patchFactor }, () =>
      new Stage(featDim, cfg.decoderChannels, cfg.promptDim, rng,
                true, cfg.channels));
  }

  /**
   * features: [B, N, 2C] received (possibly noisy) semantic features;
   * promptTokens: [B, L, promptDim].
   * Returns per-stage reconstructions ordered coarse to fine; the last
   * entry has the full image resolution.
   */
  forward(features: Tensor, promptTokens: Tensor): Tensor[] {
    const cfg = this.cfg;
    const B = features.shape[0];
    const grid = cfg.height / 2 ** cfg.patchFactor;
    const pooled = meanTokens(promptTokens);

    let featGrid = features.reshape([B, grid, grid, 2 * cfg.channels]);
    let u = linear(featGrid, this.seed.alignW, this.seed.alignB);
    u = this.seed.refine(u, pooled, this.filmIdentity);

    const recons: Tensor[] = [];
    for (const stage of this.stages) {
      u = upsample2x(u);
      featGrid = upsample2x(featGrid);
      u = add(u, linear(featGrid, stage.alignW, stage.alignB));
      u = stage.refine(u, pooled, this.filmIdentity);
      recons.push(stage.reconstruct(u));
    }
    return recons;
  }

  params(): Tensor[] {
    const out = this.seed.params();
    for (const s of this.stages) out.push(...s.params());
    return out;
  }
}
