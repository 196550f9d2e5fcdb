/**
 * Training loop: minimize the weighted multi-scale structural similarity
 * loss sum_b lambda_b * (1 - MS-SSIM(I_b, recon_b)) where I_b is the
 * reference image pooled down to stage b's resolution. Channel noise is
 * injected at the feature level during training so the decoder learns to
 * lean on the prompt when features are unreliable.
 */

import { SemanticCodec } from "./codec";
import { batchImages, Scene, scenePrompts } from "./dataset";
import { msssim } from "./msssim";
import { Adam, addScalars, avgPool2x2, backward, Rng, scale, addConst, Tensor } from "./tensor";

export interface TrainOptions {
  epochs: number;
  batchSize: number;
  lr: number;
  noiseSnrDbRange: [number, number] | null;   // null trains noiseless
  promptDropout: number;                      // fraction swapped to the generic prompt
  seed: number;
  log?: (msg: string) => void;
}

export interface TrainResult {
  epochLosses: number[];
  stepLosses: number[];
}

export class TrainingDiverged extends Error {}

export function trainCodec(codec: SemanticCodec, scenes: Scene[],
                           opts: TrainOptions): TrainResult {
  const rng = new Rng(opts.seed);
  const optimizer = new Adam(codec.params(), opts.lr);
  const epochLosses: number[] = [];
  const stepLosses: number[] = [];
  const { height, width } = codec.cfg;

  for (let epoch = 0; epoch < opts.epochs; epoch++) {
    const order = shuffled(scenes.length, rng);
    let epochLoss = 0;
    let batches = 0;
    for (let start = 0; start + opts.batchSize <= scenes.length; start += opts.batchSize) {
      const batch = order.slice(start, start + opts.batchSize).map((i) => scenes[i]);
      const images = batchImages(batch, height, width);
      const generic = rng.next() < opts.promptDropout;
      const prompts = scenePrompts(batch, generic);
      const snr = opts.noiseSnrDbRange === null
        ? null
        : rng.uniform(opts.noiseSnrDbRange[0], opts.noiseSnrDbRange[1]);

      const { recons } = codec.forwardTrain(images, prompts, snr, rng);
      const loss = stageLoss(images, recons, codec.cfg.lossWeights);
      const value = loss.item();
      if (!Number.isFinite(value)) {
        throw new TrainingDiverged(
          `non-finite loss at epoch ${epoch}, step ${batches}: ${value}`);
      }
      optimizer.zeroGrad();
      backward(loss);
      optimizer.step();
      stepLosses.push(value);
      epochLoss += value;
      batches += 1;
    }
    codec.quantizer.anneal(codec.cfg.temperatureDecay);
    epochLosses.push(epochLoss / Math.max(batches, 1));
    opts.log?.(`epoch ${epoch}: loss ${epochLosses[epoch].toFixed(4)} ` +
               `temperature ${codec.quantizer.temperature.toFixed(3)}`);
  }
  return { epochLosses, stepLosses };
}

/** Weighted sum over stages of (1 - MS-SSIM) against the pooled reference. */
export function stageLoss(images: Tensor, recons: Tensor[], weights: number[]): Tensor {
  const terms: Tensor[] = [];
  for (let s = 0; s < recons.length; s++) {
    // recons are ordered coarse -> fine; the last one is full resolution.
    let target = images;
    for (let k = 0; k < recons.length - 1 - s; k++) target = avgPool2x2(target);
    const quality = msssim(recons[s], target);
    terms.push(addConst(scale(quality, -1), 1));
  }
  // weights are ordered finest first per the config contract.
  const stageWeights = [...weights].reverse();
  return addScalars(terms, stageWeights);
}

function shuffled(n: number, rng: Rng): number[] {
  const idx = Array.from({ length: n }, (_, i) => i);
  for (let i = n - 1; i > 0; i--) {
    const j = rng.int(i + 1);
    [idx[i], idx[j]] = [idx[j], idx[i]];
  }
  return idx;
}
