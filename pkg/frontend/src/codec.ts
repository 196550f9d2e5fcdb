/**
 * End-to-end prompt-aware codec: encoder, soft-to-hard quantizer and
 * FiLM-conditioned decoder, plus the digital transmit path used for
 * evaluation and calibration.
 */

import { cosineSimilarity, featureNoise, transmitIndices } from "./channel";
import { CodecConfig, defaultConfig, validateConfig } from "./config";
import { Decoder } from "./decoder";
import { Encoded, Encoder } from "./encoder";
import { PromptEmbedder } from "./prompt";
import { SoftToHardQuantizer } from "./quantizer";
import { add, Rng, Tensor } from "./tensor";
import * as fs from "fs";

export interface TransmitResult {
  reconstruction: Tensor;      // finest-stage output, [B, H, W, C]
  cosSim: number[];            // per sample, encoder features vs received
  features: Tensor;            // pre-quantization encoder output
}

export class SemanticCodec {
  readonly cfg: CodecConfig;
  readonly embedder: PromptEmbedder;
  readonly encoder: Encoder;
  readonly quantizer: SoftToHardQuantizer;
  readonly decoder: Decoder;

  constructor(cfg?: Partial<CodecConfig>) {
    this.cfg = defaultConfig(cfg);
    const bad = validateConfig(this.cfg);
    if (bad.length) throw new Error(`invalid codec config: ${bad.join("; ")}`);
    const rng = new Rng(this.cfg.seed);
    this.embedder = new PromptEmbedder(this.cfg.promptDim, this.cfg.promptLength);
    this.encoder = new Encoder(this.cfg, rng);
    this.quantizer = new SoftToHardQuantizer(
      this.cfg.codebookSize, rng, this.cfg.temperatureStart, this.cfg.hardThreshold);
    this.decoder = new Decoder(this.cfg, rng);
  }

  params(): Tensor[] {
    return [...this.encoder.params(), ...this.quantizer.params(),
            ...this.decoder.params()];
  }

  encode(images: Tensor, prompts: string[][]): Encoded {
    return this.encoder.forward(images, this.embedder.embedBatch(prompts));
  }

  /** Differentiable train-time pass with optional feature-level noise. */
  forwardTrain(images: Tensor, prompts: string[][], noiseSnrDb: number | null,
               rng: Rng): { recons: Tensor[]; encoded: Encoded } {
    const promptTokens = this.embedder.embedBatch(prompts);
    const encoded = this.encoder.forward(images, promptTokens);
    let z = this.quantizer.forward(encoded.features);
    if (noiseSnrDb !== null) {
      z = add(z, featureNoise(z, noiseSnrDb, rng));
    }
    const recons = this.decoder.forward(z, promptTokens);
    return { recons, encoded };
  }

  /** Hard quantization, Gray/QAM transmission at snrDb, decode. */
  transmit(images: Tensor, prompts: string[][], snrDb: number, order: number,
           rng: Rng): TransmitResult {
    const promptTokens = this.embedder.embedBatch(prompts);
    const encoded = this.encoder.forward(images, promptTokens);
    const sent = this.quantizer.hardIndices(encoded.features);
    const bitsPerIndex = Math.ceil(Math.log2(this.quantizer.size));
    const received = transmitIndices(sent, bitsPerIndex, order, snrDb, rng);
    for (let i = 0; i < received.length; i++) {
      if (received[i] >= this.quantizer.size) received[i] = this.quantizer.size - 1;
    }
    const values = this.quantizer.lookup(received);
    const fHat = new Tensor(values, encoded.features.shape, false);
    const recons = this.decoder.forward(fHat, promptTokens);

    const B = images.shape[0];
    const per = encoded.features.size / B;
    const cosSim: number[] = [];
    for (let b = 0; b < B; b++) {
      cosSim.push(cosineSimilarity(
        encoded.features.data.slice(b * per, (b + 1) * per) as Float32Array,
        fHat.data.slice(b * per, (b + 1) * per) as Float32Array));
    }
    return { reconstruction: recons[recons.length - 1], cosSim, features: encoded.features };
  }

  /** Noiseless decode of the hard-quantized features. */
  reconstruct(images: Tensor, prompts: string[][]): Tensor {
    const promptTokens = this.embedder.embedBatch(prompts);
    const encoded = this.encoder.forward(images, promptTokens);
    const values = this.quantizer.hardValues(encoded.features);
    const fHat = new Tensor(values, encoded.features.shape, false);
    const recons = this.decoder.forward(fHat, promptTokens);
    return recons[recons.length - 1];
  }

  save(path: string): void {
    const payload = {
      version: 1,
      cfg: this.cfg,
      temperature: this.quantizer.temperature,
      params: this.params().map((p) => Array.from(p.data)),
    };
    fs.writeFileSync(path, JSON.stringify(payload));
  }

  static load(path: string): SemanticCodec {
    const payload = JSON.parse(fs.readFileSync(path, "utf8"));
    if (payload.version !== 1) throw new Error(`unsupported codec version ${payload.version}`);
    const codec = new SemanticCodec(payload.cfg);
    codec.quantizer.temperature = payload.temperature;
    const params = codec.params();
    if (params.length !== payload.params.length) {
      throw new Error("checkpoint does not match the model layout");
    }
    params.forEach((p, i) => p.data.set(payload.params[i]));
    return codec;
  }
}
