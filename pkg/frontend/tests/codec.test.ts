import { describe, expect, it } from "vitest";
import { transmitIndices, qamDemodulate, qamModulate } from "../src/channel";
import { tokenCount } from "../src/config";
import { SemanticCodec } from "../src/codec";
import { batchImages, makeDataset, makeScene, scenePrompts } from "../src/dataset";
import { msssimValue, ssim } from "../src/msssim";
import { genericPrompt, PromptEmbedder, specificPrompt } from "../src/prompt";
import { SoftToHardQuantizer } from "../src/quantizer";
import { pairedTTestGreater, signTestGreater } from "../src/stats";
import { backward, meanAll, mul, param, Rng, Tensor } from "../src/tensor";

const SMALL = { height: 16, width: 16, patchFactor: 2, embedDim: 16,
                decoderChannels: 8, depth: 2, seed: 11 };

describe("encoder", () => {
  it("token count is HW / 2^2d", () => {
    const codec = new SemanticCodec(SMALL);
    expect(tokenCount(codec.cfg)).toBe((16 * 16) / 16);
    const scenes = makeDataset(2, new Rng(0), 16, 16);
    const enc = codec.encode(batchImages(scenes, 16, 16), scenePrompts(scenes));
    expect(enc.features.shape).toEqual([2, 16, 6]);
    expect(enc.blockFeatures).toHaveLength(2);
  });

  it("zero gates make the encoding prompt-independent", () => {
    const codec = new SemanticCodec(SMALL);
    codec.encoder.setGates(0);
    const scenes = makeDataset(2, new Rng(1), 16, 16);
    const images = batchImages(scenes, 16, 16);
    const a = codec.encode(images, scenes.map(() => specificPrompt("red", "circle")));
    const b = codec.encode(images, scenes.map(() => genericPrompt()));
    expect(Array.from(a.features.data)).toEqual(Array.from(b.features.data));
  });

  it("nonzero gates inject the prompt", () => {
    const codec = new SemanticCodec(SMALL);
    codec.encoder.setGates(1.0);
    const scenes = makeDataset(2, new Rng(1), 16, 16);
    const images = batchImages(scenes, 16, 16);
    const a = codec.encode(images, scenes.map(() => specificPrompt("red", "circle")));
    const b = codec.encode(images, scenes.map(() => genericPrompt()));
    expect(Array.from(a.features.data)).not.toEqual(Array.from(b.features.data));
  });

  it("is deterministic for a fixed seed and inputs", () => {
    const make = () => {
      const codec = new SemanticCodec(SMALL);
      const scenes = makeDataset(1, new Rng(5), 16, 16);
      return codec.encode(batchImages(scenes, 16, 16), scenePrompts(scenes));
    };
    expect(Array.from(make().features.data)).toEqual(Array.from(make().features.data));
  });
});

describe("soft-to-hard quantizer", () => {
  it("annealing limit emits exact nearest-neighbor codes", () => {
    const rng = new Rng(3);
    const q = new SoftToHardQuantizer(8, rng, 2.0, 0.05);
    for (let i = 0; i < 40; i++) q.anneal(0.5);
    expect(q.temperature).toBe(0.05);
    const feats = param([6, 2], rng);
    const out = q.forward(feats);
    const hard = q.hardValues(feats);
    for (let i = 0; i < out.size; i++) expect(out.data[i]).toBeCloseTo(hard[i], 6);
  });

  it("one-entry codebook maps everything to it", () => {
    const rng = new Rng(4);
    const q = new SoftToHardQuantizer(1, rng, 0.01, 0.05);
    const feats = param([5, 2], rng);
    const out = q.forward(feats);
    for (let r = 0; r < 5; r++) {
      expect(out.data[2 * r]).toBeCloseTo(q.codebook.data[0], 6);
      expect(out.data[2 * r + 1]).toBeCloseTo(q.codebook.data[1], 6);
    }
  });

  it("soft assignment gradient matches finite differences", () => {
    const rng = new Rng(5);
    const q = new SoftToHardQuantizer(4, rng, 1.0, 0.05);
    const feats = param([3, 2], rng);
    const f = () => meanAll(mul(q.forward(feats), q.forward(feats)));
    backward(f());
    const analytic = feats.grad!.slice();
    const h = 1e-3;
    for (let i = 0; i < feats.size; i++) {
      const orig = feats.data[i];
      feats.data[i] = orig + h;
      const up = f().item();
      feats.data[i] = orig - h;
      const down = f().item();
      feats.data[i] = orig;
      const numeric = (up - down) / (2 * h);
      expect(Math.abs(analytic[i] - numeric)).toBeLessThan(1e-3 * Math.max(1, Math.abs(numeric)));
    }
  });

  it("straight-through keeps a soft gradient in hard mode", () => {
    const rng = new Rng(6);
    const q = new SoftToHardQuantizer(4, rng, 0.05, 0.05);   // hard forward
    const feats = param([3, 2], rng);
    backward(meanAll(q.forward(feats)));
    const total = feats.grad!.reduce((s, g) => s + Math.abs(g), 0);
    expect(total).toBeGreaterThan(0);
  });
});

describe("decoder", () => {
  it("reconstruction has the image shape, coarse to fine", () => {
    const codec = new SemanticCodec(SMALL);
    const scenes = makeDataset(2, new Rng(2), 16, 16);
    const { recons } = codec.forwardTrain(batchImages(scenes, 16, 16),
                                          scenePrompts(scenes), null, new Rng(0));
    expect(recons).toHaveLength(2);            // one per upsampling stage (d = 2)
    expect(recons[0].shape).toEqual([2, 8, 8, 3]);
    expect(recons[1].shape).toEqual([2, 16, 16, 3]);
  });

  it("film identity makes the decoder ignore the prompt", () => {
    const codec = new SemanticCodec(SMALL);
    codec.decoder.filmIdentity = true;
    const scenes = makeDataset(2, new Rng(3), 16, 16);
    const images = batchImages(scenes, 16, 16);
    const enc = codec.encode(images, scenePrompts(scenes));
    const f = new Tensor(codec.quantizer.hardValues(enc.features),
                         enc.features.shape, false);
    const a = codec.decoder.forward(f, codec.embedder.embedBatch(
      scenes.map(() => specificPrompt("blue", "square"))));
    const b = codec.decoder.forward(f, codec.embedder.embedBatch(
      scenes.map(() => genericPrompt())));
    expect(Array.from(a[a.length - 1].data)).toEqual(Array.from(b[b.length - 1].data));
  });
});

describe("msssim", () => {
  it("identical images score one", () => {
    const scenes = makeDataset(1, new Rng(7), 16, 16);
    const x = batchImages(scenes, 16, 16);
    expect(msssimValue(x, x)).toBeCloseTo(1.0, 5);
    expect(ssim(x, x).item()).toBeCloseTo(1.0, 5);
  });

  it("noise lowers the score and stays in range", () => {
    const scenes = makeDataset(1, new Rng(8), 16, 16);
    const x = batchImages(scenes, 16, 16);
    const rng = new Rng(9);
    const noisy = new Tensor(
      Float32Array.from(x.data, (v) => Math.min(1, Math.max(0, v + 0.2 * rng.gaussian()))),
      x.shape);
    const score = msssimValue(x, noisy);
    expect(score).toBeLessThan(0.95);
    expect(score).toBeGreaterThan(0.0);
  });
});

describe("digital channel", () => {
  it("qam round-trips bits at every order", () => {
    const rng = new Rng(10);
    for (const order of [4, 16, 64, 256]) {
      const k = Math.log2(order);
      const bits = new Uint8Array(32 * k);
      for (let i = 0; i < bits.length; i++) bits[i] = rng.int(2);
      expect(Array.from(qamDemodulate(qamModulate(bits, order), order)))
        .toEqual(Array.from(bits));
    }
  });

  it("index transmission is lossless at very high snr", () => {
    const rng = new Rng(11);
    const idx = new Int32Array(64).map(() => rng.int(16));
    const rx = transmitIndices(idx, 4, 16, 60.0, rng);
    expect(Array.from(rx)).toEqual(Array.from(idx));
  });

  it("index transmission corrupts at very low snr", () => {
    const rng = new Rng(12);
    const idx = new Int32Array(256).map(() => rng.int(16));
    const rx = transmitIndices(idx, 4, 16, -10.0, rng);
    let diff = 0;
    for (let i = 0; i < idx.length; i++) if (idx[i] !== rx[i]) diff++;
    expect(diff).toBeGreaterThan(20);
  });
});

describe("dataset", () => {
  it("scenes carry nonempty masks matching the prompt", () => {
    const rng = new Rng(13);
    for (let i = 0; i < 10; i++) {
      const scene = makeScene(rng, 24, 24);
      const area = scene.mask.reduce((s, m) => s + m, 0);
      expect(area).toBeGreaterThan(20);
      expect(scene.prompt).toContain(scene.color);
      expect(scene.prompt).toContain(scene.shape);
      for (const v of scene.image) {
        expect(v).toBeGreaterThanOrEqual(0);
        expect(v).toBeLessThanOrEqual(1);
      }
    }
  });

  it("prompt embedder pads and rejects unknown words", () => {
    const embedder = new PromptEmbedder(8, 5);
    expect(embedder.tokenize(["analyze", "the", "scene"])).toHaveLength(5);
    expect(() => embedder.tokenize(["warp"])).toThrow(/vocabulary/);
  });
});

describe("statistics", () => {
  it("paired t-test detects a consistent positive shift", () => {
    const rng = new Rng(14);
    const b = Array.from({ length: 40 }, () => rng.gaussian());
    const a = b.map((v) => v + 0.5 + 0.1 * rng.gaussian());
    expect(pairedTTestGreater(a, b).pValue).toBeLessThan(0.001);
    expect(pairedTTestGreater(b, a).pValue).toBeGreaterThan(0.5);
  });

  it("sign test agrees on a one-sided shift", () => {
    const a = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
    const b = a.map((v) => v - 1);
    expect(signTestGreater(a, b).pValue).toBeLessThan(0.001);
  });
});
