/** Codec hyperparameters and their structural validation. */

export interface CodecConfig {
  height: number;
  width: number;
  channels: number;        // image channels; features carry 2*channels reals
  patchFactor: number;     // d: patches are 2^d x 2^d, token count HW / 2^2d
  depth: number;           // encoder blocks B
  embedDim: number;        // token width inside the transformer
  promptLength: number;    // tokens per prompt (padded)
  promptDim: number;       // frozen embedding width
  codebookSize: number;    // soft-to-hard quantizer entries (complex points)
  temperatureStart: number;
  temperatureDecay: number;   // multiplicative per epoch
  hardThreshold: number;      // forward emits hard codes at or below this
  decoderChannels: number;
  lossWeights: number[];      // lambda per decoder stage, finest first
  seed: number;
}

export function defaultConfig(overrides: Partial<CodecConfig> = {}): CodecConfig {
  const base: CodecConfig = {
    height: 32,
    width: 32,
    channels: 3,
    patchFactor: 1,
    depth: 2,
    embedDim: 40,
    promptLength: 5,
    promptDim: 32,
    codebookSize: 16,
    temperatureStart: 2.0,
    temperatureDecay: 0.6,
    hardThreshold: 0.05,
    decoderChannels: 16,
    lossWeights: [1.0],
    seed: 1234,
  };
  const cfg = { ...base, ...overrides };
  if (!("lossWeights" in overrides)) {
    // Finest stage carries the most weight by default.
    const stages = cfg.patchFactor;
    cfg.lossWeights = Array.from({ length: stages }, (_, i) =>
      i === 0 ? 0.6 : 0.4 / Math.max(stages - 1, 1));
    if (stages === 1) cfg.lossWeights = [1.0];
  }
  return cfg;
}

export function validateConfig(cfg: CodecConfig): string[] {
  const bad: string[] = [];
  const p = 2 ** cfg.patchFactor;
  if (cfg.height % p !== 0 || cfg.width % p !== 0) {
    bad.push(`image ${cfg.height}x${cfg.width} not divisible by patch size ${p}`);
  }
  if (cfg.patchFactor < 1) bad.push("patchFactor must be >= 1");
  if (cfg.depth < 1) bad.push("depth must be >= 1");
  if (cfg.codebookSize < 1) bad.push("codebookSize must be >= 1");
  if (cfg.lossWeights.length !== cfg.patchFactor) {
    bad.push(`need one loss weight per decoder stage (${cfg.patchFactor})`);
  }
  if (cfg.lossWeights.some((w) => w < 0)) bad.push("loss weights must be nonnegative");
  if (cfg.lossWeights.reduce((a, b) => a + b, 0) <= 0) {
    bad.push("at least one loss weight must be positive");
  }
  if (cfg.temperatureStart <= 0 || cfg.hardThreshold <= 0) {
    bad.push("temperatures must be positive");
  }
  return bad;
}

export function tokenCount(cfg: CodecConfig): number {
  return (cfg.height * cfg.width) / 2 ** (2 * cfg.patchFactor);
}
