/**
 * Digital transmission path for calibration: code indices are Gray-mapped
 * onto square QAM symbols, pass through AWGN at a given post-equalization
 * SNR, and are hard-demodulated back to indices. A lighter additive-noise
 * path perturbs feature values directly for noise-aware training.
 */

import { Rng, Tensor } from "./tensor";

export const QAM_ORDERS = [4, 16, 64, 256] as const;

function grayToBinary(g: number): number {
  let b = g;
  for (let shift = g >> 1; shift > 0; shift >>= 1) b ^= shift;
  return b;
}

function binaryToGray(b: number): number {
  return b ^ (b >> 1);
}

function geometry(order: number): { side: number; norm: number } {
  if (!(QAM_ORDERS as readonly number[]).includes(order)) {
    throw new Error(`unsupported modulation order ${order}`);
  }
  const side = Math.round(Math.sqrt(order));
  return { side, norm: Math.sqrt(3 / (2 * (order - 1))) };
}

export function qamModulate(bits: Uint8Array, order: number): Float32Array {
  const { side, norm } = geometry(order);
  const k = Math.round(Math.log2(order));
  if (bits.length % k !== 0) {
    throw new Error(`bit count ${bits.length} not divisible by ${k}`);
  }
  const half = k / 2;
  const nSym = bits.length / k;
  const out = new Float32Array(2 * nSym);
  for (let s = 0; s < nSym; s++) {
    let gi = 0;
    let gq = 0;
    for (let j = 0; j < half; j++) gi = (gi << 1) | bits[s * k + j];
    for (let j = half; j < k; j++) gq = (gq << 1) | bits[s * k + j];
    out[2 * s] = norm * (2 * grayToBinary(gi) - (side - 1));
    out[2 * s + 1] = norm * (2 * grayToBinary(gq) - (side - 1));
  }
  return out;
}

export function qamDemodulate(symbols: Float32Array, order: number): Uint8Array {
  const { side, norm } = geometry(order);
  const k = Math.round(Math.log2(order));
  const half = k / 2;
  const nSym = symbols.length / 2;
  const out = new Uint8Array(nSym * k);
  for (let s = 0; s < nSym; s++) {
    const li = nearestLevel(symbols[2 * s] / norm, side);
    const lq = nearestLevel(symbols[2 * s + 1] / norm, side);
    const gi = binaryToGray(li);
    const gq = binaryToGray(lq);
    for (let j = 0; j < half; j++) out[s * k + j] = (gi >> (half - 1 - j)) & 1;
    for (let j = half; j < k; j++) out[s * k + j] = (gq >> (k - 1 - j)) & 1;
  }
  return out;
}

function nearestLevel(coord: number, side: number): number {
  const idx = Math.round((coord + (side - 1)) / 2);
  return Math.min(Math.max(idx, 0), side - 1);
}

/** Indices -> bits -> QAM -> AWGN at snrDb -> indices (hard decisions). */
export function transmitIndices(indices: Int32Array, bitsPerIndex: number,
                                order: number, snrDb: number, rng: Rng): Int32Array {
  const k = Math.round(Math.log2(order));
  const totalBits = indices.length * bitsPerIndex;
  const padded = Math.ceil(totalBits / k) * k;
  const bits = new Uint8Array(padded);
  for (let i = 0; i < indices.length; i++) {
    for (let j = 0; j < bitsPerIndex; j++) {
      bits[i * bitsPerIndex + j] = (indices[i] >> (bitsPerIndex - 1 - j)) & 1;
    }
  }
  const symbols = qamModulate(bits, order);
  const noiseStd = Math.sqrt(Math.pow(10, -snrDb / 10) / 2);
  for (let i = 0; i < symbols.length; i++) symbols[i] += noiseStd * rng.gaussian();
  const rxBits = qamDemodulate(symbols, order);
  const out = new Int32Array(indices.length);
  for (let i = 0; i < indices.length; i++) {
    let v = 0;
    for (let j = 0; j < bitsPerIndex; j++) v = (v << 1) | rxBits[i * bitsPerIndex + j];
    out[i] = v;
  }
  return out;
}

/** Additive feature noise at a given SNR relative to the signal power;
 * the returned tensor is a constant, so gradients keep flowing to x. */
export function featureNoise(x: Tensor, snrDb: number, rng: Rng): Tensor {
  let power = 0;
  for (let i = 0; i < x.size; i++) power += x.data[i] * x.data[i];
  power /= x.size;
  const std = Math.sqrt(power * Math.pow(10, -snrDb / 10));
  const noise = new Float32Array(x.size);
  for (let i = 0; i < noise.length; i++) noise[i] = std * rng.gaussian();
  return new Tensor(noise, x.shape, false);
}

export function cosineSimilarity(a: Float32Array, b: Float32Array): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na === 0 || nb === 0) return 0;
  return dot / Math.sqrt(na * nb);
}
