/**
 * Synthetic toy scenes with known object masks.
 *
 * Each scene is a textured background, one target object (color x shape
 * drawn from a small vocabulary) and one smaller distractor. The target's
 * pixel mask enables region-restricted quality measurements, and its
 * descriptor words form the specific prompt.
 */

import { genericPrompt, specificPrompt } from "./prompt";
import { Rng, Tensor } from "./tensor";

export const COLOR_WORDS = ["red", "green", "blue", "yellow"] as const;
export const SHAPE_WORDS = ["circle", "square", "triangle"] as const;

const COLOR_RGB: Record<string, [number, number, number]> = {
  red: [0.9, 0.15, 0.1],
  green: [0.1, 0.8, 0.2],
  blue: [0.15, 0.25, 0.9],
  yellow: [0.9, 0.85, 0.1],
};

export interface Scene {
  image: Float32Array;       // [H, W, 3] in [0, 1]
  mask: Uint8Array;          // [H, W] target-object pixels
  color: string;
  shape: string;
  prompt: string[];          // specific prompt words
}

function inShape(shape: string, dx: number, dy: number, r: number): boolean {
  if (shape === "circle") return dx * dx + dy * dy <= r * r;
  if (shape === "square") return Math.abs(dx) <= r && Math.abs(dy) <= r;
  // upward triangle
  return dy <= r && dy >= -r && Math.abs(dx) <= ((r - dy) / (2 * r)) * r;
}

function paintShape(image: Float32Array, mask: Uint8Array | null, H: number, W: number,
                    shape: string, cx: number, cy: number, r: number,
                    rgb: [number, number, number]): void {
  const y0 = Math.max(0, Math.floor(cy - r - 1));
  const y1 = Math.min(H - 1, Math.ceil(cy + r + 1));
  const x0 = Math.max(0, Math.floor(cx - r - 1));
  const x1 = Math.min(W - 1, Math.ceil(cx + r + 1));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      if (!inShape(shape, x - cx, y - cy, r)) continue;
      const o = (y * W + x) * 3;
      image[o] = rgb[0];
      image[o + 1] = rgb[1];
      image[o + 2] = rgb[2];
      if (mask) mask[y * W + x] = 1;
    }
  }
}

export function makeScene(rng: Rng, H = 32, W = 32): Scene {
  const image = new Float32Array(H * W * 3);
  // Low-contrast sinusoid texture background.
  const base = [0.35 + 0.2 * rng.next(), 0.35 + 0.2 * rng.next(), 0.35 + 0.2 * rng.next()];
  const fx = rng.uniform(0.1, 0.5);
  const fy = rng.uniform(0.1, 0.5);
  const ph = rng.uniform(0, 2 * Math.PI);
  for (let y = 0; y < H; y++) {
    for (let x = 0; x < W; x++) {
      const tex = 0.08 * Math.sin(fx * x + fy * y + ph);
      const o = (y * W + x) * 3;
      image[o] = base[0] + tex;
      image[o + 1] = base[1] + tex;
      image[o + 2] = base[2] + tex;
    }
  }

  const mask = new Uint8Array(H * W);
  const color = COLOR_WORDS[rng.int(COLOR_WORDS.length)];
  const shape = SHAPE_WORDS[rng.int(SHAPE_WORDS.length)];
  const r = rng.uniform(6, 9);
  const cx = rng.uniform(r + 2, W - r - 2);
  const cy = rng.uniform(r + 2, H - r - 2);
  paintShape(image, mask, H, W, shape, cx, cy, r, COLOR_RGB[color]);

  // One smaller distractor with a different color and shape.
  let dColor = color;
  while (dColor === color) dColor = COLOR_WORDS[rng.int(COLOR_WORDS.length)];
  let dShape = shape;
  while (dShape === shape) dShape = SHAPE_WORDS[rng.int(SHAPE_WORDS.length)];
  const dr = rng.uniform(3, 5);
  paintShape(image, null, H, W, dShape,
             rng.uniform(dr + 1, W - dr - 1), rng.uniform(dr + 1, H - dr - 1),
             dr, COLOR_RGB[dColor]);

  return { image, mask, color, shape, prompt: specificPrompt(color, shape) };
}

export function makeDataset(count: number, rng: Rng, H = 32, W = 32): Scene[] {
  return Array.from({ length: count }, () => makeScene(rng, H, W));
}

export function batchImages(scenes: Scene[], H = 32, W = 32): Tensor {
  const out = new Float32Array(scenes.length * H * W * 3);
  scenes.forEach((s, i) => out.set(s.image, i * H * W * 3));
  return new Tensor(out, [scenes.length, H, W, 3], false);
}

export function scenePrompts(scenes: Scene[], generic = false): string[][] {
  return scenes.map((s) => (generic ? genericPrompt() : s.prompt));
}

/** Mean squared... masked MS-SSIM needs full windows, so quality inside the
 * target region is measured on images blended to the background outside the
 * mask, which zeroes the contribution of non-target pixels to the score. */
export function maskToRegionImages(reference: Float32Array, candidate: Float32Array,
                                   mask: Uint8Array, H: number, W: number):
    { ref: Float32Array; cand: Float32Array } {
  const ref = new Float32Array(reference.length);
  const cand = new Float32Array(candidate.length);
  const fill = 0.5;
  for (let i = 0; i < H * W; i++) {
    for (let c = 0; c < 3; c++) {
      const o = i * 3 + c;
      if (mask[i]) {
        ref[o] = reference[o];
        cand[o] = candidate[o];
      } else {
        ref[o] = fill;
        cand[o] = fill;
      }
    }
  }
  return { ref, cand };
}
