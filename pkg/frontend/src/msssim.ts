/**
 * Differentiable (multi-scale) structural similarity for [0, 1] images.
 *
 * Local statistics use a normalized 5x5 box window; coarser scales come
 * from 2x2 average pooling. Contrast-structure terms are taken at every
 * scale and the luminance term only at the coarsest, combined as a
 * weighted product (each factor clamped above a small floor so the power
 * stays defined early in training).
 */

import {
  add, addConst, avgPool2x2, boxFilter, div, maxConst, meanAll, mul,
  mulScalars, powScalar, scale, sub, Tensor,
} from "./tensor";

const C1 = 0.01 * 0.01;
const C2 = 0.03 * 0.03;
const FLOOR = 1e-4;
const WINDOW = 5;

interface SsimTerms {
  luminance: Tensor;   // scalar mean of the luminance map
  contrast: Tensor;    // scalar mean of the contrast-structure map
}

function ssimTerms(x: Tensor, y: Tensor): SsimTerms {
  const mx = boxFilter(x, WINDOW);
  const my = boxFilter(y, WINDOW);
  const mxx = boxFilter(mul(x, x), WINDOW);
  const myy = boxFilter(mul(y, y), WINDOW);
  const mxy = boxFilter(mul(x, y), WINDOW);

  const mx2 = mul(mx, mx);
  const my2 = mul(my, my);
  const varX = sub(mxx, mx2);
  const varY = sub(myy, my2);
  const cov = sub(mxy, mul(mx, my));

  const lum = div(addConst(scale(mul(mx, my), 2), C1),
                  addConst(add(mx2, my2), C1));
  const cs = div(addConst(scale(cov, 2), C2),
                 addConst(add(varX, varY), C2));
  return { luminance: meanAll(lum), contrast: meanAll(cs) };
}

export function ssim(x: Tensor, y: Tensor): Tensor {
  const t = ssimTerms(x, y);
  return mulScalars(t.luminance, t.contrast);
}

function scaleCount(height: number, width: number): number {
  let scales = 1;
  let m = Math.min(height, width);
  while (m >= 16 && scales < 3) {
    scales += 1;
    m = m >> 1;
  }
  return scales;
}

/** Multi-scale SSIM as a scalar tensor; gradients flow to both images. */
export function msssim(x: Tensor, y: Tensor): Tensor {
  const scales = scaleCount(x.shape[1], x.shape[2]);
  const weights = scales === 3 ? [0.2, 0.3, 0.5] : scales === 2 ? [0.35, 0.65] : [1.0];
  let cx = x;
  let cy = y;
  let out: Tensor | null = null;
  for (let s = 0; s < scales; s++) {
    const terms = ssimTerms(cx, cy);
    const factor = s === scales - 1
      ? mulScalars(maxConst(terms.luminance, FLOOR), maxConst(terms.contrast, FLOOR))
      : maxConst(terms.contrast, FLOOR);
    const powered = powScalar(factor, weights[s]);
    out = out === null ? powered : mulScalars(out, powered);
    if (s < scales - 1) {
      cx = avgPool2x2(cx);
      cy = avgPool2x2(cy);
    }
  }
  return out!;
}

/** Plain number variant for evaluation paths that need no gradient. */
export function msssimValue(x: Tensor, y: Tensor): number {
  return msssim(x, y).item();
}
