/**
 * Minimal reverse-mode autodiff over flat Float32Array tensors.
 *
 * Only the operations the codec needs are implemented, each as a fused
 * forward + backward pair. Graphs are rebuilt every step; backward() does
 * a topological walk from the loss node.
 */

export class Tensor {
  data: Float32Array;
  shape: number[];
  grad: Float32Array | null = null;
  requiresGrad: boolean;
  parents: Tensor[] = [];
  backwardFn: (() => void) | null = null;

  constructor(data: Float32Array, shape: number[], requiresGrad = false) {
    if (data.length !== shape.reduce((a, b) => a * b, 1)) {
      throw new Error(`data length ${data.length} does not match shape ${shape}`);
    }
    this.data = data;
    this.shape = shape;
    this.requiresGrad = requiresGrad;
  }

  get size(): number {
    return this.data.length;
  }

  ensureGrad(): Float32Array {
    if (this.grad === null) this.grad = new Float32Array(this.size);
    return this.grad;
  }

  zeroGrad(): void {
    if (this.grad) this.grad.fill(0);
  }

  reshape(shape: number[]): Tensor {
    const out = new Tensor(this.data, shape, this.requiresGrad);
    out.parents = [this];
    out.backwardFn = () => {
      if (!this.requiresGrad) return;
      const g = this.ensureGrad();
      const og = out.grad!;
      for (let i = 0; i < g.length; i++) g[i] += og[i];
    };
    return out;
  }

  item(): number {
    if (this.size !== 1) throw new Error("item() needs a scalar tensor");
    return this.data[0];
  }
}

export function tensor(values: number[] | Float32Array, shape: number[]): Tensor {
  return new Tensor(Float32Array.from(values), shape, false);
}

export function zeros(shape: number[], requiresGrad = false): Tensor {
  return new Tensor(new Float32Array(shape.reduce((a, b) => a * b, 1)), shape, requiresGrad);
}

/** Deterministic 32-bit PRNG (mulberry32) plus a Box-Muller gaussian. */
export class Rng {
  private state: number;
  private spare: number | null = null;

  constructor(seed: number) {
    this.state = seed >>> 0;
  }

  next(): number {
    this.state = (this.state + 0x6d2b79f5) >>> 0;
    let t = this.state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  }

  uniform(lo: number, hi: number): number {
    return lo + (hi - lo) * this.next();
  }

  int(n: number): number {
    return Math.floor(this.next() * n);
  }

  gaussian(): number {
    if (this.spare !== null) {
      const v = this.spare;
      this.spare = null;
      return v;
    }
    let u = 0;
    let v = 0;
    while (u <= 1e-12) {
      u = this.next();
      v = this.next();
    }
    const r = Math.sqrt(-2 * Math.log(u));
    this.spare = r * Math.sin(2 * Math.PI * v);
    return r * Math.cos(2 * Math.PI * v);
  }
}

export function param(shape: number[], rng: Rng, scale?: number): Tensor {
  const fanIn = shape.length > 1 ? shape[0] : shape[0];
  const bound = scale ?? 1 / Math.sqrt(fanIn);
  const n = shape.reduce((a, b) => a * b, 1);
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = rng.uniform(-bound, bound);
  return new Tensor(data, shape, true);
}

function make(shape: number[], parents: Tensor[], backwardFn: (out: Tensor) => void): Tensor {
  const out = zeros(shape);
  out.requiresGrad = parents.some((p) => p.requiresGrad);
  if (out.requiresGrad) {
    out.parents = parents;
    out.backwardFn = () => backwardFn(out);
  }
  return out;
}

export function backward(loss: Tensor): void {
  const order: Tensor[] = [];
  const seen = new Set<Tensor>();
  const visit = (t: Tensor) => {
    if (seen.has(t) || !t.requiresGrad) return;
    seen.add(t);
    for (const p of t.parents) visit(p);
    order.push(t);
  };
  visit(loss);
  loss.ensureGrad().fill(0);
  loss.grad![0] = 1;
  for (let i = order.length - 1; i >= 0; i--) {
    const node = order[i];
    if (node.backwardFn && node.grad) node.backwardFn();
  }
}

// -- elementwise ------------------------------------------------------------

export function add(a: Tensor, b: Tensor): Tensor {
  const out = make(a.shape, [a, b], (o) => {
    const g = o.grad!;
    if (a.requiresGrad) {
      const ga = a.ensureGrad();
      for (let i = 0; i < g.length; i++) ga[i] += g[i];
    }
    if (b.requiresGrad) {
      const gb = b.ensureGrad();
      for (let i = 0; i < g.length; i++) gb[i] += g[i];
    }
  });
  for (let i = 0; i < out.size; i++) out.data[i] = a.data[i] + b.data[i];
  return out;
}

export function sub(a: Tensor, b: Tensor): Tensor {
  const out = make(a.shape, [a, b], (o) => {
    const g = o.grad!;
    if (a.requiresGrad) {
      const ga = a.ensureGrad();
      for (let i = 0; i < g.length; i++) ga[i] += g[i];
    }
    if (b.requiresGrad) {
      const gb = b.ensureGrad();
      for (let i = 0; i < g.length; i++) gb[i] -= g[i];
    }
  });
  for (let i = 0; i < out.size; i++) out.data[i] = a.data[i] - b.data[i];
  return out;
}

export function mul(a: Tensor, b: Tensor): Tensor {
  const out = make(a.shape, [a, b], (o) => {
    const g = o.grad!;
    if (a.requiresGrad) {
      const ga = a.ensureGrad();
      for (let i = 0; i < g.length; i++) ga[i] += g[i] * b.data[i];
    }
    if (b.requiresGrad) {
      const gb = b.ensureGrad();
      for (let i = 0; i < g.length; i++) gb[i] += g[i] * a.data[i];
    }
  });
  for (let i = 0; i < out.size; i++) out.data[i] = a.data[i] * b.data[i];
  return out;
}

export function div(a: Tensor, b: Tensor): Tensor {
  const out = make(a.shape, [a, b], (o) => {
    const g = o.grad!;
    if (a.requiresGrad) {
      const ga = a.ensureGrad();
      for (let i = 0; i < g.length; i++) ga[i] += g[i] / b.data[i];
    }
    if (b.requiresGrad) {
      const gb = b.ensureGrad();
      for (let i = 0; i < g.length; i++) {
        gb[i] -= (g[i] * a.data[i]) / (b.data[i] * b.data[i]);
      }
    }
  });
  for (let i = 0; i < out.size; i++) out.data[i] = a.data[i] / b.data[i];
  return out;
}

export function scale(a: Tensor, s: number): Tensor {
  const out = make(a.shape, [a], () => {
    if (!a.requiresGrad) return;
    const ga = a.ensureGrad();
    const g = out.grad!;
    for (let i = 0; i < g.length; i++) ga[i] += g[i] * s;
  });
  for (let i = 0; i < out.size; i++) out.data[i] = a.data[i] * s;
  return out;
}

export function addConst(a: Tensor, c: number): Tensor {
  const out = make(a.shape, [a], () => {
    if (!a.requiresGrad) return;
    const ga = a.ensureGrad();
    const g = out.grad!;
    for (let i = 0; i < g.length; i++) ga[i] += g[i];
  });
  for (let i = 0; i < out.size; i++) out.data[i] = a.data[i] + c;
  return out;
}

export function relu(a: Tensor): Tensor {
  const out = make(a.shape, [a], () => {
    if (!a.requiresGrad) return;
    const ga = a.ensureGrad();
    const g = out.grad!;
    for (let i = 0; i < g.length; i++) if (a.data[i] > 0) ga[i] += g[i];
  });
  for (let i = 0; i < out.size; i++) out.data[i] = a.data[i] > 0 ? a.data[i] : 0;
  return out;
}

export function gelu(a: Tensor): Tensor {
  // tanh approximation; the backward differentiates the approximation itself.
  const K = Math.sqrt(2 / Math.PI);
  const out = make(a.shape, [a], () => {
    if (!a.requiresGrad) return;
    const ga = a.ensureGrad();
    const g = out.grad!;
    for (let i = 0; i < g.length; i++) {
      const x = a.data[i];
      const u = K * (x + 0.044715 * x * x * x);
      const t = Math.tanh(u);
      const du = K * (1 + 3 * 0.044715 * x * x);
      ga[i] += g[i] * (0.5 * (1 + t) + 0.5 * x * (1 - t * t) * du);
    }
  });
  for (let i = 0; i < out.size; i++) {
    const x = a.data[i];
    out.data[i] = 0.5 * x * (1 + Math.tanh(K * (x + 0.044715 * x * x * x)));
  }
  return out;
}

export function sigmoid(a: Tensor): Tensor {
  const out = make(a.shape, [a], () => {
    if (!a.requiresGrad) return;
    const ga = a.ensureGrad();
    const g = out.grad!;
    for (let i = 0; i < g.length; i++) {
      const y = out.data[i];
      ga[i] += g[i] * y * (1 - y);
    }
  });
  for (let i = 0; i < out.size; i++) out.data[i] = 1 / (1 + Math.exp(-a.data[i]));
  return out;
}

export function stopGrad(a: Tensor): Tensor {
  return new Tensor(a.data.slice(), a.shape, false);
}

// -- reductions and scalars ----------------------------------------------------

export function meanAll(a: Tensor): Tensor {
  const n = a.size;
  const out = make([1], [a], () => {
    if (!a.requiresGrad) return;
    const ga = a.ensureGrad();
    const g = out.grad![0] / n;
    for (let i = 0; i < n; i++) ga[i] += g;
  });
  let s = 0;
  for (let i = 0; i < n; i++) s += a.data[i];
  out.data[0] = s / n;
  return out;
}

export function maxConst(a: Tensor, floor: number): Tensor {
  const out = make(a.shape, [a], () => {
    if (!a.requiresGrad) return;
    const ga = a.ensureGrad();
    const g = out.grad!;
    for (let i = 0; i < g.length; i++) if (a.data[i] > floor) ga[i] += g[i];
  });
  for (let i = 0; i < out.size; i++) out.data[i] = Math.max(a.data[i], floor);
  return out;
}

/** Scalar power s^p for positive scalar tensors. */
export function powScalar(a: Tensor, p: number): Tensor {
  if (a.size !== 1) throw new Error("powScalar needs a scalar tensor");
  const out = make([1], [a], () => {
    if (!a.requiresGrad) return;
    a.ensureGrad()[0] += out.grad![0] * p * Math.pow(a.data[0], p - 1);
  });
  out.data[0] = Math.pow(a.data[0], p);
  return out;
}

export function mulScalars(a: Tensor, b: Tensor): Tensor {
  if (a.size !== 1 || b.size !== 1) throw new Error("mulScalars needs scalars");
  const out = make([1], [a, b], () => {
    if (a.requiresGrad) a.ensureGrad()[0] += out.grad![0] * b.data[0];
    if (b.requiresGrad) b.ensureGrad()[0] += out.grad![0] * a.data[0];
  });
  out.data[0] = a.data[0] * b.data[0];
  return out;
}

export function addScalars(terms: Tensor[], weights?: number[]): Tensor {
  const w = weights ?? terms.map(() => 1);
  const out = make([1], terms, () => {
    terms.forEach((t, i) => {
      if (t.requiresGrad) t.ensureGrad()[0] += out.grad![0] * w[i];
    });
  });
  out.data[0] = terms.reduce((acc, t, i) => acc + w[i] * t.data[0], 0);
  return out;
}

/** Multiply a tensor by a scalar tensor (learnable gate). */
export function scaleByGate(a: Tensor, gate: Tensor): Tensor {
  if (gate.size !== 1) throw new Error("gate must be scalar");
  const out = make(a.shape, [a, gate], () => {
    const g = out.grad!;
    const s = gate.data[0];
    if (a.requiresGrad) {
      const ga = a.ensureGrad();
      for (let i = 0; i < g.length; i++) ga[i] += g[i] * s;
    }
    if (gate.requiresGrad) {
      let acc = 0;
      for (let i = 0; i < g.length; i++) acc += g[i] * a.data[i];
      gate.ensureGrad()[0] += acc;
    }
  });
  const s = gate.data[0];
  for (let i = 0; i < out.size; i++) out.data[i] = a.data[i] * s;
  return out;
}

// -- dense algebra ----------------------------------------------------------

/** Rows of x (any leading dims collapsed) times w[din, dout], plus bias. */
export function linear(x: Tensor, w: Tensor, b: Tensor | null): Tensor {
  const din = w.shape[0];
  const dout = w.shape[1];
  if (x.shape[x.shape.length - 1] !== din) {
    throw new Error(`linear: input width ${x.shape} vs weight ${w.shape}`);
  }
  const rows = x.size / din;
  const outShape = [...x.shape.slice(0, -1), dout];
  const parents = b ? [x, w, b] : [x, w];
  const xd = x.data;
  const wd = w.data;
  const out = make(outShape, parents, () => {
    const g = out.grad!;
    const gx = x.requiresGrad ? x.ensureGrad() : null;
    const gw = w.requiresGrad ? w.ensureGrad() : null;
    for (let r = 0; r < rows; r++) {
      const xo = r * din;
      const go = r * dout;
      for (let i = 0; i < din; i++) {
        const wo = i * dout;
        if (gx !== null && gw !== null) {
          const xv = xd[xo + i];
          let acc = 0;
          for (let j = 0; j < dout; j++) {
            const gv = g[go + j];
            acc += gv * wd[wo + j];
            gw[wo + j] += xv * gv;
          }
          gx[xo + i] += acc;
        } else if (gx !== null) {
          let acc = 0;
          for (let j = 0; j < dout; j++) acc += g[go + j] * wd[wo + j];
          gx[xo + i] += acc;
        } else if (gw !== null) {
          const xv = xd[xo + i];
          if (xv !== 0) {
            for (let j = 0; j < dout; j++) gw[wo + j] += xv * g[go + j];
          }
        }
      }
    }
    if (b && b.requiresGrad) {
      const gb = b.ensureGrad();
      for (let r = 0; r < rows; r++) {
        const go = r * dout;
        for (let j = 0; j < dout; j++) gb[j] += g[go + j];
      }
    }
  });
  const od = out.data;
  for (let r = 0; r < rows; r++) {
    const xo = r * din;
    const oo = r * dout;
    if (b) od.set(b.data, oo);
    for (let i = 0; i < din; i++) {
      const xv = xd[xo + i];
      if (xv === 0) continue;
      const wo = i * dout;
      for (let j = 0; j < dout; j++) od[oo + j] += xv * wd[wo + j];
    }
  }
  return out;
}

/** Batched q k^T scores: q[B,N,D], k[B,M,D] -> [B,N,M] times 1/sqrt(D). */
export function attnScores(q: Tensor, k: Tensor): Tensor {
  const [B, N, D] = q.shape;
  const M = k.shape[1];
  const s = 1 / Math.sqrt(D);
  const qd = q.data;
  const kd = k.data;
  const out = make([B, N, M], [q, k], () => {
    const g = out.grad!;
    const gq = q.requiresGrad ? q.ensureGrad() : null;
    const gk = k.requiresGrad ? k.ensureGrad() : null;
    for (let b = 0; b < B; b++) {
      const qo = b * N * D;
      const ko = b * M * D;
      const go = b * N * M;
      for (let n = 0; n < N; n++) {
        const qrow = qo + n * D;
        const grow = go + n * M;
        for (let m = 0; m < M; m++) {
          const gv = g[grow + m] * s;
          const krow = ko + m * D;
          if (gq !== null && gk !== null) {
            for (let d = 0; d < D; d++) {
              gq[qrow + d] += gv * kd[krow + d];
              gk[krow + d] += gv * qd[qrow + d];
            }
          } else if (gq !== null) {
            for (let d = 0; d < D; d++) gq[qrow + d] += gv * kd[krow + d];
          } else if (gk !== null) {
            for (let d = 0; d < D; d++) gk[krow + d] += gv * qd[qrow + d];
          }
        }
      }
    }
  });
  const od = out.data;
  for (let b = 0; b < B; b++) {
    const qo = b * N * D;
    const ko = b * M * D;
    const go = b * N * M;
    for (let n = 0; n < N; n++) {
      const qrow = qo + n * D;
      const grow = go + n * M;
      for (let m = 0; m < M; m++) {
        const krow = ko + m * D;
        let acc = 0;
        for (let d = 0; d < D; d++) acc += qd[qrow + d] * kd[krow + d];
        od[grow + m] = acc * s;
      }
    }
  }
  return out;
}

/** Attention mixing: p[B,N,M] @ v[B,M,D] -> [B,N,D]. */
export function attnMix(p: Tensor, v: Tensor): Tensor {
  const [B, N, M] = p.shape;
  const D = v.shape[2];
  const pd = p.data;
  const vd = v.data;
  const out = make([B, N, D], [p, v], () => {
    const g = out.grad!;
    const gp = p.requiresGrad ? p.ensureGrad() : null;
    const gv = v.requiresGrad ? v.ensureGrad() : null;
    for (let b = 0; b < B; b++) {
      const po = b * N * M;
      const vo = b * M * D;
      const go = b * N * D;
      for (let n = 0; n < N; n++) {
        const grow = go + n * D;
        const prow = po + n * M;
        for (let m = 0; m < M; m++) {
          const vrow = vo + m * D;
          if (gp !== null) {
            let acc = 0;
            for (let d = 0; d < D; d++) acc += g[grow + d] * vd[vrow + d];
            gp[prow + m] += acc;
          }
          if (gv !== null) {
            const pv = pd[prow + m];
            for (let d = 0; d < D; d++) gv[vrow + d] += pv * g[grow + d];
          }
        }
      }
    }
  });
  const od = out.data;
  for (let b = 0; b < B; b++) {
    const po = b * N * M;
    const vo = b * M * D;
    const go = b * N * D;
    for (let n = 0; n < N; n++) {
      const prow = po + n * M;
      const grow = go + n * D;
      for (let m = 0; m < M; m++) {
        const pv = pd[prow + m];
        if (pv === 0) continue;
        const vrow = vo + m * D;
        for (let d = 0; d < D; d++) od[grow + d] += pv * vd[vrow + d];
      }
    }
  }
  return out;
}

export function softmaxLast(a: Tensor): Tensor {
  const M = a.shape[a.shape.length - 1];
  const rows = a.size / M;
  const out = make(a.shape, [a], () => {
    if (!a.requiresGrad) return;
    const g = out.grad!;
    const ga = a.ensureGrad();
    for (let r = 0; r < rows; r++) {
      const o = r * M;
      let dot = 0;
      for (let j = 0; j < M; j++) dot += g[o + j] * out.data[o + j];
      for (let j = 0; j < M; j++) ga[o + j] += out.data[o + j] * (g[o + j] - dot);
    }
  });
  for (let r = 0; r < rows; r++) {
    const o = r * M;
    let mx = -Infinity;
    for (let j = 0; j < M; j++) if (a.data[o + j] > mx) mx = a.data[o + j];
    let s = 0;
    for (let j = 0; j < M; j++) {
      const e = Math.exp(a.data[o + j] - mx);
      out.data[o + j] = e;
      s += e;
    }
    for (let j = 0; j < M; j++) out.data[o + j] /= s;
  }
  return out;
}

/** Row-wise layer normalization with learnable gain/shift over the last dim. */
export function layerNorm(x: Tensor, gamma: Tensor, beta: Tensor, eps = 1e-5): Tensor {
  const D = x.shape[x.shape.length - 1];
  const rows = x.size / D;
  const mean = new Float32Array(rows);
  const inv = new Float32Array(rows);
  const xn = new Float32Array(x.size);
  const out = make(x.shape, [x, gamma, beta], () => {
    const g = out.grad!;
    const gGamma = gamma.requiresGrad ? gamma.ensureGrad() : null;
    const gBeta = beta.requiresGrad ? beta.ensureGrad() : null;
    const gx = x.requiresGrad ? x.ensureGrad() : null;
    for (let r = 0; r < rows; r++) {
      const o = r * D;
      let sumG = 0;
      let sumGX = 0;
      for (let j = 0; j < D; j++) {
        const gj = g[o + j] * gamma.data[j];
        sumG += gj;
        sumGX += gj * xn[o + j];
        if (gGamma) gGamma[j] += g[o + j] * xn[o + j];
        if (gBeta) gBeta[j] += g[o + j];
      }
      if (gx) {
        for (let j = 0; j < D; j++) {
          const gj = g[o + j] * gamma.data[j];
          gx[o + j] += inv[r] * (gj - sumG / D - (xn[o + j] * sumGX) / D);
        }
      }
    }
  });
  for (let r = 0; r < rows; r++) {
    const o = r * D;
    let m = 0;
    for (let j = 0; j < D; j++) m += x.data[o + j];
    m /= D;
    let v = 0;
    for (let j = 0; j < D; j++) {
      const c = x.data[o + j] - m;
      v += c * c;
    }
    mean[r] = m;
    inv[r] = 1 / Math.sqrt(v / D + eps);
    for (let j = 0; j < D; j++) {
      const n = (x.data[o + j] - m) * inv[r];
      xn[o + j] = n;
      out.data[o + j] = n * gamma.data[j] + beta.data[j];
    }
  }
  return out;
}

// -- image ops (NHWC) ---------------------------------------------------------

export function conv3x3(x: Tensor, w: Tensor, b: Tensor | null): Tensor {
  const [B, H, W, Cin] = x.shape;
  const Cout = w.shape[3];
  const parents = b ? [x, w, b] : [x, w];
  const xd = x.data;
  const wd = w.data;
  const out = make([B, H, W, Cout], parents, () => {
    const g = out.grad!;
    const gx = x.requiresGrad ? x.ensureGrad() : null;
    const gw = w.requiresGrad ? w.ensureGrad() : null;
    const gb = b && b.requiresGrad ? b.ensureGrad() : null;
    if (gb) {
      for (let i = 0; i < g.length; i += Cout) {
        for (let co = 0; co < Cout; co++) gb[co] += g[i + co];
      }
    }
    // One pass per kernel tap over its valid interior: no bounds checks
    // inside the pixel loops.
    for (let ky = -1; ky <= 1; ky++) {
      for (let kx = -1; kx <= 1; kx++) {
        const wo = ((ky + 1) * 3 + (kx + 1)) * Cin * Cout;
        const y0 = Math.max(0, -ky);
        const y1 = H - Math.max(0, ky);
        const x0 = Math.max(0, -kx);
        const x1 = W - Math.max(0, kx);
        for (let bb = 0; bb < B; bb++) {
          for (let y = y0; y < y1; y++) {
            const srow = ((bb * H + y + ky) * W + kx) * Cin;
            const grow = ((bb * H + y) * W) * Cout;
            for (let xx = x0; xx < x1; xx++) {
              const xo = srow + xx * Cin;
              const go = grow + xx * Cout;
              for (let ci = 0; ci < Cin; ci++) {
                const xv = xd[xo + ci];
                const wrow = wo + ci * Cout;
                let accX = 0;
                if (gw !== null) {
                  for (let co = 0; co < Cout; co++) {
                    const gv = g[go + co];
                    gw[wrow + co] += xv * gv;
                    accX += wd[wrow + co] * gv;
                  }
                } else {
                  for (let co = 0; co < Cout; co++) accX += wd[wrow + co] * g[go + co];
                }
                if (gx !== null) gx[xo + ci] += accX;
              }
            }
          }
        }
      }
    }
  });
  const od = out.data;
  if (b) {
    const bd = b.data;
    for (let i = 0; i < od.length; i += Cout) od.set(bd, i);
  }
  for (let ky = -1; ky <= 1; ky++) {
    for (let kx = -1; kx <= 1; kx++) {
      const wo = ((ky + 1) * 3 + (kx + 1)) * Cin * Cout;
      const y0 = Math.max(0, -ky);
      const y1 = H - Math.max(0, ky);
      const x0 = Math.max(0, -kx);
      const x1 = W - Math.max(0, kx);
      for (let bb = 0; bb < B; bb++) {
        for (let y = y0; y < y1; y++) {
          const srow = ((bb * H + y + ky) * W + kx) * Cin;
          const orow = ((bb * H + y) * W) * Cout;
          for (let xx = x0; xx < x1; xx++) {
            const xo = srow + xx * Cin;
            const oo = orow + xx * Cout;
            for (let ci = 0; ci < Cin; ci++) {
              const xv = xd[xo + ci];
              if (xv === 0) continue;
              const wrow = wo + ci * Cout;
              for (let co = 0; co < Cout; co++) od[oo + co] += xv * wd[wrow + co];
            }
          }
        }
      }
    }
  }
  return out;
}

export function upsample2x(x: Tensor): Tensor {
  const [B, H, W, C] = x.shape;
  const out = make([B, 2 * H, 2 * W, C], [x], () => {
    if (!x.requiresGrad) return;
    const g = out.grad!;
    const gx = x.ensureGrad();
    for (let b = 0; b < B; b++) {
      for (let y = 0; y < 2 * H; y++) {
        for (let xx = 0; xx < 2 * W; xx++) {
          const so = ((b * H + (y >> 1)) * W + (xx >> 1)) * C;
          const go = ((b * 2 * H + y) * 2 * W + xx) * C;
          for (let c = 0; c < C; c++) gx[so + c] += g[go + c];
        }
      }
    }
  });
  for (let b = 0; b < B; b++) {
    for (let y = 0; y < 2 * H; y++) {
      for (let xx = 0; xx < 2 * W; xx++) {
        const so = ((b * H + (y >> 1)) * W + (xx >> 1)) * C;
        const oo = ((b * 2 * H + y) * 2 * W + xx) * C;
        for (let c = 0; c < C; c++) out.data[oo + c] = x.data[so + c];
      }
    }
  }
  return out;
}

export function avgPool2x2(x: Tensor): Tensor {
  const [B, H, W, C] = x.shape;
  const Ho = H >> 1;
  const Wo = W >> 1;
  const out = make([B, Ho, Wo, C], [x], () => {
    if (!x.requiresGrad) return;
    const g = out.grad!;
    const gx = x.ensureGrad();
    for (let b = 0; b < B; b++) {
      for (let y = 0; y < H; y++) {
        for (let xx = 0; xx < W; xx++) {
          const go = ((b * Ho + (y >> 1)) * Wo + (xx >> 1)) * C;
          const xo = ((b * H + y) * W + xx) * C;
          for (let c = 0; c < C; c++) gx[xo + c] += g[go + c] / 4;
        }
      }
    }
  });
  for (let b = 0; b < B; b++) {
    for (let y = 0; y < H; y++) {
      for (let xx = 0; xx < W; xx++) {
        const oo = ((b * Ho + (y >> 1)) * Wo + (xx >> 1)) * C;
        const xo = ((b * H + y) * W + xx) * C;
        for (let c = 0; c < C; c++) out.data[oo + c] += x.data[xo + c] / 4;
      }
    }
  }
  return out;
}

/** Depthwise normalized k x k box filter with zero padding ('same').
 * The kernel is uniform and symmetric, so the backward pass is the same
 * filter applied to the output gradient. */
export function boxFilter(x: Tensor, k: number): Tensor {
  const [B, H, W, C] = x.shape;
  const r = (k - 1) >> 1;
  const norm = 1 / (k * k);
  const run = (src: Float32Array, dst: Float32Array) => {
    for (let b = 0; b < B; b++) {
      for (let y = 0; y < H; y++) {
        for (let xx = 0; xx < W; xx++) {
          const oo = ((b * H + y) * W + xx) * C;
          for (let dy = -r; dy <= r; dy++) {
            const sy = y + dy;
            if (sy < 0 || sy >= H) continue;
            for (let dx = -r; dx <= r; dx++) {
              const sx = xx + dx;
              if (sx < 0 || sx >= W) continue;
              const so = ((b * H + sy) * W + sx) * C;
              for (let c = 0; c < C; c++) dst[oo + c] += src[so + c] * norm;
            }
          }
        }
      }
    }
  };
  const out = make(x.shape, [x], () => {
    if (!x.requiresGrad) return;
    const gx = x.ensureGrad();
    const tmp = new Float32Array(x.size);
    run(out.grad!, tmp);
    for (let i = 0; i < gx.length; i++) gx[i] += tmp[i];
  });
  run(x.data, out.data);
  return out;
}

/** Split an NHWC image into non-overlapping p x p patches:
 * [B,H,W,C] -> [B, (H/p)*(W/p), p*p*C], rows ordered row-major over the grid. */
export function patchify(x: Tensor, p: number): Tensor {
  const [B, H, W, C] = x.shape;
  const gh = H / p;
  const gw = W / p;
  const D = p * p * C;
  const map = (b: number, n: number, j: number): number => {
    const gy = Math.floor(n / gw);
    const gx = n % gw;
    const py = Math.floor(j / (p * C));
    const rem = j % (p * C);
    const px = Math.floor(rem / C);
    const c = rem % C;
    return ((b * H + gy * p + py) * W + gx * p + px) * C + c;
  };
  const out = make([B, gh * gw, D], [x], () => {
    if (!x.requiresGrad) return;
    const g = out.grad!;
    const gx = x.ensureGrad();
    for (let b = 0; b < B; b++) {
      for (let n = 0; n < gh * gw; n++) {
        const oo = (b * gh * gw + n) * D;
        for (let j = 0; j < D; j++) gx[map(b, n, j)] += g[oo + j];
      }
    }
  });
  for (let b = 0; b < B; b++) {
    for (let n = 0; n < gh * gw; n++) {
      const oo = (b * gh * gw + n) * D;
      for (let j = 0; j < D; j++) out.data[oo + j] = x.data[map(b, n, j)];
    }
  }
  return out;
}

/** Squared distances between feature rows f[R,D] and codebook c[K,D]. */
export function pairwiseSqDist(f: Tensor, c: Tensor): Tensor {
  const [R, D] = [f.size / c.shape[1], c.shape[1]];
  const K = c.shape[0];
  const out = make([R, K], [f, c], () => {
    const g = out.grad!;
    const gf = f.requiresGrad ? f.ensureGrad() : null;
    const gc = c.requiresGrad ? c.ensureGrad() : null;
    for (let r2 = 0; r2 < R; r2++) {
      for (let k2 = 0; k2 < K; k2++) {
        const gv = g[r2 * K + k2];
        if (gv === 0) continue;
        for (let d = 0; d < D; d++) {
          const diff = f.data[r2 * D + d] - c.data[k2 * D + d];
          if (gf) gf[r2 * D + d] += 2 * diff * gv;
          if (gc) gc[k2 * D + d] -= 2 * diff * gv;
        }
      }
    }
  });
  for (let r2 = 0; r2 < R; r2++) {
    for (let k2 = 0; k2 < K; k2++) {
      let acc = 0;
      for (let d = 0; d < D; d++) {
        const diff = f.data[r2 * D + d] - c.data[k2 * D + d];
        acc += diff * diff;
      }
      out.data[r2 * K + k2] = acc;
    }
  }
  return out;
}

/** Broadcast per-sample FiLM parameters over spatial dims:
 * y[b,h,w,c] = x[b,h,w,c] * gamma[b,c] + beta[b,c]. */
export function filmMod(x: Tensor, gamma: Tensor, beta: Tensor): Tensor {
  const [B, H, W, C] = x.shape;
  const out = make(x.shape, [x, gamma, beta], () => {
    const g = out.grad!;
    const gx = x.requiresGrad ? x.ensureGrad() : null;
    const gGamma = gamma.requiresGrad ? gamma.ensureGrad() : null;
    const gBeta = beta.requiresGrad ? beta.ensureGrad() : null;
    for (let b = 0; b < B; b++) {
      for (let i = 0; i < H * W; i++) {
        const o = (b * H * W + i) * C;
        for (let c = 0; c < C; c++) {
          const gv = g[o + c];
          if (gx) gx[o + c] += gv * gamma.data[b * C + c];
          if (gGamma) gGamma[b * C + c] += gv * x.data[o + c];
          if (gBeta) gBeta[b * C + c] += gv;
        }
      }
    }
  });
  for (let b = 0; b < B; b++) {
    for (let i = 0; i < H * W; i++) {
      const o = (b * H * W + i) * C;
      for (let c = 0; c < C; c++) {
        out.data[o + c] = x.data[o + c] * gamma.data[b * C + c] + beta.data[b * C + c];
      }
    }
  }
  return out;
}

/** Mean over the token axis: [B,N,D] -> [B,D]. */
export function meanTokens(x: Tensor): Tensor {
  const [B, N, D] = x.shape;
  const out = make([B, D], [x], () => {
    if (!x.requiresGrad) return;
    const g = out.grad!;
    const gx = x.ensureGrad();
    for (let b = 0; b < B; b++) {
      for (let n = 0; n < N; n++) {
        for (let d = 0; d < D; d++) gx[(b * N + n) * D + d] += g[b * D + d] / N;
      }
    }
  });
  for (let b = 0; b < B; b++) {
    for (let n = 0; n < N; n++) {
      for (let d = 0; d < D; d++) out.data[b * D + d] += x.data[(b * N + n) * D + d] / N;
    }
  }
  return out;
}

/** Broadcast a [N,D] table across a batch: -> [B,N,D]. */
export function broadcastRows(t: Tensor, B: number): Tensor {
  const [N, D] = t.shape;
  const out = make([B, N, D], [t], () => {
    if (!t.requiresGrad) return;
    const g = out.grad!;
    const gt = t.ensureGrad();
    for (let b = 0; b < B; b++) {
      const o = b * N * D;
      for (let i = 0; i < N * D; i++) gt[i] += g[o + i];
    }
  });
  for (let b = 0; b < B; b++) out.data.set(t.data, b * N * D);
  return out;
}

// -- optimizer ----------------------------------------------------------------

export class Adam {
  private m: Float32Array[];
  private v: Float32Array[];
  private t = 0;

  constructor(public params: Tensor[], public lr = 1e-3,
              public beta1 = 0.9, public beta2 = 0.999, public eps = 1e-8) {
    this.m = params.map((p) => new Float32Array(p.size));
    this.v = params.map((p) => new Float32Array(p.size));
  }

  step(): void {
    this.t += 1;
    const c = this.lr * Math.sqrt(1 - Math.pow(this.beta2, this.t)) /
      (1 - Math.pow(this.beta1, this.t));
    this.params.forEach((p, i) => {
      if (!p.grad) return;
      const m = this.m[i];
      const v = this.v[i];
      for (let j = 0; j < p.size; j++) {
        const g = p.grad[j];
        m[j] = this.beta1 * m[j] + (1 - this.beta1) * g;
        v[j] = this.beta2 * v[j] + (1 - this.beta2) * g * g;
        p.data[j] -= (c * m[j]) / (Math.sqrt(v[j]) + this.eps);
      }
    });
  }

  zeroGrad(): void {
    for (const p of this.params) p.zeroGrad();
  }
}
