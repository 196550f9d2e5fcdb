/** Paired one-sided tests for the prompt-specificity comparison. */

export interface PairedTestResult {
  statistic: number;
  pValue: number;
  meanDiff: number;
  n: number;
}

/**
 * One-sided paired t-test of H1: mean(a - b) > 0. The p-value uses the
 * normal approximation to the t distribution, adequate for the sample
 * sizes used here (n >= 30).
 */
export function pairedTTestGreater(a: number[], b: number[]): PairedTestResult {
  if (a.length !== b.length || a.length < 2) {
    throw new Error("paired test needs two equal-length samples");
  }
  const diffs = a.map((x, i) => x - b[i]);
  const n = diffs.length;
  const mean = diffs.reduce((s, d) => s + d, 0) / n;
  const varSum = diffs.reduce((s, d) => s + (d - mean) * (d - mean), 0);
  const sd = Math.sqrt(varSum / (n - 1));
  const t = sd === 0 ? (mean > 0 ? Infinity : 0) : mean / (sd / Math.sqrt(n));
  return { statistic: t, pValue: 1 - normalCdf(t), meanDiff: mean, n };
}

/** Exact one-sided sign test of H1: P(a > b) > 1/2 (ties discarded). */
export function signTestGreater(a: number[], b: number[]): PairedTestResult {
  const diffs = a.map((x, i) => x - b[i]).filter((d) => d !== 0);
  const n = diffs.length;
  const wins = diffs.filter((d) => d > 0).length;
  let p = 0;
  for (let k = wins; k <= n; k++) p += binomialPmf(n, k);
  return { statistic: wins, pValue: p, meanDiff: wins / Math.max(n, 1), n };
}

function binomialPmf(n: number, k: number): number {
  let logC = 0;
  for (let i = 1; i <= k; i++) logC += Math.log(n - k + i) - Math.log(i);
  return Math.exp(logC - n * Math.LN2);
}

function normalCdf(x: number): number {
  return 0.5 * (1 + erf(x / Math.SQRT2));
}

function erf(x: number): number {
  // Abramowitz & Stegun 7.1.26, |error| < 1.5e-7.
  const sign = x < 0 ? -1 : 1;
  const ax = Math.abs(x);
  const t = 1 / (1 + 0.3275911 * ax);
  const y = 1 - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t
    - 0.284496736) * t + 0.254829592) * t * Math.exp(-ax * ax);
  return sign * y;
}
