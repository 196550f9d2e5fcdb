/**
 * Acceptance suite for the codec: trains one d=1 model on the toy set and
 * checks the training-loss trend, noiseless reconstruction quality, the
 * calibration export (monotonicity plus a round-trip through the relay
 * simulator's loader) and the prompt-specificity effect under noise.
 */

import { execFileSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { beforeAll, describe, expect, it } from "vitest";

import { exportCalibration, sliceImage, writeCalibrationCsv } from "../src/calibrate";
import { SemanticCodec } from "../src/codec";
import {
  batchImages, makeDataset, maskToRegionImages, Scene, scenePrompts,
} from "../src/dataset";
import { msssimValue } from "../src/msssim";
import { pairedTTestGreater } from "../src/stats";
import { Rng, Tensor } from "../src/tensor";
import { trainCodec } from "../src/train";

const H = 24;
const W = 24;
const TRAIN_MS = 600_000;

let codec: SemanticCodec;
let epochLosses: number[];
let holdout: Scene[];

beforeAll(() => {
  codec = new SemanticCodec({ patchFactor: 1, height: H, width: W, seed: 3 });
  const scenes = makeDataset(160, new Rng(42), H, W);
  const result = trainCodec(codec, scenes, {
    epochs: 10, batchSize: 8, lr: 2e-3, noiseSnrDbRange: [0, 15],
    promptDropout: 0.3, seed: 5,
  });
  epochLosses = result.epochLosses;
  holdout = makeDataset(40, new Rng(777), H, W);
}, TRAIN_MS);

describe("codec acceptance", () => {
  it("training loss strictly decreases (smoothed) over 10 epochs", () => {
    expect(epochLosses).toHaveLength(10);
    const smoothed = epochLosses.slice(0, -1).map((v, i) => (v + epochLosses[i + 1]) / 2);
    for (let i = 1; i < smoothed.length; i++) {
      expect(smoothed[i]).toBeLessThan(smoothed[i - 1]);
    }
    console.log(`ACCEPTANCE PASS: loss ${epochLosses[0].toFixed(4)} -> ` +
                `${epochLosses[9].toFixed(4)} strictly decreasing (smoothed)`);
  });

  it("noiseless d=1 reconstruction reaches MS-SSIM 0.85", () => {
    let acc = 0;
    let count = 0;
    for (let i = 0; i + 8 <= holdout.length; i += 8) {
      const batch = holdout.slice(i, i + 8);
      const images = batchImages(batch, H, W);
      const recon = codec.reconstruct(images, scenePrompts(batch));
      for (let b = 0; b < batch.length; b++) {
        acc += msssimValue(sliceImage(recon, b), sliceImage(images, b));
        count += 1;
      }
    }
    const mean = acc / count;
    expect(mean).toBeGreaterThanOrEqual(0.85);
    console.log(`ACCEPTANCE PASS: noiseless holdout MS-SSIM ${mean.toFixed(4)} >= 0.85`);
  }, 120_000);

  it("calibration export is monotone in snr and loads in the simulator", () => {
    const rows = exportCalibration(new Map([[1, codec]]),
                                   [0, 5, 10, 15, 20], [4, 16], holdout.slice(0, 24));
    expect(rows).toHaveLength(10);
    for (const order of [4, 16]) {
      const series = rows.filter((r) => r.modOrder === order)
        .sort((a, b) => a.snrDb - b.snrDb);
      for (let i = 1; i < series.length; i++) {
        expect(series[i].cosSim).toBeGreaterThanOrEqual(series[i - 1].cosSim - 1e-9);
        expect(series[i].msSsim).toBeGreaterThanOrEqual(series[i - 1].msSsim - 1e-9);
      }
    }

    const dir = fs.mkdtempSync(path.join(os.tmpdir(), "semcodec-"));
    const file = path.join(dir, "calibration.csv");
    writeCalibrationCsv(rows, file);
    const probe = [
      "from uavsem.semantics import CalibrationTable, DistortionSurrogate",
      `table = CalibrationTable.from_csv(${JSON.stringify(file)})`,
      `assert len(table.rows) == ${rows.length}`,
      "cos, ms = DistortionSurrogate(table).predict(1, 7.5, 4, 432.0)",
      "assert 0 < cos <= 1 and 0 < ms <= 1",
      "print('loaded', len(table.rows))",
    ].join("\n");
    const out = execFileSync("python3", ["-c", probe], { encoding: "utf8" });
    expect(out).toContain(`loaded ${rows.length}`);
    console.log("ACCEPTANCE PASS: calibration monotone in SNR and " +
                "round-trips through the simulator loader");
  }, 240_000);

  it("specific prompts beat generic prompts inside the target region at low snr", () => {
    const snrDb = 3.0;
    const specific: number[] = [];
    const generic: number[] = [];
    for (let i = 0; i + 8 <= holdout.length; i += 8) {
      const batch = holdout.slice(i, i + 8);
      const images = batchImages(batch, H, W);
      // Matched channel noise for the two prompt conditions.
      const a = codec.transmit(images, scenePrompts(batch, false), snrDb, 16, new Rng(9000 + i));
      const g = codec.transmit(images, scenePrompts(batch, true), snrDb, 16, new Rng(9000 + i));
      for (let b = 0; b < batch.length; b++) {
        const ref = sliceImage(images, b);
        const maskedA = maskToRegionImages(ref.data, sliceImage(a.reconstruction, b).data,
                                           batch[b].mask, H, W);
        const maskedG = maskToRegionImages(ref.data, sliceImage(g.reconstruction, b).data,
                                           batch[b].mask, H, W);
        specific.push(msssimValue(new Tensor(maskedA.cand, [1, H, W, 3]),
                                  new Tensor(maskedA.ref, [1, H, W, 3])));
        generic.push(msssimValue(new Tensor(maskedG.cand, [1, H, W, 3]),
                                 new Tensor(maskedG.ref, [1, H, W, 3])));
      }
    }
    const test = pairedTTestGreater(specific, generic);
    expect(test.pValue).toBeLessThan(0.05);
    console.log(`ACCEPTANCE PASS: masked MS-SSIM specific ` +
                `${mean(specific).toFixed(4)} > generic ${mean(generic).toFixed(4)} ` +
                `(paired one-sided p=${test.pValue.toExponential(2)}, n=${test.n})`);
  }, 240_000);
});

function mean(xs: number[]): number {
  return xs.reduce((a, b) => a + b, 0) / xs.length;
}
