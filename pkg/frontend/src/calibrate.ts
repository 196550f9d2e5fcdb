/**
 * Calibration-table export: measure mean feature cosine similarity and
 * MS-SSIM over an evaluation set for every (compression, SNR, modulation
 * order) grid point, in the comma-separated schema the relay simulator
 * loads (`d,snr_db,mod_order,feature_len,cos_sim,ms_ssim`).
 */

import * as fs from "fs";
import { SemanticCodec } from "./codec";
import { batchImages, Scene, scenePrompts } from "./dataset";
import { msssimValue } from "./msssim";
import { Rng, Tensor } from "./tensor";

export const CALIBRATION_HEADER = "d,snr_db,mod_order,feature_len,cos_sim,ms_ssim";

export interface CalibrationRow {
  d: number;
  snrDb: number;
  modOrder: number;
  featureLen: number;
  cosSim: number;
  msSsim: number;
}

export function exportCalibration(codecs: Map<number, SemanticCodec>,
                                  snrGrid: number[], orderGrid: number[],
                                  scenes: Scene[], seed = 99,
                                  batchSize = 8): CalibrationRow[] {
  if (codecs.size === 0 || snrGrid.length === 0 || orderGrid.length === 0) {
    throw new Error("calibration grids must be nonempty");
  }
  const rows: CalibrationRow[] = [];
  const ds = [...codecs.keys()].sort((a, b) => a - b);
  for (const d of ds) {
    const codec = codecs.get(d)!;
    const { channels, height, width } = codec.cfg;
    const featureLen = (channels * height * width) / 2 ** (2 * d);
    for (const order of orderGrid) {
      for (const snrDb of snrGrid) {
        const rng = new Rng(seed);       // matched noise across grid points
        let cosAcc = 0;
        let msAcc = 0;
        let count = 0;
        for (let start = 0; start + batchSize <= scenes.length; start += batchSize) {
          const batch = scenes.slice(start, start + batchSize);
          const images = batchImages(batch, height, width);
          const result = codec.transmit(images, scenePrompts(batch), snrDb, order, rng);
          for (let b = 0; b < batch.length; b++) {
            cosAcc += result.cosSim[b];
            msAcc += msssimValue(sliceImage(result.reconstruction, b),
                                 sliceImage(images, b));
            count += 1;
          }
        }
        rows.push({
          d, snrDb, modOrder: order, featureLen,
          cosSim: clamp(cosAcc / count, -1, 1),
          msSsim: clamp(msAcc / count, 0, 1),
        });
      }
    }
  }
  return rows;
}

export function writeCalibrationCsv(rows: CalibrationRow[], path: string): void {
  const lines = [CALIBRATION_HEADER];
  for (const r of rows) {
    lines.push([r.d, r.snrDb, r.modOrder, r.featureLen, r.cosSim, r.msSsim].join(","));
  }
  fs.writeFileSync(path, lines.join("\n") + "\n");
}

export function sliceImage(batch: Tensor, index: number): Tensor {
  const [, H, W, C] = batch.shape;
  const per = H * W * C;
  return new Tensor(batch.data.slice(index * per, (index + 1) * per), [1, H, W, C]);
}

function clamp(x: number, lo: number, hi: number): number {
  return Math.min(Math.max(x, lo), hi);
}
