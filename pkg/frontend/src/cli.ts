/** Command-line entry: train a codec (or a family over several compression
 * factors) and export the calibration table. */

import * as fs from "fs";
import * as path from "path";
import { SemanticCodec } from "./codec";
import { exportCalibration, writeCalibrationCsv } from "./calibrate";
import { makeDataset } from "./dataset";
import { Rng } from "./tensor";
import { trainCodec } from "./train";

interface Args {
  [key: string]: string | string[] | boolean;
}

function parseArgs(argv: string[]): { command: string; args: Args } {
  const command = argv[0];
  const args: Args = {};
  for (let i = 1; i < argv.length; i++) {
    if (!argv[i].startsWith("--")) continue;
    const key = argv[i].slice(2);
    const values: string[] = [];
    while (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      values.push(argv[++i]);
    }
    args[key] = values.length === 0 ? true : values.length === 1 ? values[0] : values;
  }
  return { command, args };
}

function numberList(v: string | string[] | boolean | undefined, fallback: number[]): number[] {
  if (v === undefined || typeof v === "boolean") return fallback;
  const list = Array.isArray(v) ? v : [v];
  return list.map(Number);
}

function main(): number {
  const { command, args } = parseArgs(process.argv.slice(2));
  if (command === "train") return cmdTrain(args);
  if (command === "calibrate") return cmdCalibrate(args);
  console.error("usage: cli.js <train|calibrate> [--options]");
  return 2;
}

function cmdTrain(args: Args): number {
  const out = String(args.out ?? "runs");
  fs.mkdirSync(out, { recursive: true });
  const seed = Number(args.seed ?? 0);
  const images = Number(args.images ?? 320);
  const epochs = Number(args.epochs ?? 10);
  const ds = numberList(args.d, [1]);

  const scenes = makeDataset(images, new Rng(1000 + seed));
  for (const d of ds) {
    const codec = new SemanticCodec({ patchFactor: d, seed });
    const result = trainCodec(codec, scenes, {
      epochs, batchSize: 8, lr: 2e-3, noiseSnrDbRange: [0, 15],
      promptDropout: 0.3, seed: seed + 1,
      log: (msg) => console.log(`[d=${d}] ${msg}`),
    });
    const file = path.join(out, `codec_d${d}.json`);
    codec.save(file);
    fs.writeFileSync(path.join(out, `loss_d${d}.csv`),
                     "epoch,loss\n" + result.epochLosses
                       .map((l, i) => `${i},${l}`).join("\n") + "\n");
    console.log(`saved ${file}`);
  }
  return 0;
}

function cmdCalibrate(args: Args): number {
  const out = String(args.out ?? "calibration.csv");
  const modelDir = String(args.models ?? "runs");
  const snrGrid = numberList(args.snr, [0, 5, 10, 15, 20]);
  const orderGrid = numberList(args.orders, [4, 16, 64, 256]);
  const evalCount = Number(args.images ?? 64);

  const codecs = new Map<number, SemanticCodec>();
  for (const file of fs.readdirSync(modelDir)) {
    const match = /^codec_d(\d+)\.json$/.exec(file);
    if (match) codecs.set(Number(match[1]), SemanticCodec.load(path.join(modelDir, file)));
  }
  if (codecs.size === 0) {
    console.error(`no codec_d*.json checkpoints found in ${modelDir}`);
    return 1;
  }
  const scenes = makeDataset(evalCount, new Rng(555));
  const rows = exportCalibration(codecs, snrGrid, orderGrid, scenes);
  writeCalibrationCsv(rows, out);
  console.log(`wrote ${rows.length} calibration rows to ${out}`);
  return 0;
}

process.exit(main());
