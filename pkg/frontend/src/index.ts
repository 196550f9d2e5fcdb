export { SemanticCodec } from "./codec";
export { CodecConfig, defaultConfig, tokenCount, validateConfig } from "./config";
export { Decoder } from "./decoder";
export { Encoder } from "./encoder";
export { SoftToHardQuantizer } from "./quantizer";
export { PromptEmbedder, genericPrompt, specificPrompt, VOCABULARY } from "./prompt";
export { msssim, msssimValue, ssim } from "./msssim";
export { exportCalibration, writeCalibrationCsv, CALIBRATION_HEADER } from "./calibrate";
export { makeDataset, makeScene, batchImages, scenePrompts } from "./dataset";
export { trainCodec, stageLoss, TrainingDiverged } from "./train";
export { pairedTTestGreater, signTestGreater } from "./stats";
export { qamModulate, qamDemodulate, transmitIndices, cosineSimilarity } from "./channel";
export { Tensor, Rng, Adam, backward } from "./tensor";
