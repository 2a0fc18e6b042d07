import { promises as fs } from 'node:fs';
import * as path from 'node:path';
import { DetectorSettings, TrainingSettings } from './detector.js';

export interface WorkerConfig extends DetectorSettings {
  /** Directory that init's model names are resolved against. */
  checkpointRoot: string;
  training: TrainingSettings;
}

const DEFAULTS = {
  inputSize: 64,
  scoreThreshold: 0.5,
  nmsIou: 0.45,
  training: { epochs: 60, learningRate: 0.02, boxLossWeight: 1.0 },
};

/**
 * Reads a worker config file. checkpointRoot is required and is resolved
 * relative to the config file itself, so a config can travel with its
 * checkpoints. Everything else falls back to defaults.
 */
export async function loadConfig(configPath: string): Promise<WorkerConfig> {
  const text = await fs.readFile(configPath, 'utf8');
  const raw = JSON.parse(text);
  if (typeof raw !== 'object' || raw === null) {
    throw new Error(`config is not a JSON object: ${configPath}`);
  }
  if (typeof raw.checkpointRoot !== 'string' || raw.checkpointRoot === '') {
    throw new Error(`config is missing checkpointRoot: ${configPath}`);
  }
  const training = raw.training ?? {};
  return {
    checkpointRoot: path.resolve(path.dirname(configPath), raw.checkpointRoot),
    inputSize: raw.inputSize ?? DEFAULTS.inputSize,
    scoreThreshold: raw.scoreThreshold ?? DEFAULTS.scoreThreshold,
    nmsIou: raw.nmsIou ?? DEFAULTS.nmsIou,
    training: {
      epochs: training.epochs ?? DEFAULTS.training.epochs,
      learningRate: training.learningRate ?? DEFAULTS.training.learningRate,
      boxLossWeight: training.boxLossWeight ?? DEFAULTS.training.boxLossWeight,
    },
  };
}
