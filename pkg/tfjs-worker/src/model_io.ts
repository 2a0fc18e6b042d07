import * as tf from '@tensorflow/tfjs';
import { promises as fs } from 'node:fs';
import * as path from 'node:path';

/**
 * Checkpoint layout: a directory holding model.json (topology plus weight
 * manifest) and weights.bin (the raw weight buffer). The browser-oriented
 * tfjs build has no filesystem handlers, so both directions go through
 * custom IOHandlers backed by node:fs.
 */

export async function saveModelToDir(model: tf.LayersModel, dir: string): Promise<void> {
  await fs.mkdir(dir, { recursive: true });
  await model.save({
    save: async (artifacts: tf.io.ModelArtifacts) => {
      const manifest = {
        modelTopology: artifacts.modelTopology,
        weightSpecs: artifacts.weightSpecs,
        format: artifacts.format,
        generatedBy: artifacts.generatedBy,
      };
      const weightData = tf.io.CompositeArrayBuffer.join(artifacts.weightData);
      await fs.writeFile(path.join(dir, 'model.json'), JSON.stringify(manifest));
      await fs.writeFile(path.join(dir, 'weights.bin'), Buffer.from(weightData));
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON' as const,
        },
      };
    },
  });
}

export async function loadModelFromDir(dir: string): Promise<tf.LayersModel> {
  const manifestPath = path.join(dir, 'model.json');
  let manifestText: string;
  try {
    manifestText = await fs.readFile(manifestPath, 'utf8');
  } catch {
    throw new Error(`checkpoint not found: ${manifestPath}`);
  }
  const manifest = JSON.parse(manifestText);
  const raw = await fs.readFile(path.join(dir, 'weights.bin'));
  const weightData = raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength);
  return tf.loadLayersModel({
    load: async () => ({
      modelTopology: manifest.modelTopology,
      weightSpecs: manifest.weightSpecs,
      weightData,
      format: manifest.format,
      generatedBy: manifest.generatedBy,
    }),
  });
}

/** Deep-copies a model, weights included, without touching the filesystem. */
export async function cloneModel(model: tf.LayersModel): Promise<tf.LayersModel> {
  let artifacts: tf.io.ModelArtifacts | undefined;
  await model.save({
    save: async (a: tf.io.ModelArtifacts) => {
      artifacts = a;
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON' as const,
        },
      };
    },
  });
  if (artifacts === undefined) {
    throw new Error('model.save never called the handler');
  }
  return tf.loadLayersModel({ load: async () => artifacts as tf.io.ModelArtifacts });
}
