import * as tf from '@tensorflow/tfjs';
import { createInterface } from 'node:readline';
import * as path from 'node:path';
import { WorkerConfig } from './config.js';
import { detectFrame, finetuneModel, labelCapacity, gridSize } from './detector.js';
import { cloneModel, loadModelFromDir } from './model_io.js';
import { readFrame, Frame } from './images.js';
import { DetectionRow, Hyper, Response, SampleRow, isStringArray } from './protocol.js';

/**
 * Holds the model registry and serves the stdio protocol. Every finetune
 * registers a fresh model under a new id; earlier ids stay usable so a
 * caller can compare generations side by side.
 */
export class DetectorWorker {
  private readonly models = new Map<string, tf.LayersModel>();
  private labels: string[] = [];
  private nextModel = 0;

  constructor(private readonly config: WorkerConfig) {}

  async handle(request: unknown): Promise<Response> {
    const req = request as Record<string, unknown>;
    const id = typeof req === 'object' && req !== null && 'id' in req ? req.id : null;
    if (typeof req !== 'object' || req === null || Array.isArray(req)) {
      return { id: null, ok: false, error: 'request is not an object' };
    }
    try {
      switch (req.op) {
        case 'init':
          return { id, ok: true, model_id: await this.init(req) };
        case 'detect':
          return { id, ok: true, detections: await this.detect(req) };
        case 'finetune':
          return { id, ok: true, model_id: await this.finetune(req) };
        default:
          if (typeof req.op !== 'string') {
            return { id, ok: false, error: 'request has no op' };
          }
          return { id, ok: false, error: `unknown op: ${req.op}` };
      }
    } catch (err) {
      return { id, ok: false, error: err instanceof Error ? err.message : String(err) };
    }
  }

  private register(model: tf.LayersModel): string {
    const modelId = `m${this.nextModel}`;
    this.nextModel += 1;
    this.models.set(modelId, model);
    return modelId;
  }

  private lookup(modelId: unknown): tf.LayersModel {
    if (typeof modelId !== 'string' || !this.models.has(modelId)) {
      throw new Error(`unknown model id: ${String(modelId)}`);
    }
    return this.models.get(modelId) as tf.LayersModel;
  }

  private async init(req: Record<string, unknown>): Promise<string> {
    if (typeof req.model !== 'string' || req.model === '') {
      throw new Error('init needs a model name');
    }
    if (!isStringArray(req.labels)) {
      throw new Error('init needs a non-empty labels list');
    }
    const dir = path.resolve(this.config.checkpointRoot, req.model);
    const model = await loadModelFromDir(dir);
    const capacity = labelCapacity(model);
    if (capacity !== req.labels.length) {
      model.dispose();
      throw new Error(
        `checkpoint head supports ${capacity} labels, got ${req.labels.length}`,
      );
    }
    const side = model.inputs[0].shape[1];
    if (side !== this.config.inputSize) {
      model.dispose();
      throw new Error(
        `checkpoint expects ${side}px inputs, config says ${this.config.inputSize}`,
      );
    }
    this.labels = [...req.labels];
    const modelId = this.register(model);
    console.error(
      `[worker] ${modelId} <- ${dir} (grid ${gridSize(model)}x${gridSize(model)}, labels ${this.labels.join(',')})`,
    );
    return modelId;
  }

  private async readFrames(paths: unknown): Promise<Frame[]> {
    if (!Array.isArray(paths) || !paths.every(p => typeof p === 'string')) {
      throw new Error('frames must be a list of file paths');
    }
    const frames: Frame[] = [];
    for (const p of paths as string[]) {
      frames.push(await readFrame(p));
    }
    return frames;
  }

  private async detect(req: Record<string, unknown>): Promise<DetectionRow[]> {
    const model = this.lookup(req.model_id);
    const frames = await this.readFrames(req.frames);
    const rows: DetectionRow[] = [];
    for (let i = 0; i < frames.length; i++) {
      rows.push(...(await detectFrame(model, frames[i], i, this.labels, this.config)));
    }
    console.error(
      `[worker] detect ${req.model_id}: ${frames.length} frames -> ${rows.length} detections`,
    );
    return rows;
  }

  private checkSamples(samples: unknown, frameCount: number): SampleRow[] {
    if (!Array.isArray(samples) || samples.length === 0) {
      throw new Error('finetune needs a non-empty samples list');
    }
    for (const row of samples) {
      if (!Array.isArray(row) || row.length !== 6) {
        throw new Error('each sample must be [frame_index, label, u, v, w, h]');
      }
      const [frameIndex, label, u, v, w, h] = row;
      if (!Number.isInteger(frameIndex) || frameIndex < 0 || frameIndex >= frameCount) {
        throw new Error(`sample frame_index ${frameIndex} is out of range`);
      }
      if (typeof label !== 'string' || !this.labels.includes(label)) {
        throw new Error(`sample label ${JSON.stringify(label)} is not in the label set`);
      }
      for (const value of [u, v, w, h]) {
        if (typeof value !== 'number' || !Number.isFinite(value)) {
          throw new Error('sample box values must be finite numbers');
        }
      }
      if (w <= 0 || h <= 0) {
        throw new Error('sample boxes need positive width and height');
      }
    }
    return samples as SampleRow[];
  }

  private async finetune(req: Record<string, unknown>): Promise<string> {
    const parent = this.lookup(req.model_id);
    const frames = await this.readFrames(req.frames);
    if (frames.length === 0) {
      throw new Error('finetune needs at least one frame');
    }
    const samples = this.checkSamples(req.samples, frames.length);
    const hyper: Hyper =
      typeof req.hyper === 'object' && req.hyper !== null ? (req.hyper as Hyper) : {};
    const child = await cloneModel(parent);
    try {
      await finetuneModel(
        child,
        frames,
        samples,
        this.labels,
        this.config,
        this.config.training,
        hyper,
      );
    } catch (err) {
      child.dispose();
      throw err;
    }
    const modelId = this.register(child);
    console.error(
      `[worker] finetune ${req.model_id} -> ${modelId} ` +
        `(${frames.length} frames, ${samples.length} samples, ${this.config.training.epochs} epochs)`,
    );
    return modelId;
  }
}

/** Reads requests line by line from stdin and answers on stdout. */
export async function serve(worker: DetectorWorker): Promise<void> {
  const rl = createInterface({ input: process.stdin });
  for await (const rawLine of rl) {
    const line = rawLine.trim();
    if (line === '') {
      continue;
    }
    let response: Response;
    try {
      const request = JSON.parse(line);
      response = await worker.handle(request);
    } catch {
      response = { id: null, ok: false, error: 'request is not valid JSON' };
    }
    process.stdout.write(JSON.stringify(response) + '\n');
  }
}
