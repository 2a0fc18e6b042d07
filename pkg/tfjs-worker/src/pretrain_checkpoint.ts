import * as tf from '@tensorflow/tfjs';
import { promises as fs } from 'node:fs';
import * as path from 'node:path';
import { buildDetector, finetuneModel, detectFrame } from './detector.js';
import { saveModelToDir } from './model_io.js';
import { readFrame, Frame } from './images.js';
import { SampleRow, DEFAULT_HYPER } from './protocol.js';

/**
 * Trains a starter checkpoint from a frame directory and an annotations
 * file, the same JSON shape the scene tooling writes: a labels list plus
 * per-frame object lists. A freshly initialized head detects nothing, so
 * a specialization loop driven by this worker needs a checkpoint that has
 * already seen a few labeled frames. This script produces one.
 *
 *   node dist/pretrain_checkpoint.js --frames runs/scene/frames \
 *       --annotations runs/scene/annotations.json --out checkpoints/generic \
 *       --stride 4 --epochs 40
 */

interface AnnotatedFrame {
  file: string;
  objects: Array<{ label: string; u: number; v: number; w: number; h: number }>;
}

function argValue(argv: string[], flag: string): string | null {
  const at = argv.indexOf(flag);
  return at === -1 || at + 1 >= argv.length ? null : argv[at + 1];
}

async function loadAnnotated(
  framesDir: string,
  annotationsPath: string,
): Promise<{ labels: string[]; frames: AnnotatedFrame[] }> {
  const annotations = JSON.parse(await fs.readFile(annotationsPath, 'utf8'));
  const files = (await fs.readdir(framesDir))
    .filter(name => name.endsWith('.png'))
    .sort()
    .map(name => path.join(framesDir, name));
  if (files.length !== annotations.frames.length) {
    throw new Error(
      `${files.length} frames on disk but ${annotations.frames.length} annotated`,
    );
  }
  const frames = annotations.frames.map((entry: { objects: AnnotatedFrame['objects'] }, i: number) => ({
    file: files[i],
    objects: entry.objects,
  }));
  return { labels: annotations.labels, frames };
}

async function main(): Promise<void> {
  const argv = process.argv.slice(2);
  const framesDir = argValue(argv, '--frames');
  const annotationsPath = argValue(argv, '--annotations');
  const out = argValue(argv, '--out');
  if (framesDir === null || annotationsPath === null || out === null) {
    console.error(
      'usage: node dist/pretrain_checkpoint.js --frames <dir> --annotations <json> ' +
        '--out <dir> [--stride N] [--epochs N] [--learning-rate X] [--input-size N] [--seed N]',
    );
    process.exit(2);
  }
  const stride = Number(argValue(argv, '--stride') ?? '4');
  const epochs = Number(argValue(argv, '--epochs') ?? '40');
  const learningRate = Number(argValue(argv, '--learning-rate') ?? '0.02');
  const inputSize = Number(argValue(argv, '--input-size') ?? '64');
  const seed = Number(argValue(argv, '--seed') ?? '7');

  await tf.ready();
  const { labels, frames: annotated } = await loadAnnotated(framesDir, annotationsPath);
  const picked = annotated.filter((_, i) => i % stride === 0);
  const frames: Frame[] = [];
  const samples: SampleRow[] = [];
  for (let i = 0; i < picked.length; i++) {
    frames.push(await readFrame(picked[i].file));
    for (const obj of picked[i].objects) {
      samples.push([i, obj.label, obj.u, obj.v, obj.w, obj.h]);
    }
  }
  console.log(
    `training on ${frames.length} of ${annotated.length} frames ` +
      `(${samples.length} boxes, ${epochs} epochs, lr ${learningRate})`,
  );

  const settings = { inputSize, scoreThreshold: 0.5, nmsIou: 0.45 };
  const model = buildDetector(inputSize, labels.length, seed);
  await finetuneModel(
    model,
    frames,
    samples,
    labels,
    settings,
    { epochs, learningRate, boxLossWeight: 1.0 },
    DEFAULT_HYPER,
  );

  let hits = 0;
  for (let i = 0; i < frames.length; i++) {
    const rows = await detectFrame(model, frames[i], i, labels, settings);
    if (rows.length > 0) {
      hits += 1;
    }
  }
  console.log(`sanity check: detections on ${hits}/${frames.length} training frames`);

  await saveModelToDir(model, out);
  console.log(`wrote ${out}`);
}

main().catch(err => {
  console.error(err instanceof Error ? err.message : String(err));
  process.exit(1);
});
