import * as tf from '@tensorflow/tfjs';
import { spawn } from 'node:child_process';
import { createInterface } from 'node:readline';
import { promises as fs } from 'node:fs';
import * as path from 'node:path';
import { buildDetector } from './detector.js';
import { saveModelToDir } from './model_io.js';
import { writeGrayPng } from './images.js';

/**
 * Regenerates the committed test fixtures and the golden transcript: four
 * frames with one square sliding across them, a freshly seeded checkpoint,
 * and the recorded init/detect/finetune/detect exchange against a worker
 * spawned from dist/. Run from the package root after a build.
 */

const ROOT = process.cwd();
const FIXTURES = path.join(ROOT, 'test', 'fixtures');
const FRAME_COUNT = 4;
const WIDTH = 80;
const HEIGHT = 60;
const BOX_W = 16;
const BOX_H = 12;

function boxOrigin(frameIndex: number): { u: number; v: number } {
  return { u: 10 + 16 * frameIndex, v: 8 + 10 * frameIndex };
}

async function writeFixtures(): Promise<void> {
  const framesDir = path.join(FIXTURES, 'frames');
  await fs.mkdir(framesDir, { recursive: true });
  for (let i = 0; i < FRAME_COUNT; i++) {
    const { u, v } = boxOrigin(i);
    await writeGrayPng(path.join(framesDir, `frame_${i}.png`), WIDTH, HEIGHT, (x, y) => {
      const inside = x >= u && x < u + BOX_W && y >= v && y < v + BOX_H;
      return inside ? 230 : 25 + ((x * 3 + y * 5) % 13);
    });
  }

  await tf.ready();
  const model = buildDetector(64, 1, 7);
  await saveModelToDir(model, path.join(FIXTURES, 'checkpoints', 'generic'));
  model.dispose();

  const config = {
    checkpointRoot: 'checkpoints',
    inputSize: 64,
    scoreThreshold: 0.5,
    nmsIou: 0.45,
    training: { epochs: 60, learningRate: 0.02, boxLossWeight: 1.0 },
  };
  await fs.writeFile(
    path.join(FIXTURES, 'config.json'),
    JSON.stringify(config, null, 2) + '\n',
  );
}

async function record(): Promise<void> {
  const framePaths = Array.from({ length: FRAME_COUNT }, (_, i) =>
    path.join('test', 'fixtures', 'frames', `frame_${i}.png`),
  );
  const samples = Array.from({ length: FRAME_COUNT }, (_, i) => {
    const { u, v } = boxOrigin(i);
    return [i, 'car', u, v, BOX_W, BOX_H];
  });
  const requests = [
    { id: 1, op: 'init', model: 'generic', labels: ['car'] },
    { id: 2, op: 'detect', model_id: 'm0', frames: framePaths },
    {
      id: 3,
      op: 'finetune',
      model_id: 'm0',
      frames: framePaths,
      samples,
      hyper: { momentum: 0.9, weight_decay: 0.0005 },
    },
    { id: 4, op: 'detect', model_id: 'm1', frames: framePaths },
  ];

  const proc = spawn(
    process.execPath,
    ['dist/main.js', '--config', path.join('test', 'fixtures', 'config.json')],
    { cwd: ROOT, stdio: ['pipe', 'pipe', 'inherit'] },
  );
  const lines = createInterface({ input: proc.stdout! })[Symbol.asyncIterator]();
  const responses: unknown[] = [];
  for (const request of requests) {
    proc.stdin!.write(JSON.stringify(request) + '\n');
    const { value, done } = await lines.next();
    if (done) {
      throw new Error('worker closed stdout mid-exchange');
    }
    responses.push(JSON.parse(value));
  }
  proc.stdin!.end();

  const goldenDir = path.join(ROOT, 'test', 'golden');
  await fs.mkdir(goldenDir, { recursive: true });
  await fs.writeFile(
    path.join(goldenDir, 'transcript.json'),
    JSON.stringify({ requests, responses }, null, 2) + '\n',
  );

  for (const response of responses) {
    const r = response as { id: unknown; ok: boolean; detections?: unknown[] };
    const extra = r.detections !== undefined ? ` detections=${r.detections.length}` : '';
    console.log(`id=${r.id} ok=${r.ok}${extra}`);
  }
}

async function main(): Promise<void> {
  await writeFixtures();
  await record();
}

main().catch(err => {
  console.error(err instanceof Error ? err.stack : String(err));
  process.exit(1);
});
