import * as tf from '@tensorflow/tfjs';
import { DetectionRow, Hyper, DEFAULT_HYPER, SampleRow } from './protocol.js';
import { Frame, frameToInput } from './images.js';

/**
 * Single-stage detection head on a tiny convolutional backbone. Three
 * stride-2 convolutions reduce the square input by 8x, then a 1x1
 * convolution emits numLabels class logits and four box channels per grid
 * cell. Boxes are parameterized in sigmoid space: the center offset within
 * the owning cell and the width and height as fractions of the frame.
 */

export const DOWNSAMPLE = 8;

export interface DetectorSettings {
  inputSize: number;
  scoreThreshold: number;
  nmsIou: number;
}

export function buildDetector(inputSize: number, numLabels: number, seed: number): tf.LayersModel {
  if (inputSize % DOWNSAMPLE !== 0) {
    throw new Error(`input size ${inputSize} is not a multiple of ${DOWNSAMPLE}`);
  }
  const input = tf.input({ shape: [inputSize, inputSize, 1] });
  let x: tf.SymbolicTensor = input;
  [8, 16, 32].forEach((filters, i) => {
    x = tf.layers
      .conv2d({
        filters,
        kernelSize: 3,
        strides: 2,
        padding: 'same',
        activation: 'relu',
        kernelInitializer: tf.initializers.glorotUniform({ seed: seed + i }),
        name: `feat_${i}`,
      })
      .apply(x) as tf.SymbolicTensor;
  });
  const head = tf.layers
    .conv2d({
      filters: numLabels + 4,
      kernelSize: 1,
      padding: 'same',
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 10 }),
      name: 'head',
    })
    .apply(x) as tf.SymbolicTensor;
  const model = tf.model({ inputs: input, outputs: head });

  // Start the class logits strongly negative so an untrained model stays
  // quiet instead of firing on every cell. sigmoid(-4) is about 0.018.
  // Weight order on a conv layer is [kernel, bias].
  const biasVar = model.getLayer('head').weights[1];
  const coldBias = tf.concat([tf.fill([numLabels], -4.0), tf.zeros([4])]);
  biasVar.write(coldBias);
  coldBias.dispose();
  return model;
}

/** Number of class channels implied by the head, or -1 if the shape is off. */
export function labelCapacity(model: tf.LayersModel): number {
  const shape = model.outputs[0].shape;
  const channels = shape[shape.length - 1];
  if (typeof channels !== 'number' || channels <= 4) {
    return -1;
  }
  return channels - 4;
}

export function gridSize(model: tf.LayersModel): number {
  const side = model.inputs[0].shape[1];
  if (typeof side !== 'number') {
    throw new Error('model input has no static spatial shape');
  }
  return side / DOWNSAMPLE;
}

function sigmoid(x: number): number {
  return 1 / (1 + Math.exp(-x));
}

interface PixelBox {
  label: number;
  score: number;
  u: number;
  v: number;
  w: number;
  h: number;
}

function boxIou(a: PixelBox, b: PixelBox): number {
  const x1 = Math.max(a.u, b.u);
  const y1 = Math.max(a.v, b.v);
  const x2 = Math.min(a.u + a.w, b.u + b.w);
  const y2 = Math.min(a.v + a.h, b.v + b.h);
  const inter = Math.max(0, x2 - x1) * Math.max(0, y2 - y1);
  if (inter === 0) {
    return 0;
  }
  return inter / (a.w * a.h + b.w * b.h - inter);
}

/** Greedy per-class suppression, highest score first. */
function suppress(boxes: PixelBox[], iouLimit: number): PixelBox[] {
  const ordered = [...boxes].sort((a, b) => b.score - a.score);
  const kept: PixelBox[] = [];
  for (const candidate of ordered) {
    const clash = kept.some(
      k => k.label === candidate.label && boxIou(k, candidate) > iouLimit,
    );
    if (!clash) {
      kept.push(candidate);
    }
  }
  return kept;
}

/**
 * Turns one frame's raw head output into detection rows in frame pixels.
 * Channel order per cell: numLabels class logits, then tx, ty, tw, th.
 */
export function decodeOutput(
  output: Float32Array,
  grid: number,
  numLabels: number,
  frameWidth: number,
  frameHeight: number,
  frameIndex: number,
  labels: string[],
  settings: DetectorSettings,
): DetectionRow[] {
  const channels = numLabels + 4;
  const raw: PixelBox[] = [];
  for (let gy = 0; gy < grid; gy++) {
    for (let gx = 0; gx < grid; gx++) {
      const base = (gy * grid + gx) * channels;
      for (let c = 0; c < numLabels; c++) {
        const score = sigmoid(output[base + c]);
        if (score < settings.scoreThreshold) {
          continue;
        }
        const cx = ((gx + sigmoid(output[base + numLabels])) / grid) * frameWidth;
        const cy = ((gy + sigmoid(output[base + numLabels + 1])) / grid) * frameHeight;
        const w = sigmoid(output[base + numLabels + 2]) * frameWidth;
        const h = sigmoid(output[base + numLabels + 3]) * frameHeight;
        let u = Math.round(cx - w / 2);
        let v = Math.round(cy - h / 2);
        u = Math.max(0, Math.min(frameWidth - 1, u));
        v = Math.max(0, Math.min(frameHeight - 1, v));
        const wpx = Math.min(frameWidth - u, Math.max(1, Math.round(w)));
        const hpx = Math.min(frameHeight - v, Math.max(1, Math.round(h)));
        raw.push({ label: c, score, u, v, w: wpx, h: hpx });
      }
    }
  }
  return suppress(raw, settings.nmsIou).map(box => [
    frameIndex,
    labels[box.label],
    box.score,
    box.u,
    box.v,
    box.w,
    box.h,
  ]);
}

export async function detectFrame(
  model: tf.LayersModel,
  frame: Frame,
  frameIndex: number,
  labels: string[],
  settings: DetectorSettings,
): Promise<DetectionRow[]> {
  const grid = gridSize(model);
  const input = frameToInput(frame, settings.inputSize);
  const prediction = tf.tidy(() => model.predict(input) as tf.Tensor4D);
  input.dispose();
  const output = (await prediction.data()) as Float32Array;
  prediction.dispose();
  return decodeOutput(
    output,
    grid,
    labels.length,
    frame.width,
    frame.height,
    frameIndex,
    labels,
    settings,
  );
}

export interface TrainingSettings {
  epochs: number;
  learningRate: number;
  /**
   * Scale on the box regression term. Finetuning on self-labeled scenes
   * works best near zero: the class head adapts to the new camera while
   * the geometry learned from curated boxes stays put. Pretraining on
   * trusted annotations wants the full 1.0.
   */
  boxLossWeight: number;
}

// On an 8x8 grid a frame with one object has 63 empty cells per positive
// one, so an unweighted cross-entropy barely moves the positives. Scaling
// their loss term keeps the class head from collapsing to all-background.
const POSITIVE_WEIGHT = 32;

/**
 * Builds dense training targets for one batch of frames. Each sample claims
 * the grid cell under its box center; the class channel there becomes 1 and
 * the box channels carry regression targets. Box targets live in logit
 * space, inverse-sigmoid of the fractional geometry, so the box loss acts
 * on raw head outputs and never saturates. posMask marks claimed cells so
 * the box loss ignores empty ones.
 */

function logit(fraction: number): number {
  const p = Math.min(1 - 1e-3, Math.max(1e-3, fraction));
  return Math.log(p / (1 - p));
}
export function buildTargets(
  frames: Frame[],
  samples: SampleRow[],
  grid: number,
  labels: string[],
): { classTarget: tf.Tensor4D; boxTarget: tf.Tensor4D; posMask: tf.Tensor4D } {
  const n = frames.length;
  const numLabels = labels.length;
  const classData = new Float32Array(n * grid * grid * numLabels);
  const boxData = new Float32Array(n * grid * grid * 4);
  const maskData = new Float32Array(n * grid * grid);
  for (const [frameIndex, label, u, v, w, h] of samples) {
    const frame = frames[frameIndex];
    const labelIndex = labels.indexOf(label);
    const cx = (u + w / 2) / frame.width;
    const cy = (v + h / 2) / frame.height;
    const gx = Math.min(grid - 1, Math.floor(cx * grid));
    const gy = Math.min(grid - 1, Math.floor(cy * grid));
    const cell = (frameIndex * grid + gy) * grid + gx;
    classData[cell * numLabels + labelIndex] = 1;
    boxData[cell * 4] = logit(cx * grid - gx);
    boxData[cell * 4 + 1] = logit(cy * grid - gy);
    boxData[cell * 4 + 2] = logit(w / frame.width);
    boxData[cell * 4 + 3] = logit(h / frame.height);
    maskData[cell] = 1;
  }
  return {
    classTarget: tf.tensor4d(classData, [n, grid, grid, numLabels]),
    boxTarget: tf.tensor4d(boxData, [n, grid, grid, 4]),
    posMask: tf.tensor4d(maskData, [n, grid, grid, 1]),
  };
}

/**
 * Runs a few epochs of full-batch gradient descent on the given model, in
 * place. Class channels get sigmoid cross-entropy over every cell, box
 * channels a masked mean squared error, and kernels an L2 penalty scaled
 * by hyper.weight_decay.
 */
export async function finetuneModel(
  model: tf.LayersModel,
  frames: Frame[],
  samples: SampleRow[],
  labels: string[],
  settings: DetectorSettings,
  training: TrainingSettings,
  hyper: Hyper,
): Promise<void> {
  const momentum = hyper.momentum ?? DEFAULT_HYPER.momentum;
  const weightDecay = hyper.weight_decay ?? DEFAULT_HYPER.weight_decay;
  const grid = gridSize(model);
  const numLabels = labels.length;

  const inputs = frames.map(frame => frameToInput(frame, settings.inputSize));
  const xs = tf.concat(inputs, 0);
  inputs.forEach(t => t.dispose());
  const { classTarget, boxTarget, posMask } = buildTargets(frames, samples, grid, labels);

  const kernels = model.trainableWeights
    .filter(w => w.name.includes('kernel'))
    .map(w => w.read() as tf.Variable);
  const variables = model.trainableWeights.map(w => w.read() as tf.Variable);

  const optimizer = tf.train.momentum(training.learningRate, momentum);
  const lossFn = (): tf.Scalar =>
    tf.tidy(() => {
      const pred = model.predict(xs) as tf.Tensor4D;
      const classLogits = tf.slice(pred, [0, 0, 0, 0], [-1, -1, -1, numLabels]);
      const boxPred = tf.slice(pred, [0, 0, 0, numLabels], [-1, -1, -1, 4]);
      const classWeights = tf.add(
        tf.scalar(1),
        tf.mul(classTarget, tf.scalar(POSITIVE_WEIGHT - 1)),
      );
      const classLoss = tf.losses.sigmoidCrossEntropy(classTarget, classLogits, classWeights);
      const squared = tf.mul(tf.square(tf.sub(boxPred, boxTarget)), posMask);
      const positives = tf.maximum(tf.sum(posMask), tf.scalar(1));
      const boxLoss = tf.mul(
        tf.scalar(training.boxLossWeight),
        tf.div(tf.sum(squared), tf.mul(positives, tf.scalar(4))),
      );
      let penalty = tf.scalar(0);
      for (const kernel of kernels) {
        penalty = tf.add(penalty, tf.sum(tf.square(kernel)));
      }
      return tf.add(
        tf.add(classLoss, boxLoss),
        tf.mul(tf.scalar(weightDecay), penalty),
      ) as tf.Scalar;
    });

  try {
    for (let epoch = 0; epoch < training.epochs; epoch++) {
      // Restricting the variable list keeps other registered models frozen.
      optimizer.minimize(lossFn, false, variables);
    }
  } finally {
    optimizer.dispose();
    xs.dispose();
    classTarget.dispose();
    boxTarget.dispose();
    posMask.dispose();
  }
}
