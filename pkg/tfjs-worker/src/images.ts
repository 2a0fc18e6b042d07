import { PNG } from 'pngjs';
import { promises as fs } from 'node:fs';
import * as tf from '@tensorflow/tfjs';

/** A decoded frame: single-channel luma in [0, 1], row-major. */
export interface Frame {
  width: number;
  height: number;
  gray: Float32Array;
}

export async function readFrame(filePath: string): Promise<Frame> {
  let data: Buffer;
  try {
    data = await fs.readFile(filePath);
  } catch {
    throw new Error(`frame not readable: ${filePath}`);
  }
  let png: PNG;
  try {
    png = PNG.sync.read(data);
  } catch {
    throw new Error(`frame is not a valid PNG: ${filePath}`);
  }
  const gray = new Float32Array(png.width * png.height);
  for (let i = 0; i < gray.length; i++) {
    const o = i * 4;
    // Rec. 601 luma; alpha is ignored.
    gray[i] = (0.299 * png.data[o] + 0.587 * png.data[o + 1] + 0.114 * png.data[o + 2]) / 255;
  }
  return { width: png.width, height: png.height, gray };
}

/** Resizes a frame to the square model input and adds the batch axis. */
export function frameToInput(frame: Frame, inputSize: number): tf.Tensor4D {
  return tf.tidy(() => {
    const img = tf.tensor3d(frame.gray, [frame.height, frame.width, 1]);
    const resized = tf.image.resizeBilinear(img, [inputSize, inputSize]);
    return resized.expandDims(0) as tf.Tensor4D;
  });
}

/**
 * Writes a grayscale PNG, used by the fixture and transcript scripts. The
 * shade callback receives pixel coordinates and returns a value in [0, 255].
 */
export async function writeGrayPng(
  filePath: string,
  width: number,
  height: number,
  shade: (x: number, y: number) => number,
): Promise<void> {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const value = Math.max(0, Math.min(255, Math.round(shade(x, y))));
      const o = (y * width + x) * 4;
      png.data[o] = value;
      png.data[o + 1] = value;
      png.data[o + 2] = value;
      png.data[o + 3] = 255;
    }
  }
  await fs.writeFile(filePath, PNG.sync.write(png));
}
