import * as tf from '@tensorflow/tfjs';
import { buildDetector } from './detector.js';
import { saveModelToDir } from './model_io.js';

/**
 * Writes a freshly initialized checkpoint directory, ready to be named in
 * an init request.
 *
 *   node dist/create_checkpoint.js --out checkpoints/generic \
 *       --labels car,person --input-size 64 --seed 7
 */

function argValue(argv: string[], flag: string): string | null {
  const at = argv.indexOf(flag);
  return at === -1 || at + 1 >= argv.length ? null : argv[at + 1];
}

async function main(): Promise<void> {
  const argv = process.argv.slice(2);
  const out = argValue(argv, '--out');
  const labelsArg = argValue(argv, '--labels');
  if (out === null || labelsArg === null) {
    console.error(
      'usage: node dist/create_checkpoint.js --out <dir> --labels <a,b,c> [--input-size N] [--seed N]',
    );
    process.exit(2);
  }
  const labels = labelsArg.split(',').filter(s => s !== '');
  const inputSize = Number(argValue(argv, '--input-size') ?? '64');
  const seed = Number(argValue(argv, '--seed') ?? '7');
  await tf.ready();
  const model = buildDetector(inputSize, labels.length, seed);
  await saveModelToDir(model, out);
  console.log(`wrote ${out} (${labels.length} labels, ${inputSize}px input, seed ${seed})`);
}

main().catch(err => {
  console.error(err instanceof Error ? err.message : String(err));
  process.exit(1);
});
