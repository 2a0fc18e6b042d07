import * as tf from '@tensorflow/tfjs';
import { loadConfig } from './config.js';
import { DetectorWorker, serve } from './server.js';

function configPathFromArgv(argv: string[]): string | null {
  const flag = argv.indexOf('--config');
  if (flag === -1 || flag + 1 >= argv.length) {
    return null;
  }
  return argv[flag + 1];
}

async function main(): Promise<void> {
  const configPath = configPathFromArgv(process.argv.slice(2));
  if (configPath === null) {
    console.error('usage: node dist/main.js --config <path>');
    process.exit(2);
  }
  const config = await loadConfig(configPath);
  await tf.ready();
  console.error(`[worker] ready (backend ${tf.getBackend()}, checkpoints ${config.checkpointRoot})`);
  const worker = new DetectorWorker(config);
  await serve(worker);
}

main().catch(err => {
  console.error(`[worker] fatal: ${err instanceof Error ? err.message : String(err)}`);
  process.exit(1);
});
