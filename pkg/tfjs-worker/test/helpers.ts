import { spawn, ChildProcessWithoutNullStreams } from 'node:child_process';
import { createInterface } from 'node:readline';
import * as path from 'node:path';
import { fileURLToPath } from 'node:url';

export const PACKAGE_ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), '..');

/**
 * Drives a worker process over its stdio protocol. Requests and responses
 * pair one to one, so each send awaits exactly one stdout line.
 */
export class WorkerClient {
  private constructor(
    private readonly proc: ChildProcessWithoutNullStreams,
    private readonly lines: AsyncIterator<string>,
  ) {}

  static start(configPath: string = path.join('test', 'fixtures', 'config.json')): WorkerClient {
    const proc = spawn(process.execPath, ['dist/main.js', '--config', configPath], {
      cwd: PACKAGE_ROOT,
      stdio: ['pipe', 'pipe', 'inherit'],
    });
    const lines = createInterface({ input: proc.stdout })[Symbol.asyncIterator]();
    return new WorkerClient(proc, lines);
  }

  async request(payload: unknown): Promise<any> {
    return this.requestRaw(JSON.stringify(payload));
  }

  /** Sends a line verbatim, for exercising the parse error path. */
  async requestRaw(line: string): Promise<any> {
    this.proc.stdin.write(line + '\n');
    const { value, done } = await this.lines.next();
    if (done) {
      throw new Error('worker closed stdout');
    }
    return JSON.parse(value);
  }

  async close(): Promise<void> {
    this.proc.stdin.end();
    await new Promise<void>(resolve => {
      this.proc.once('exit', () => resolve());
    });
  }
}
