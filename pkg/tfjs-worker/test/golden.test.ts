import { describe, test, expect, beforeAll, afterAll } from 'vitest';
import { promises as fs } from 'node:fs';
import * as path from 'node:path';
import { WorkerClient, PACKAGE_ROOT } from './helpers.js';

/**
 * Replays the recorded init/detect/finetune/detect exchange against a
 * fresh worker and holds it to the committed transcript. Scores are float
 * valued and only range-checked; everything else must match the recording
 * exactly, ids and box geometry included.
 */

interface Transcript {
  requests: Array<Record<string, unknown>>;
  responses: Array<Record<string, unknown>>;
}

function maskScores(response: any): any {
  if (!Array.isArray(response.detections)) {
    return response;
  }
  return {
    ...response,
    detections: response.detections.map((row: unknown[]) =>
      row.map((value, i) => (i === 2 ? '<score>' : value)),
    ),
  };
}

describe('golden transcript', () => {
  let transcript: Transcript;
  let replayed: any[];
  let worker: WorkerClient;

  beforeAll(async () => {
    const raw = await fs.readFile(
      path.join(PACKAGE_ROOT, 'test', 'golden', 'transcript.json'),
      'utf8',
    );
    transcript = JSON.parse(raw);
    worker = WorkerClient.start();
    replayed = [];
    for (const request of transcript.requests) {
      replayed.push(await worker.request(request));
    }
  });

  afterAll(async () => {
    await worker.close();
  });

  test('covers the full init, detect, finetune, detect cycle', () => {
    expect(transcript.requests.map(r => r.op)).toEqual([
      'init',
      'detect',
      'finetune',
      'detect',
    ]);
    expect(replayed).toHaveLength(transcript.responses.length);
  });

  test('echoes every request id and succeeds end to end', () => {
    for (let i = 0; i < replayed.length; i++) {
      expect(replayed[i].id).toBe(transcript.requests[i].id);
      expect(replayed[i].ok).toBe(true);
    }
  });

  test('matches the recording outside of score fields', () => {
    for (let i = 0; i < replayed.length; i++) {
      expect(maskScores(replayed[i])).toEqual(maskScores(transcript.responses[i]));
    }
  });

  test('keeps scores inside the unit interval', () => {
    for (const response of replayed) {
      if (!Array.isArray(response.detections)) {
        continue;
      }
      for (const row of response.detections) {
        expect(typeof row[2]).toBe('number');
        expect(row[2]).toBeGreaterThanOrEqual(0);
        expect(row[2]).toBeLessThanOrEqual(1);
      }
    }
  });

  test('finetune mints a new generation', () => {
    const initId = replayed[0].model_id;
    const tunedId = replayed[2].model_id;
    expect(initId).toBe('m0');
    expect(tunedId).toBe('m1');
    expect(tunedId).not.toBe(initId);
  });

  test('the tuned model tracks the moving square, the cold one does not', () => {
    expect(replayed[1].detections).toEqual([]);
    const frames = new Set(replayed[3].detections.map((row: unknown[]) => row[0]));
    expect(frames).toEqual(new Set([0, 1, 2, 3]));
  });
});
