/**
 * Wire types for the detector worker protocol: newline-delimited JSON over
 * stdio, one request object per line, one response object per line. The
 * response echoes the request id (null when the request had none or could
 * not be parsed) and carries ok plus a payload, or ok:false plus an error
 * message. Errors are soft; the worker keeps serving.
 */

/** [frame_index, label, u, v, w, h] */
export type SampleRow = [number, string, number, number, number, number];

/** [frame_index, label, score, u, v, w, h] */
export type DetectionRow = [number, string, number, number, number, number, number];

export interface Hyper {
  momentum?: number;
  weight_decay?: number;
}

export const DEFAULT_HYPER: Required<Hyper> = {
  momentum: 0.9,
  weight_decay: 0.0005,
};

export interface OkResponse {
  id: unknown;
  ok: true;
  model_id?: string;
  detections?: DetectionRow[];
}

export interface ErrorResponse {
  id: unknown;
  ok: false;
  error: string;
}

export type Response = OkResponse | ErrorResponse;

export function isStringArray(value: unknown): value is string[] {
  return Array.isArray(value) && value.length > 0 && value.every(v => typeof v === 'string');
}
