/**
 * Newline-delimited JSON protocol types and request validation.
 *
 * Both ends open with {"type":"hello","protocol_version":1}. Predict
 * requests carry the target track and its grid neighbors as rows of
 * [t, x, y, present]; responses carry one Gaussian per future step plus
 * maneuver probabilities, or {"type":"error","id",...} on failure.
 */

export const PROTOCOL_VERSION = 1;
export const MAX_LINE_BYTES = 1 << 20; // 1 MiB per message
export const MAX_HORIZON = 1000;

export type TrackRow = [number, number, number, number]; // t, x, y, present

export interface NeighborEntry {
  cell: [number, number];
  track: TrackRow[];
}

export interface PredictRequest {
  type: "predict";
  id: number;
  rate_hz: number;
  horizon: number;
  target: TrackRow[];
  neighbors: NeighborEntry[];
}

export interface HelloMessage {
  type: "hello";
  protocol_version: number;
}

export interface WireStep {
  mux: number;
  muy: number;
  sigx: number;
  sigy: number;
  rho: number;
}

export interface PredictionResponse {
  type: "prediction";
  id: number;
  steps: WireStep[];
  maneuver_probs: [string, number][];
}

export interface ErrorResponse {
  type: "error";
  id: number | null;
  message: string;
}

/** Request rejected before reaching the model; `id` echoes the request when known. */
export class RequestError extends Error {
  readonly id: number | null;

  constructor(message: string, id: number | null) {
    super(message);
    this.id = id;
  }
}

/** Best-effort request id for error responses on otherwise invalid messages. */
export function requestIdOf(message: unknown): number | null {
  if (typeof message === "object" && message !== null && "id" in message) {
    const id = (message as { id: unknown }).id;
    if (typeof id === "number" && Number.isInteger(id) && id >= 0) return id;
  }
  return null;
}

function isTrackRow(row: unknown): row is TrackRow {
  return (
    Array.isArray(row) &&
    row.length === 4 &&
    row.every((v) => typeof v === "number" && Number.isFinite(v)) &&
    (row[3] === 0 || row[3] === 1)
  );
}

function validateTrack(track: unknown, what: string, id: number | null): TrackRow[] {
  if (!Array.isArray(track) || track.length === 0) {
    throw new RequestError(`${what} must be a non-empty list of [t, x, y, present] rows`, id);
  }
  for (const row of track) {
    if (!isTrackRow(row)) {
      throw new RequestError(`${what} rows must be [t, x, y, present] with present 0 or 1`, id);
    }
  }
  return track as TrackRow[];
}

export function validatePredictRequest(message: unknown, defaultHorizon: number): PredictRequest {
  const id = requestIdOf(message);
  if (typeof message !== "object" || message === null || Array.isArray(message)) {
    throw new RequestError("request must be a JSON object", id);
  }
  const msg = message as Record<string, unknown>;
  if (msg.type !== "predict") {
    throw new RequestError(`unsupported message type ${JSON.stringify(msg.type)}`, id);
  }
  if (id === null) {
    throw new RequestError("predict request needs a non-negative integer id", null);
  }

  const horizon = msg.horizon === undefined ? defaultHorizon : msg.horizon;
  if (typeof horizon !== "number" || !Number.isInteger(horizon) || horizon < 1) {
    throw new RequestError("horizon must be a positive integer", id);
  }
  if (horizon > MAX_HORIZON) {
    throw new RequestError(`horizon ${horizon} exceeds the maximum of ${MAX_HORIZON}`, id);
  }
  const rate = msg.rate_hz === undefined ? 5 : msg.rate_hz;
  if (typeof rate !== "number" || !(rate > 0)) {
    throw new RequestError("rate_hz must be a positive number", id);
  }

  const target = validateTrack(msg.target, "target", id);

  const neighbors: NeighborEntry[] = [];
  const rawNeighbors = msg.neighbors === undefined ? [] : msg.neighbors;
  if (!Array.isArray(rawNeighbors)) {
    throw new RequestError("neighbors must be a list", id);
  }
  for (const entry of rawNeighbors) {
    if (typeof entry !== "object" || entry === null) {
      throw new RequestError("each neighbor must be an object with cell and track", id);
    }
    const { cell, track } = entry as Record<string, unknown>;
    if (
      !Array.isArray(cell) ||
      cell.length !== 2 ||
      !cell.every((v) => typeof v === "number" && Number.isInteger(v))
    ) {
      throw new RequestError("neighbor cell must be an integer [row, col] pair", id);
    }
    neighbors.push({
      cell: cell as [number, number],
      track: validateTrack(track, "neighbor track", id),
    });
  }

  return { type: "predict", id, rate_hz: rate, horizon, target, neighbors };
}
