/**
 * Request -> model input tensors: the target history as H rows of
 * [x, y, mask] and the 13x3 neighbor grid with one encoded track per
 * occupied cell. Absent frames contribute zeros with mask 0.
 */
import { GRID_COLS, GRID_ROWS, type EncodedTrack, type NeighborGrid } from "./model.js";
import { RequestError, type PredictRequest, type TrackRow } from "./protocol.js";

export interface ModelTensors {
  target: EncodedTrack;
  grid: NeighborGrid;
}

function maskRows(track: TrackRow[]): EncodedTrack {
  return track.map(([, x, y, present]) => (present ? [x, y, 1] : [0, 0, 0]));
}

export function encodeRequest(request: PredictRequest, history: number): ModelTensors {
  if (request.target.length !== history) {
    throw new RequestError(
      `wrong history length: target has ${request.target.length} rows, expected ${history}`,
      request.id,
    );
  }

  const grid: NeighborGrid = Array.from({ length: GRID_ROWS }, () =>
    Array.from({ length: GRID_COLS }, () => null),
  );
  for (const neighbor of request.neighbors) {
    const [row, col] = neighbor.cell;
    if (row < 0 || row >= GRID_ROWS || col < 0 || col >= GRID_COLS) {
      throw new RequestError(
        `neighbor cell [${row}, ${col}] outside the ${GRID_ROWS}x${GRID_COLS} grid`,
        request.id,
      );
    }
    if (neighbor.track.length !== history) {
      throw new RequestError(
        `wrong history length: neighbor [${row}, ${col}] has ` +
          `${neighbor.track.length} rows, expected ${history}`,
        request.id,
      );
    }
    if (grid[row][col] !== null) {
      throw new RequestError(`cell conflict: [${row}, ${col}] occupied twice`, request.id);
    }
    grid[row][col] = maskRows(neighbor.track);
  }

  return { target: maskRows(request.target), grid };
}
