/**
 * Trajectory predictor: an LSTM track encoder shared between the target and
 * its grid neighbors, a convolutional pooling layer over the 13x3 neighbor
 * grid, and an LSTM decoder emitting one bivariate Gaussian per future step.
 *
 * Runs with seeded random weights by default (shape-check mode); trained
 * weights can be loaded from the JSON format written by `saveWeights`.
 */
import { Rng } from "./rng.js";

export const GRID_ROWS = 13;
export const GRID_COLS = 3;
export const MANEUVER_LABELS = ["keep", "lc_left", "lc_right"] as const;

const EMBED = 16;
const HIDDEN = 32;
const SOCIAL_CHANNELS = 16;
const CONTEXT = HIDDEN + SOCIAL_CHANNELS * 2; // target encoding + pooled grid
const INPUT_CHANNELS = 3; // x, y, presence mask
const HEAD = 5; // mux, muy, log sigx, log sigy, raw rho
const RHO_LIMIT = 0.999;

export interface GaussianStep {
  mux: number;
  muy: number;
  sigx: number;
  sigy: number;
  rho: number;
}

export interface Prediction {
  steps: GaussianStep[];
  maneuverProbs: [string, number][];
}

/** One track as H rows of [x, y, mask]; a grid cell is a track or null. */
export type EncodedTrack = number[][];
export type NeighborGrid = (EncodedTrack | null)[][];

interface Dense {
  w: Float64Array; // rows x cols, row-major
  b: Float64Array;
  rows: number;
  cols: number;
}

interface LstmParams {
  wx: Dense; // 4*hidden x input, gate order i, f, o, g
  wh: Dense; // 4*hidden x hidden
  hidden: number;
}

function dense(rng: Rng, rows: number, cols: number): Dense {
  const w = new Float64Array(rows * cols);
  for (let i = 0; i < w.length; i++) w[i] = rng.normal(0, 0.08);
  return { w, b: new Float64Array(rows), rows, cols };
}

function lstm(rng: Rng, input: number, hidden: number): LstmParams {
  return { wx: dense(rng, 4 * hidden, input), wh: dense(rng, 4 * hidden, hidden), hidden };
}

function matVec(layer: Dense, x: ArrayLike<number>, out: Float64Array): Float64Array {
  for (let r = 0; r < layer.rows; r++) {
    let acc = layer.b[r];
    const base = r * layer.cols;
    for (let c = 0; c < layer.cols; c++) acc += layer.w[base + c] * x[c];
    out[r] = acc;
  }
  return out;
}

function sigmoid(x: number): number {
  return 1 / (1 + Math.exp(-x));
}

function lstmStep(
  params: LstmParams,
  x: ArrayLike<number>,
  h: Float64Array,
  c: Float64Array,
  scratch: { gx: Float64Array; gh: Float64Array },
): void {
  const n = params.hidden;
  matVec(params.wx, x, scratch.gx);
  matVec(params.wh, h, scratch.gh);
  for (let j = 0; j < n; j++) {
    const i = sigmoid(scratch.gx[j] + scratch.gh[j]);
    const f = sigmoid(scratch.gx[n + j] + scratch.gh[n + j]);
    const o = sigmoid(scratch.gx[2 * n + j] + scratch.gh[2 * n + j]);
    const g = Math.tanh(scratch.gx[3 * n + j] + scratch.gh[3 * n + j]);
    c[j] = f * c[j] + i * g;
    h[j] = o * Math.tanh(c[j]);
  }
}

function softmax(logits: Float64Array): number[] {
  const peak = Math.max(...logits);
  const exps = Array.from(logits, (v) => Math.exp(v - peak));
  const total = exps.reduce((a, b) => a + b, 0);
  return exps.map((v) => v / total);
}

export interface ModelOptions {
  history: number;
  seed: number;
}

export class SocialLstmModel {
  readonly history: number;
  readonly seed: number;

  private embed: Dense;
  private encoder: LstmParams;
  private conv: Dense; // SOCIAL_CHANNELS x (3*3*HIDDEN), 3x3 kernel over the grid
  private maneuverHead: Dense;
  private decoder: LstmParams;
  private outputHead: Dense;

  constructor(options: ModelOptions) {
    if (!Number.isInteger(options.history) || options.history < 2) {
      throw new Error(`history must be an integer >= 2, got ${options.history}`);
    }
    this.history = options.history;
    this.seed = options.seed;
    const rng = new Rng(options.seed);
    this.embed = dense(rng, EMBED, INPUT_CHANNELS);
    this.encoder = lstm(rng, EMBED, HIDDEN);
    this.conv = dense(rng, SOCIAL_CHANNELS, 3 * 3 * HIDDEN);
    this.maneuverHead = dense(rng, MANEUVER_LABELS.length, CONTEXT);
    this.decoder = lstm(rng, CONTEXT, HIDDEN);
    this.outputHead = dense(rng, HEAD, HIDDEN);
  }

  /** Final encoder hidden state for one H x [x, y, mask] track. */
  private encodeTrack(track: EncodedTrack): Float64Array {
    const h = new Float64Array(HIDDEN);
    const c = new Float64Array(HIDDEN);
    const embedded = new Float64Array(EMBED);
    const scratch = { gx: new Float64Array(4 * HIDDEN), gh: new Float64Array(4 * HIDDEN) };
    for (const row of track) {
      matVec(this.embed, row, embedded);
      for (let i = 0; i < EMBED; i++) embedded[i] = Math.tanh(embedded[i]);
      lstmStep(this.encoder, embedded, h, c, scratch);
    }
    return h;
  }

  /**
   * 3x3 convolution over the encoded neighbor grid (zero padding), ReLU,
   * then mean and max pooling over all positions.
   */
  private socialPool(encoded: (Float64Array | null)[][]): Float64Array {
    const pooled = new Float64Array(SOCIAL_CHANNELS * 2);
    const maxPart = pooled.subarray(SOCIAL_CHANNELS);
    const patch = new Float64Array(3 * 3 * HIDDEN);
    const activated = new Float64Array(SOCIAL_CHANNELS);
    maxPart.fill(-Infinity);
    for (let row = 0; row < GRID_ROWS; row++) {
      for (let col = 0; col < GRID_COLS; col++) {
        patch.fill(0);
        for (let dr = -1; dr <= 1; dr++) {
          for (let dc = -1; dc <= 1; dc++) {
            const cell = encoded[row + dr]?.[col + dc];
            if (!cell) continue;
            patch.set(cell, ((dr + 1) * 3 + (dc + 1)) * HIDDEN);
          }
        }
        matVec(this.conv, patch, activated);
        for (let k = 0; k < SOCIAL_CHANNELS; k++) {
          const v = Math.max(0, activated[k]);
          pooled[k] += v / (GRID_ROWS * GRID_COLS);
          if (v > maxPart[k]) maxPart[k] = v;
        }
      }
    }
    return pooled;
  }

  predict(target: EncodedTrack, grid: NeighborGrid, horizon: number): Prediction {
    const encodedGrid: (Float64Array | null)[][] = grid.map((row) =>
      row.map((cell) => (cell ? this.encodeTrack(cell) : null)),
    );
    const context = new Float64Array(CONTEXT);
    context.set(this.encodeTrack(target), 0);
    context.set(this.socialPool(encodedGrid), HIDDEN);

    const logits = new Float64Array(MANEUVER_LABELS.length);
    matVec(this.maneuverHead, context, logits);
    const probs = softmax(logits);
    const maneuverProbs: [string, number][] = MANEUVER_LABELS.map((label, i) => [
      label,
      probs[i],
    ]);

    const h = new Float64Array(HIDDEN);
    const c = new Float64Array(HIDDEN);
    const scratch = { gx: new Float64Array(4 * HIDDEN), gh: new Float64Array(4 * HIDDEN) };
    const raw = new Float64Array(HEAD);
    const steps: GaussianStep[] = [];
    for (let k = 0; k < horizon; k++) {
      lstmStep(this.decoder, context, h, c, scratch);
      matVec(this.outputHead, h, raw);
      steps.push({
        mux: raw[0],
        muy: raw[1],
        sigx: Math.exp(raw[2]),
        sigy: Math.exp(raw[3]),
        rho: RHO_LIMIT * Math.tanh(raw[4]),
      });
    }
    return { steps, maneuverProbs };
  }

  /** All parameters as named flat arrays (the on-disk weights layout). */
  parameters(): Record<string, Float64Array> {
    return {
      "embed.w": this.embed.w,
      "embed.b": this.embed.b,
      "encoder.wx.w": this.encoder.wx.w,
      "encoder.wx.b": this.encoder.wx.b,
      "encoder.wh.w": this.encoder.wh.w,
      "encoder.wh.b": this.encoder.wh.b,
      "conv.w": this.conv.w,
      "conv.b": this.conv.b,
      "maneuver.w": this.maneuverHead.w,
      "maneuver.b": this.maneuverHead.b,
      "decoder.wx.w": this.decoder.wx.w,
      "decoder.wx.b": this.decoder.wx.b,
      "decoder.wh.w": this.decoder.wh.w,
      "decoder.wh.b": this.decoder.wh.b,
      "head.w": this.outputHead.w,
      "head.b": this.outputHead.b,
    };
  }

  loadParameters(arrays: Record<string, number[]>): void {
    const own = this.parameters();
    const wanted = Object.keys(own).sort();
    const given = Object.keys(arrays).sort();
    if (wanted.join(",") !== given.join(",")) {
      throw new Error(
        `weights file holds [${given.join(", ")}], model needs [${wanted.join(", ")}]`,
      );
    }
    for (const name of wanted) {
      const source = arrays[name];
      if (source.length !== own[name].length) {
        throw new Error(
          `weights array ${name} has ${source.length} values, expected ${own[name].length}`,
        );
      }
      own[name].set(source);
    }
  }
}

export interface WeightsFile {
  version: number;
  history: number;
  arrays: Record<string, number[]>;
}

export function saveWeights(model: SocialLstmModel): WeightsFile {
  const arrays: Record<string, number[]> = {};
  for (const [name, values] of Object.entries(model.parameters())) {
    arrays[name] = Array.from(values);
  }
  return { version: 1, history: model.history, arrays };
}

export function loadWeights(model: SocialLstmModel, file: WeightsFile): void {
  if (file.version !== 1) {
    throw new Error(`unsupported weights version ${file.version}`);
  }
  if (file.history !== model.history) {
    throw new Error(`weights were trained for history ${file.history}, model uses ${model.history}`);
  }
  model.loadParameters(file.arrays);
}
