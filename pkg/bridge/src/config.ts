/** Command-line configuration and session construction. */
import * as fs from "node:fs";
import { loadWeights, SocialLstmModel, type WeightsFile } from "./model.js";
import type { Session } from "./server.js";

export interface BridgeConfig {
  transport: string; // "stdio" | "tcp:<port>"
  weightsPath: string | null;
  device: string;
  history: number;
  horizon: number;
  seed: number;
}

export const DEFAULT_CONFIG: BridgeConfig = {
  transport: "stdio",
  weightsPath: null,
  device: "cpu",
  history: 16,
  horizon: 25,
  seed: 1337,
};

const USAGE =
  "usage: bridge [--transport stdio|tcp:PORT] [--weights PATH] " +
  "[--history N] [--horizon N] [--seed N] [--device cpu]";

export function parseArgs(argv: string[]): BridgeConfig {
  const config = { ...DEFAULT_CONFIG };
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`${flag} needs a value\n${USAGE}`);
    switch (flag) {
      case "--transport":
        if (value !== "stdio" && !/^tcp:\d+$/.test(value)) {
          throw new Error(`--transport must be stdio or tcp:PORT, got ${value}`);
        }
        config.transport = value;
        break;
      case "--weights":
        config.weightsPath = value;
        break;
      case "--device":
        if (value !== "cpu") throw new Error(`only --device cpu is supported, got ${value}`);
        config.device = value;
        break;
      case "--history":
      case "--horizon":
      case "--seed": {
        const parsed = Number(value);
        if (!Number.isInteger(parsed) || parsed < 0) {
          throw new Error(`${flag} must be a non-negative integer, got ${value}`);
        }
        config[flag.slice(2) as "history" | "horizon" | "seed"] = parsed;
        break;
      }
      default:
        throw new Error(`unknown flag ${flag}\n${USAGE}`);
    }
  }
  return config;
}

/** Build the model (random weights unless --weights points at a file). */
export function buildSession(config: BridgeConfig): Session {
  const model = new SocialLstmModel({ history: config.history, seed: config.seed });
  if (config.weightsPath !== null) {
    const file = JSON.parse(fs.readFileSync(config.weightsPath, "utf8")) as WeightsFile;
    loadWeights(model, file);
  }
  return { model, defaultHorizon: config.horizon };
}
