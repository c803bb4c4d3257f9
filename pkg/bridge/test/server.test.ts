import { PassThrough } from "node:stream";
import { describe, expect, it } from "vitest";
import { SocialLstmModel } from "../src/model.js";
import { Rng } from "../src/rng.js";
import { MAX_LINE_BYTES, type TrackRow } from "../src/protocol.js";
import { serveConnection, type Session } from "../src/server.js";

const HELLO = { type: "hello", protocol_version: 1 };

function makeSession(): Session {
  return {
    model: new SocialLstmModel({ history: 16, seed: 1337 }),
    defaultHorizon: 25,
  };
}

function rows(history = 16): TrackRow[] {
  return Array.from({ length: history }, (_, i) => [0.2 * i, 1.6 * i, 0, 1]);
}

function predict(id: number, overrides: object = {}): object {
  return { type: "predict", id, target: rows(), neighbors: [], ...overrides };
}

/** Feed newline-joined messages through an in-memory connection. */
async function converse(
  lines: (string | object)[],
  session = makeSession(),
): Promise<Record<string, any>[]> {
  const input = new PassThrough();
  const output = new PassThrough();
  const chunks: Buffer[] = [];
  output.on("data", (chunk: Buffer) => chunks.push(chunk));
  const done = serveConnection(input, output, session);
  for (const line of lines) {
    input.write((typeof line === "string" ? line : JSON.stringify(line)) + "\n");
  }
  input.end();
  await done;
  const text = Buffer.concat(chunks).toString("utf8").trim();
  return text === "" ? [] : text.split("\n").map((l) => JSON.parse(l));
}

describe("serveConnection", () => {
  it("answers hello with hello", async () => {
    const replies = await converse([HELLO]);
    expect(replies).toEqual([{ type: "hello", protocol_version: 1 }]);
  });

  it("rejects any request before the hello", async () => {
    const replies = await converse([predict(1)]);
    expect(replies).toEqual([
      { type: "error", id: 1, message: "expected a hello message first" },
    ]);
  });

  it("rejects an unsupported protocol version but allows a retry", async () => {
    const replies = await converse([
      { type: "hello", protocol_version: 2 },
      HELLO,
      predict(1, { horizon: 1 }),
    ]);
    expect(replies[0].type).toBe("error");
    expect(replies[0].message).toMatch(/unsupported protocol version 2/);
    expect(replies[1]).toEqual({ type: "hello", protocol_version: 1 });
    expect(replies[2].type).toBe("prediction");
  });

  it("serves predictions with the default horizon", async () => {
    const replies = await converse([HELLO, predict(1)]);
    const reply = replies[1];
    expect(reply.type).toBe("prediction");
    expect(reply.id).toBe(1);
    expect(reply.steps).toHaveLength(25);
    for (const step of reply.steps) {
      expect(Object.keys(step).sort()).toEqual(["mux", "muy", "rho", "sigx", "sigy"]);
      expect(step.sigx).toBeGreaterThan(0);
      expect(step.sigy).toBeGreaterThan(0);
      expect(Math.abs(step.rho)).toBeLessThan(1);
    }
    const probs = Object.fromEntries(reply.maneuver_probs);
    expect(Object.keys(probs).sort()).toEqual(["keep", "lc_left", "lc_right"]);
    const total = (reply.maneuver_probs as [string, number][]).reduce(
      (a, [, p]) => a + p,
      0,
    );
    expect(total).toBeCloseTo(1, 9);
  });

  it("echoes the requested horizon", async () => {
    const replies = await converse([HELLO, predict(2, { horizon: 10 })]);
    expect(replies[1].id).toBe(2);
    expect(replies[1].steps).toHaveLength(10);
  });

  it("is deterministic across connections with the same seed", async () => {
    const first = await converse([HELLO, predict(1)]);
    const second = await converse([HELLO, predict(1)]);
    expect(first).toEqual(second);
  });

  it("reports invalid JSON with a null id", async () => {
    const replies = await converse([HELLO, "{nope"]);
    expect(replies[1].type).toBe("error");
    expect(replies[1].id).toBeNull();
    expect(replies[1].message).toMatch(/invalid JSON/);
  });

  it("reports validation errors under the request id", async () => {
    const replies = await converse([
      HELLO,
      predict(7, { target: rows(4) }),
      { type: "zap", id: 9 },
      predict(11, {
        neighbors: [
          { cell: [6, 1], track: rows() },
          { cell: [6, 1], track: rows() },
        ],
      }),
    ]);
    expect(replies[1]).toEqual({
      type: "error",
      id: 7,
      message: "wrong history length: target has 4 rows, expected 16",
    });
    expect(replies[2].id).toBe(9);
    expect(replies[2].message).toMatch(/unsupported message type "zap"/);
    expect(replies[3]).toEqual({
      type: "error",
      id: 11,
      message: "cell conflict: [6, 1] occupied twice",
    });
  });

  it("keeps serving after an error response", async () => {
    const replies = await converse([HELLO, predict(7, { horizon: 0 }), predict(8)]);
    expect(replies[1].type).toBe("error");
    expect(replies[2].type).toBe("prediction");
    expect(replies[2].id).toBe(8);
  });

  it("answers 100 random valid requests with well-formed Gaussians", async () => {
    // Arbitrary weights (not the default seed) and randomized payloads.
    const session: Session = {
      model: new SocialLstmModel({ history: 16, seed: 20260816 }),
      defaultHorizon: 25,
    };
    const rng = new Rng(99);
    const requests: object[] = [];
    const horizons: number[] = [];
    for (let id = 0; id < 100; id++) {
      const horizon = 1 + Math.floor(rng.next() * 50);
      horizons.push(horizon);
      const cells: [number, number][] = [];
      for (let row = 0; row < 13; row++) {
        for (let col = 0; col < 3; col++) {
          if (rng.next() < 0.08) cells.push([row, col]);
        }
      }
      requests.push({
        type: "predict",
        id,
        rate_hz: 5,
        horizon,
        target: Array.from({ length: 16 }, (_, i) => [
          0.2 * i,
          rng.normal(0, 30),
          rng.normal(0, 3),
          rng.next() < 0.1 ? 0 : 1,
        ]),
        neighbors: cells.map((cell) => ({
          cell,
          track: Array.from({ length: 16 }, (_, i) => [
            0.2 * i,
            rng.normal(0, 30),
            rng.normal(0, 3),
            1,
          ]),
        })),
      });
    }
    const replies = await converse([HELLO, ...requests], session);
    expect(replies).toHaveLength(101);
    for (let id = 0; id < 100; id++) {
      const reply = replies[id + 1];
      expect(reply.type).toBe("prediction");
      expect(reply.id).toBe(id);
      expect(reply.steps).toHaveLength(horizons[id]);
      for (const step of reply.steps) {
        expect(Number.isFinite(step.mux)).toBe(true);
        expect(Number.isFinite(step.muy)).toBe(true);
        expect(step.sigx).toBeGreaterThan(0);
        expect(step.sigy).toBeGreaterThan(0);
        expect(Math.abs(step.rho)).toBeLessThan(1);
      }
      const total = (reply.maneuver_probs as [string, number][]).reduce(
        (a, [, p]) => a + p,
        0,
      );
      expect(total).toBeCloseTo(1, 9);
    }
  });

  it("drops the connection on an oversized line", async () => {
    const big = JSON.stringify({ type: "predict", id: 1, pad: "x".repeat(MAX_LINE_BYTES) });
    const replies = await converse([HELLO, big, predict(2)]);
    expect(replies[0].type).toBe("hello");
    expect(replies[1].type).toBe("error");
    expect(replies[1].message).toMatch(/request exceeds 1048576 bytes/);
    // The valid request queued behind the oversized line is never served.
    expect(replies).toHaveLength(2);
  });

  it("drops the connection when unterminated input exceeds the cap", async () => {
    const input = new PassThrough();
    const output = new PassThrough();
    const chunks: Buffer[] = [];
    output.on("data", (chunk: Buffer) => chunks.push(chunk));
    const done = serveConnection(input, output, makeSession());
    input.write("x".repeat(MAX_LINE_BYTES + 1));
    await done;
    const replies = Buffer.concat(chunks).toString("utf8").trim().split("\n");
    expect(replies).toHaveLength(1);
    expect(JSON.parse(replies[0]).message).toMatch(/request exceeds/);
  });

  it("handles messages split across arbitrary chunk boundaries", async () => {
    const input = new PassThrough();
    const output = new PassThrough();
    const chunks: Buffer[] = [];
    output.on("data", (chunk: Buffer) => chunks.push(chunk));
    const done = serveConnection(input, output, makeSession());
    const wire = JSON.stringify(HELLO) + "\n" + JSON.stringify(predict(1, { horizon: 2 })) + "\n";
    for (const char of wire) input.write(char);
    input.end();
    await done;
    const replies = Buffer.concat(chunks).toString("utf8").trim().split("\n");
    expect(replies).toHaveLength(2);
    expect(JSON.parse(replies[1]).steps).toHaveLength(2);
  });
});
