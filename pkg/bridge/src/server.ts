/**
 * Protocol endpoint over a byte stream: line framing with a 1 MiB cap,
 * hello handshake, then one predict request per line. Works over the
 * process's stdio or per-socket in TCP mode; requests on one connection
 * are handled strictly in order.
 */
import * as net from "node:net";
import type { Readable, Writable } from "node:stream";
import { encodeRequest } from "./encode.js";
import type { SocialLstmModel } from "./model.js";
import {
  MAX_LINE_BYTES,
  PROTOCOL_VERSION,
  RequestError,
  requestIdOf,
  validatePredictRequest,
  type ErrorResponse,
  type PredictionResponse,
} from "./protocol.js";

export interface Session {
  model: SocialLstmModel;
  defaultHorizon: number;
}

function send(output: Writable, message: object): void {
  output.write(JSON.stringify(message) + "\n");
}

function sendError(output: Writable, id: number | null, message: string): void {
  send(output, { type: "error", id, message } satisfies ErrorResponse);
}

function handleLine(line: string, output: Writable, session: Session, state: { greeted: boolean }): void {
  let message: unknown;
  try {
    message = JSON.parse(line);
  } catch (err) {
    sendError(output, null, `invalid JSON: ${(err as Error).message}`);
    return;
  }

  const type =
    typeof message === "object" && message !== null
      ? (message as { type?: unknown }).type
      : undefined;

  if (!state.greeted) {
    if (type !== "hello") {
      sendError(output, requestIdOf(message), "expected a hello message first");
      return;
    }
    const version = (message as { protocol_version?: unknown }).protocol_version;
    if (version !== PROTOCOL_VERSION) {
      sendError(output, null, `unsupported protocol version ${JSON.stringify(version)}`);
      return;
    }
    state.greeted = true;
    send(output, { type: "hello", protocol_version: PROTOCOL_VERSION });
    return;
  }

  try {
    const request = validatePredictRequest(message, session.defaultHorizon);
    const tensors = encodeRequest(request, session.model.history);
    const { steps, maneuverProbs } = session.model.predict(
      tensors.target,
      tensors.grid,
      request.horizon,
    );
    send(output, {
      type: "prediction",
      id: request.id,
      steps,
      maneuver_probs: maneuverProbs,
    } satisfies PredictionResponse);
  } catch (err) {
    if (err instanceof RequestError) {
      sendError(output, err.id, err.message);
    } else {
      sendError(output, requestIdOf(message), `internal error: ${(err as Error).message}`);
    }
  }
}

/** Serve one connection until its input ends; resolves when drained. */
export function serveConnection(input: Readable, output: Writable, session: Session): Promise<void> {
  return new Promise((resolve) => {
    const state = { greeted: false };
    let pending: Buffer = Buffer.alloc(0);
    let closed = false;

    const finish = () => {
      if (!closed) {
        closed = true;
        resolve();
      }
    };

    input.on("data", (chunk: Buffer) => {
      pending = pending.length === 0 ? chunk : Buffer.concat([pending, chunk]);
      let newline: number;
      while ((newline = pending.indexOf(0x0a)) !== -1) {
        const line = pending.subarray(0, newline).toString("utf8").trim();
        pending = pending.subarray(newline + 1);
        if (line.length === 0) continue;
        if (Buffer.byteLength(line) > MAX_LINE_BYTES) {
          sendError(output, null, `request exceeds ${MAX_LINE_BYTES} bytes`);
          input.destroy();
          finish();
          return;
        }
        handleLine(line, output, session, state);
      }
      if (pending.length > MAX_LINE_BYTES) {
        sendError(output, null, `request exceeds ${MAX_LINE_BYTES} bytes`);
        input.destroy();
        finish();
      }
    });
    input.on("end", finish);
    input.on("error", finish);
    input.on("close", finish);
  });
}

/** Accept TCP connections until closed; reports the bound port via callback. */
export function serveTcp(
  session: Session,
  port: number,
  onListening: (boundPort: number) => void,
): net.Server {
  const server = net.createServer((socket) => {
    socket.on("error", () => socket.destroy());
    void serveConnection(socket, socket, session);
  });
  server.listen(port, "127.0.0.1", () => {
    onListening((server.address() as net.AddressInfo).port);
  });
  return server;
}
