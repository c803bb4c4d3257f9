/**
 * Regenerates golden/transcript.ndjson: a recorded conversation with the
 * default (seeded random weights) session. Lines alternate {"send": ...}
 * and {"expect": ...}; the replay test compares numbers at 1e-9.
 */
import * as fs from "node:fs";
import * as path from "node:path";
import * as url from "node:url";
import { PassThrough } from "node:stream";
import { DEFAULT_CONFIG, buildSession } from "../src/config.js";
import { serveConnection } from "../src/server.js";
import { goldenRequests } from "./requests.js";

async function record(): Promise<string[]> {
  const session = buildSession(DEFAULT_CONFIG);
  const input = new PassThrough();
  const output = new PassThrough();
  const chunks: Buffer[] = [];
  output.on("data", (chunk: Buffer) => chunks.push(chunk));

  const served = serveConnection(input, output, session);
  const sends = goldenRequests();
  for (const message of sends) input.write(JSON.stringify(message) + "\n");
  input.end();
  await served;

  const replies = Buffer.concat(chunks).toString("utf8").trim().split("\n");
  if (replies.length !== sends.length) {
    throw new Error(`expected ${sends.length} replies, got ${replies.length}`);
  }
  const lines: string[] = [];
  sends.forEach((message, i) => {
    lines.push(JSON.stringify({ send: message }));
    lines.push(JSON.stringify({ expect: JSON.parse(replies[i]) }));
  });
  return lines;
}

const here = path.dirname(url.fileURLToPath(import.meta.url));
const target = path.resolve(here, "..", "..", "golden", "transcript.ndjson");
record().then((lines) => {
  fs.mkdirSync(path.dirname(target), { recursive: true });
  fs.writeFileSync(target, lines.join("\n") + "\n");
  process.stderr.write(`wrote ${lines.length} lines to ${target}\n`);
});
