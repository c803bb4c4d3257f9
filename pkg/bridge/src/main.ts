/**
 * Command line: bridge --transport stdio|tcp:PORT [--weights PATH]
 * [--history N] [--horizon N] [--seed N] [--device cpu]
 *
 * Without --weights the model runs in shape-check mode: seeded random
 * initialization, so responses are deterministic but untrained.
 */
import { buildSession, parseArgs, type BridgeConfig } from "./config.js";
import { serveConnection, serveTcp, type Session } from "./server.js";

function run(argv: string[]): void {
  let config: BridgeConfig;
  let session: Session;
  try {
    config = parseArgs(argv);
    session = buildSession(config);
  } catch (err) {
    process.stderr.write(`bridge: ${(err as Error).message}\n`);
    process.exitCode = 2;
    return;
  }

  if (config.transport === "stdio") {
    void serveConnection(process.stdin, process.stdout, session).then(() => process.exit(0));
  } else {
    const port = Number(config.transport.slice("tcp:".length));
    serveTcp(session, port, (boundPort) => {
      process.stderr.write(`bridge: listening on 127.0.0.1:${boundPort}\n`);
    });
  }
}

run(process.argv.slice(2));
