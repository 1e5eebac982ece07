/**
 * Reference scorer server speaking the maskcert bridge protocol.
 *
 * Usage:
 *   node dist/server.js                 # stdio framing (default)
 *   node dist/server.js --tcp 4107      # TCP on a port
 *   node dist/server.js --scorer <mod>  # mount a custom scorer hook
 *
 * Stdio framing is one JSON per line, flushed per response; the process
 * exits cleanly when its input stream closes. The request loop is
 * single-threaded per connection; clients get parallelism by opening
 * several connections.
 */

import net from "node:net";
import readline from "node:readline";

import { loadHook, ScorerHook } from "./hook.js";
import { handleLine, responseLine } from "./protocol.js";

interface ServerConfig {
  transport: "stdio" | "tcp";
  port: number;
  scorer: string;
}

function parseArgs(argv: string[]): ServerConfig {
  const cfg: ServerConfig = { transport: "stdio", port: 0, scorer: "toy-lexical" };
  for (let i = 0; i < argv.length; i += 1) {
    const arg = argv[i];
    if (arg === "--tcp") {
      cfg.transport = "tcp";
      cfg.port = Number(argv[++i]);
      if (!Number.isInteger(cfg.port) || cfg.port < 0) {
        throw new Error("--tcp needs a port number");
      }
    } else if (arg === "--scorer") {
      cfg.scorer = argv[++i];
      if (!cfg.scorer) {
        throw new Error("--scorer needs a module path or toy-lexical");
      }
    } else {
      throw new Error(`unknown argument ${arg}`);
    }
  }
  return cfg;
}

function serveStdio(hook: ScorerHook): void {
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    const response = handleLine(line, hook);
    if (response !== null) {
      process.stdout.write(responseLine(response));
    }
  });
  rl.on("close", () => {
    process.exit(0);
  });
}

function serveTcp(hook: ScorerHook, port: number): void {
  const server = net.createServer((socket) => {
    const rl = readline.createInterface({ input: socket, terminal: false });
    rl.on("line", (line) => {
      const response = handleLine(line, hook);
      if (response !== null) {
        socket.write(responseLine(response));
      }
    });
    socket.on("error", () => {
      socket.destroy();
    });
  });
  server.listen(port, "127.0.0.1", () => {
    const addr = server.address();
    const bound = typeof addr === "object" && addr !== null ? addr.port : port;
    process.stderr.write(`refscorer listening on 127.0.0.1:${bound}\n`);
  });
}

async function main(): Promise<void> {
  const cfg = parseArgs(process.argv.slice(2));
  const hook = await loadHook(cfg.scorer);
  if (cfg.transport === "tcp") {
    serveTcp(hook, cfg.port);
  } else {
    serveStdio(hook);
  }
}

main().catch((err) => {
  process.stderr.write(`refscorer fatal: ${err instanceof Error ? err.message : err}\n`);
  process.exit(1);
});
