/**
 * Bridge message handling: one JSON request per line, one JSON response per
 * line. Responses echo the request id; malformed input produces an error
 * response (code "malformed") and the loop keeps serving.
 */

import { ScorerHook } from "./hook.js";

export interface BridgeError {
  code: string;
  message: string;
}

export interface BridgeResponse {
  id: number | null;
  result?: unknown;
  error?: BridgeError;
}

function fail(id: number | null, code: string, message: string): BridgeResponse {
  return { id, error: { code, message } };
}

function tokenList(value: unknown, field: string): string[] {
  if (!Array.isArray(value) || !value.every((t) => typeof t === "string")) {
    throw new Error(`${field} must be a list of token strings`);
  }
  if (value.length === 0) {
    throw new Error(`${field} must not be empty`);
  }
  return value as string[];
}

export function handleLine(line: string, hook: ScorerHook): BridgeResponse | null {
  const trimmed = line.trim();
  if (trimmed === "") {
    return null;
  }
  let req: Record<string, unknown>;
  try {
    req = JSON.parse(trimmed) as Record<string, unknown>;
  } catch {
    return fail(null, "malformed", "request line is not valid JSON");
  }
  const rawId = req["id"];
  const id = typeof rawId === "number" && Number.isInteger(rawId) ? rawId : null;
  if (id === null) {
    return fail(null, "malformed", "request id missing or not an integer");
  }
  const op = req["op"];
  try {
    switch (op) {
      case "info":
        return { id, result: hook.info() };
      case "score": {
        const query = tokenList(req["query"], "query");
        const doc = tokenList(req["doc"], "doc");
        return { id, result: hook.score(query, doc) };
      }
      case "judge_pair": {
        const query = tokenList(req["query"], "query");
        const docI = tokenList(req["doc_i"], "doc_i");
        const docJ = tokenList(req["doc_j"], "doc_j");
        return { id, result: hook.judgePair(query, docI, docJ) };
      }
      default:
        return fail(id, "unknown-op", `unsupported op ${String(op)}`);
    }
  } catch (err) {
    return fail(id, "bad-request", err instanceof Error ? err.message : String(err));
  }
}

export function responseLine(response: BridgeResponse): string {
  return JSON.stringify(response) + "\n";
}
