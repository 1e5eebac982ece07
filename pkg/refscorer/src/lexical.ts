/**
 * The toy lexical scorer: token Dice with [MASK] excluded from the overlap.
 *
 * This mirrors the engine's builtin-lexical formula exactly:
 *   score = 2 * |q ∩ x| / (|q| + |x|)
 * where the intersection is a multiset intersection over non-[MASK] document
 * tokens (capped by query-token multiplicity) and |x| counts every position,
 * masks included. Integer counting plus a single float division keeps the
 * result bit-identical across language runtimes.
 */

export const MASK = "[MASK]";

export function overlap(query: string[], doc: string[]): number {
  const remaining = new Map<string, number>();
  for (const tok of query) {
    remaining.set(tok, (remaining.get(tok) ?? 0) + 1);
  }
  let hits = 0;
  for (const tok of doc) {
    if (tok === MASK) continue;
    const left = remaining.get(tok) ?? 0;
    if (left > 0) {
      remaining.set(tok, left - 1);
      hits += 1;
    }
  }
  return hits;
}

export function diceScore(query: string[], doc: string[]): number {
  return (2 * overlap(query, doc)) / (query.length + doc.length);
}

export function judgePair(
  query: string[],
  docI: string[],
  docJ: string[],
): [number, number] {
  const si = diceScore(query, docI);
  const sj = diceScore(query, docJ);
  const p1 = 1 / (1 + Math.exp(-(si - sj)));
  return [1 - p1, p1];
}
