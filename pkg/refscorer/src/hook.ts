/**
 * Extension point for mounting a real neural scorer behind the bridge.
 *
 * A hook receives token lists, never raw text, and must handle the literal
 * "[MASK]" token natively; pretrained-transformer mask tokens align with it
 * directly, so a typical mount tokenizes per its own subword vocabulary and
 * maps "[MASK]" onto the model's mask id. Scores must land in [0, 1] (the
 * client rejects anything else) and judge probabilities must sum to 1.
 *
 * Mount a hook by passing `--scorer <path-to-module.js>`; the module's
 * default export must be a function returning a ScorerHook.
 */

import { diceScore, judgePair } from "./lexical.js";

export interface ScorerInfo {
  name: string;
  version: string;
  max_doc_tokens: number;
}

export interface ScorerHook {
  info(): ScorerInfo;
  score(query: string[], doc: string[]): number;
  judgePair(query: string[], docI: string[], docJ: string[]): [number, number];
}

export function toyLexicalHook(maxDocTokens = 256): ScorerHook {
  return {
    info: () => ({
      name: "toy-lexical",
      version: "1",
      max_doc_tokens: maxDocTokens,
    }),
    score: diceScore,
    judgePair,
  };
}

export async function loadHook(spec: string): Promise<ScorerHook> {
  if (spec === "toy-lexical") {
    return toyLexicalHook();
  }
  const mod = await import(spec);
  const factory = mod.default;
  if (typeof factory !== "function") {
    throw new Error(`custom hook module ${spec} has no default factory export`);
  }
  return factory() as ScorerHook;
}
