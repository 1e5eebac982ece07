"""Deterministic synthetic fixtures shared by acceptance tests and examples.

The 20-query corpus: queries are all C(6,3)=20 token triples over a
6-token vocabulary. Sixteen triples get a "specialist" document (3+3+2
copies of the triple's tokens; top of the smoothed ranking with margins
that certify small radii); the other four get a redundant-pair document
(4+4 copies of two of the triple's tokens) that dominates the smoothed
ranking while leaving the raw ranking attackable (no document contains all
three query tokens). T = 8 for every document.

Layout of tokens inside a document never matters to the lexical scorer;
profiles do. The structure was chosen so that, at rho = 0.75 (keep 2 of 8):
  - conservative certificates land at R in {0, 1} with clean margins,
  - brute force within every certified radius cannot beat the top document
    (attack ceilings stay strictly below the top's smoothed score),
  - the greedy budget-1 attack beats the raw ranker exactly on the four
    pair-query rankings and is defended by the smoothed ranker.
"""

from __future__ import annotations

import json
from itertools import combinations
from pathlib import Path

VOCAB = ("alpha", "bravo", "carol", "delta", "echo", "foxtrot")

# triples served by a redundant pair document instead of a specialist
PAIR_TRIPLES = {
    ("alpha", "bravo", "carol"): ("alpha", "bravo"),
    ("alpha", "delta", "echo"): ("delta", "echo"),
    ("bravo", "delta", "foxtrot"): ("bravo", "foxtrot"),
    ("carol", "echo", "foxtrot"): ("carol", "echo"),
}


def queries() -> list[tuple[str, str]]:
    """(qid, query text) for all 20 token triples, sorted."""
    out = []
    for i, triple in enumerate(combinations(VOCAB, 3), start=1):
        out.append((f"q{i:02d}", " ".join(triple)))
    return out


def _specialist_heavy_pair(triple: tuple[str, str, str]) -> tuple[str, str, str]:
    """Order the triple so its two weight-3 tokens collide least with the
    pair documents (avoids near-tie attack ceilings at pair queries)."""
    forbidden = set(PAIR_TRIPLES.values())
    orderings = [
        (triple[0], triple[1], triple[2]),
        (triple[0], triple[2], triple[1]),
        (triple[1], triple[2], triple[0]),
    ]
    for x, y, z in orderings:
        if (x, y) not in forbidden and (y, x) not in forbidden:
            return x, y, z
    return orderings[0]


def corpus() -> dict[str, str]:
    """doc_id -> text; 16 specialists + 4 pair documents, all T = 8."""
    docs: dict[str, str] = {}
    i = 1
    for triple in combinations(VOCAB, 3):
        if triple in PAIR_TRIPLES:
            x, y = PAIR_TRIPLES[triple]
            tokens = [x] * 4 + [y] * 4
            docs[f"p{i:02d}"] = " ".join(tokens)
        else:
            x, y, z = _specialist_heavy_pair(triple)
            tokens = [x] * 3 + [y] * 3 + [z] * 2
            docs[f"s{i:02d}"] = " ".join(tokens)
        i += 1
    return docs


def attack_vocab() -> tuple[str, ...]:
    return VOCAB


def write_corpus(path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc_id, text in corpus().items():
            fh.write(json.dumps({"doc_id": doc_id, "text": text}, sort_keys=True))
            fh.write("\n")


def write_queries(path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for qid, text in queries():
            fh.write(f"{qid}\t{text}\n")


# -- metric fixtures ---------------------------------------------------------

def write_eval_fixture(run_path: str | Path, qrels_path: str | Path) -> None:
    """3-query run/qrels pair with first-relevant ranks {1, 2, none}:
    MRR@10 = 0.5 exactly."""
    runs = {
        "e1": [("da", 0.9), ("db", 0.8)],
        "e2": [("dc", 0.9), ("dd", 0.8)],
        "e3": [("de", 0.9), ("df", 0.8)],
    }
    with Path(run_path).open("w", encoding="utf-8") as fh:
        for qid, ranking in runs.items():
            for rank, (doc_id, score) in enumerate(ranking, start=1):
                fh.write(f"{qid} Q0 {doc_id} {rank} {score!r} fixture\n")
    labels = [("e1", "da", 1), ("e2", "dd", 1), ("e3", "da", 0)]
    with Path(qrels_path).open("w", encoding="utf-8") as fh:
        for qid, doc_id, label in labels:
            fh.write(f"{qid} 0 {doc_id} {label}\n")


def write_training_triples(path: str | Path, n: int = 20) -> None:
    """Linearly separable triples for the hashed scorer."""
    pos_tok = ["red", "blue", "green", "gold"]
    neg_tok = ["rock", "sand", "mud", "clay"]
    with Path(path).open("w", encoding="utf-8") as fh:
        for i in range(n):
            a, b = pos_tok[i % 4], pos_tok[(i + 1) % 4]
            q = f"{a} {b} widget"
            pos = f"{a} {b} widget shop catalog item"
            neg = f"{neg_tok[i % 4]} {neg_tok[(i + 2) % 4]} pile heap dump yard"
            fh.write(f"{q}\t{pos}\t{neg}\n")


FIXTURE_RHO = 0.75
FIXTURE_K = 1  # rank boundary for certification
