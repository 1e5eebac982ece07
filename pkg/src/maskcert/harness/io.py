"""Data ingestion and report persistence.

Formats:
  corpus        JSONL, one {"doc_id": ..., "text": ...} per line
  queries       TSV, qid <tab> text
  triples       TSV, query <tab> positive_doc <tab> negative_doc
  runs          TREC run format: qid Q0 docid rank score tag
  qrels         TREC qrels: qid 0 docid label
  certificates  JSONL, stable key order
Documents are truncated to MAX_DOC_TOKENS tokens at ingestion (logged);
text containing the [MASK] sentinel is rejected.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from ..errors import ParseError, SentinelCollision
from ..metrics import Qrels, RunList
from ..text import MASK, TokenSeq, tokenize

log = logging.getLogger("maskcert")

MAX_DOC_TOKENS = 256


def _truncate(x: TokenSeq, doc_id: str, limit: int = MAX_DOC_TOKENS) -> TokenSeq:
    if len(x) <= limit:
        return x
    log.warning("document %s truncated from %d to %d tokens", doc_id, len(x), limit)
    return TokenSeq(x.tokens[:limit])


def load_corpus(path: str | Path) -> dict[str, TokenSeq]:
    """JSONL corpus -> {doc_id: TokenSeq}, truncated and sentinel-checked."""
    corpus: dict[str, TokenSeq] = {}
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(path), line_no, f"bad JSON: {exc}") from exc
            if "doc_id" not in obj or "text" not in obj:
                raise ParseError(str(path), line_no, "need doc_id and text fields")
            try:
                tokens = tokenize(obj["text"], reject_sentinel=True)
            except SentinelCollision as exc:
                raise SentinelCollision(
                    f"{path}:{line_no}: document {obj['doc_id']} contains {MASK}"
                ) from exc
            corpus[str(obj["doc_id"])] = _truncate(tokens, str(obj["doc_id"]))
    return corpus


def load_queries(path: str | Path) -> list[tuple[str, TokenSeq]]:
    queries = []
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(str(path), line_no, "expected qid<TAB>text")
            qid, text = parts
            try:
                queries.append((qid, tokenize(text, reject_sentinel=True)))
            except SentinelCollision as exc:
                raise SentinelCollision(f"{path}:{line_no}: query contains {MASK}") from exc
    return queries


def load_triples(path: str | Path) -> list[tuple[str, str, str]]:
    triples = []
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    str(path), line_no, "expected query<TAB>positive<TAB>negative"
                )
            triples.append((parts[0], parts[1], parts[2]))
    return triples


def load_adversarial_pairs(path: str | Path) -> list[tuple[str, str, str]]:
    """Precomputed adversarial docs: query_id <tab> doc_id <tab> text."""
    rows = []
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    str(path), line_no, "expected query_id<TAB>doc_id<TAB>text"
                )
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def load_qrels(path: str | Path) -> Qrels:
    labels: dict[tuple[str, str], int] = {}
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ParseError(str(path), line_no, "expected qid 0 docid label")
            qid, _, doc_id, label = parts
            try:
                labels[(qid, doc_id)] = int(label)
            except ValueError as exc:
                raise ParseError(str(path), line_no, f"bad label {label!r}") from exc
    return Qrels(labels)


def load_run(path: str | Path, tag: str = "run") -> RunList:
    rankings: dict[str, list[tuple[str, float]]] = {}
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ParseError(
                    str(path), line_no, "expected qid Q0 docid rank score tag"
                )
            qid, _, doc_id, _, score, _ = parts
            try:
                rankings.setdefault(qid, []).append((doc_id, float(score)))
            except ValueError as exc:
                raise ParseError(str(path), line_no, f"bad score {score!r}") from exc
    for ranking in rankings.values():
        ranking.sort(key=lambda item: (-item[1], item[0]))
    return RunList(rankings, tag=tag)


def write_run(path: str | Path, run: RunList) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for qid in run.rankings:
            for rank, (doc_id, score) in enumerate(run.rankings[qid], start=1):
                fh.write(f"{qid} Q0 {doc_id} {rank} {score!r} {run.tag}\n")


def dump_json(obj: dict, path: str | Path) -> None:
    """Stable-key-order JSON with a trailing newline."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2))
        fh.write("\n")


def dump_jsonl(objs, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, sort_keys=True))
            fh.write("\n")
