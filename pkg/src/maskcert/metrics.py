"""Ranking and certification metrics.

Ranking quality: MRR@k and NDCG@k over TREC-style runs and qrels.
Certification quality: CRQ (fraction of queries certified at radius >= R*),
MCR (mean certified radius in tokens), MCRR (mean radius / document length).
Distribution comparison: histogram Jensen-Shannon divergence in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMetricInput, InvalidParams, MixedK


@dataclass
class RunList:
    """Per-query ranked (doc_id, score) lists, scores non-increasing."""

    rankings: dict[str, list[tuple[str, float]]]
    tag: str = "base"

    def __post_init__(self):
        for qid, ranking in self.rankings.items():
            ids = [d for d, _ in ranking]
            if len(ids) != len(set(ids)):
                raise InvalidParams(f"duplicate doc ids for query {qid}")
            scores = [s for _, s in ranking]
            if any(a < b for a, b in zip(scores, scores[1:])):
                raise InvalidParams(f"scores not non-increasing for query {qid}")


@dataclass
class Qrels:
    """Graded relevance labels in {0,1,2,3} keyed by (query id, doc id)."""

    labels: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        for key, label in self.labels.items():
            if label not in (0, 1, 2, 3):
                raise InvalidParams(f"label {label} for {key} outside 0..3")

    def label(self, qid: str, doc_id: str) -> int:
        return self.labels.get((qid, doc_id), 0)

    def judged(self, qid: str) -> list[int]:
        return [v for (q, _), v in self.labels.items() if q == qid]


def mrr_at_k(run: RunList, qrels: Qrels, k: int = 10) -> float:
    """Mean reciprocal rank of the first relevant (label >= 1) document."""
    if k < 1:
        raise InvalidParams("k must be >= 1")
    if not run.rankings:
        raise EmptyMetricInput("run has no queries")
    total = 0.0
    for qid, ranking in run.rankings.items():
        for rank, (doc_id, _) in enumerate(ranking[:k], start=1):
            if qrels.label(qid, doc_id) >= 1:
                total += 1.0 / rank
                break
    return total / len(run.rankings)


def _dcg(labels, k: int, gain: str) -> float:
    out = 0.0
    for rank, label in enumerate(labels[:k], start=1):
        g = (2**label - 1) if gain == "exp" else label
        out += g / math.log2(rank + 1)
    return out


def ndcg_at_k(run: RunList, qrels: Qrels, k: int = 10, gain: str = "exp") -> float:
    """NDCG with gain 2^label - 1 (TREC DL convention; "linear" selectable).

    The ideal DCG uses every judged document for the query; queries whose
    ideal DCG is zero contribute 0 and stay in the denominator.
    """
    if k < 1:
        raise InvalidParams("k must be >= 1")
    if gain not in ("exp", "linear"):
        raise InvalidParams(f"unknown gain {gain!r}")
    if not run.rankings:
        raise EmptyMetricInput("run has no queries")
    total = 0.0
    for qid, ranking in run.rankings.items():
        got = [qrels.label(qid, doc_id) for doc_id, _ in ranking]
        ideal = sorted(qrels.judged(qid), reverse=True)
        idcg = _dcg(ideal, k, gain)
        if idcg > 0.0:
            total += _dcg(got, k, gain) / idcg
    return total / len(run.rankings)


def crq(certificates, K: int, r_star: int = 1) -> float:
    """Certified Robust Query rate: share of queries with radius >= R*."""
    if not certificates:
        raise EmptyMetricInput("no certificates")
    for cert in certificates:
        if cert.K != K:
            raise MixedK(f"certificate for query {cert.query_id} has K={cert.K}")
    return sum(1 for c in certificates if c.R >= r_star) / len(certificates)


def mcr(certificates) -> float:
    """Mean certified radius, in tokens."""
    if not certificates:
        raise EmptyMetricInput("no certificates")
    return sum(c.R for c in certificates) / len(certificates)


def mcrr(certificates) -> float:
    """Mean certified radius as a fraction of document length."""
    if not certificates:
        raise EmptyMetricInput("no certificates")
    return sum(c.R / c.T for c in certificates) / len(certificates)


def js_divergence(samples_p, samples_q, bins: int = 50) -> float:
    """Histogram JSD in nats between two samples of values in [0, 1].

    Both samples share the same [0,1] binning; Laplace smoothing 1e-10 keeps
    the logs finite. Result lies in [0, ln 2].
    """
    if bins < 2:
        raise InvalidParams("bins must be >= 2")
    p = np.asarray(samples_p, dtype=np.float64)
    q = np.asarray(samples_q, dtype=np.float64)
    if p.size == 0 or q.size == 0:
        raise EmptyMetricInput("empty sample list")
    for arr in (p, q):
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidParams("samples must lie in [0, 1]")
    eps = 1e-10
    hp, _ = np.histogram(p, bins=bins, range=(0.0, 1.0))
    hq, _ = np.histogram(q, bins=bins, range=(0.0, 1.0))
    dp = (hp + eps) / (hp.sum() + eps * bins)
    dq = (hq + eps) / (hq.sum() + eps * bins)
    m = 0.5 * (dp + dq)
    kl_pm = float(np.sum(dp * np.log(dp / m)))
    kl_qm = float(np.sum(dq * np.log(dq / m)))
    return 0.5 * kl_pm + 0.5 * kl_qm
