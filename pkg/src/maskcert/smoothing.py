"""The smoothed ranker and voting classifier built from random masking.

smoothed_score estimates E_{H~U(T,k)}[s(q, M(x,H))] with n Monte Carlo
copies; exact_smoothed_score replaces the estimate with full enumeration of
I(T,k) (the oracle used throughout the test suite). smoothed_vote is the
majority-vote classifier over masked copies of a document pair.

Scores from built-in scorers run through the kernel fast path; any other
handle (e.g. the external bridge) takes the generic path, which draws the
same keep sets from the same stream and reduces in the same order, so both
paths agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import InvalidParams, TooLarge
from .sampling import RngStream, SubsetDistribution, keep_count, enumerate_keep_sets
from .text import IndexSet, TokenSeq, apply_mask


@dataclass
class SmoothingConfig:
    rho: float = 0.3
    n: int = 100
    n_prime: int = 1000
    seed: int = 0
    strict_votes: bool = False  # tie -> class 0 instead of abstain
    rounding: str = "half-up"
    enum_cap: int = 200_000

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise InvalidParams(f"rho must be in [0, 1), got {self.rho}")
        if self.n < 1 or self.n_prime < self.n:
            raise InvalidParams("need n >= 1 and n_prime >= n")


@dataclass
class SmoothedScore:
    mean: float
    n: int
    stddev: float
    exact: bool = False
    scores: np.ndarray | None = None


ABSTAIN = "abstain"


@dataclass
class VoteOutcome:
    """Masked-copy vote; counts are floats because tie copies contribute
    half a vote to each class (they still sum to n)."""

    count0: float
    count1: float
    decision: int | str


def _kahan_mean_sd(scores) -> tuple[float, float]:
    n = len(scores)
    total = 0.0
    c = 0.0
    for s in scores:
        y = s - c
        t = total + y
        c = (t - total) - y
        total = t
    mean = total / n
    if n < 2:
        return float(mean), 0.0
    m2 = 0.0
    c = 0.0
    for s in scores:
        d = s - mean
        y = d * d - c
        t = m2 + y
        c = (t - m2) - y
        m2 = t
    return float(mean), float(math.sqrt(m2 / (n - 1)))


def smoothed_score(
    handle,
    q: TokenSeq,
    x: TokenSeq,
    cfg: SmoothingConfig,
    rng: RngStream | None = None,
    n: int | None = None,
    want_scores: bool = False,
) -> SmoothedScore:
    """Monte Carlo smoothed score with n copies (default cfg.n)."""
    if len(x) < 1:
        raise InvalidParams("document must have at least one token")
    n = cfg.n if n is None else n
    rng = rng if rng is not None else RngStream(cfg.seed, "smoothing.score")
    T = len(x)
    k = keep_count(T, cfg.rho, cfg.rounding)
    if k == T:
        # identity masking: every copy is x itself
        s = handle.score(q, x)
        scores = np.full(n, s) if want_scores else None
        return SmoothedScore(s, n, 0.0, exact=True, scores=scores)
    if hasattr(handle, "build_program"):
        prog = handle.build_program(q, x)
        mean, sd, scores, rng.state = kernels.masked_mean(
            prog, T, k, n, rng.state, want_scores
        )
        return SmoothedScore(mean, n, sd, scores=scores)
    rows = rng.sample_sets(T, k, n)
    scores = np.empty(n, dtype=np.float64)
    for i in range(n):
        keep = IndexSet(tuple(int(p) + 1 for p in rows[i]))
        scores[i] = handle.score(q, apply_mask(x, keep))
    mean, sd = _kahan_mean_sd(scores)
    return SmoothedScore(mean, n, sd, scores=scores if want_scores else None)


def exact_smoothed_score(
    handle,
    q: TokenSeq,
    x: TokenSeq,
    rho: float,
    cap: int = 200_000,
    rounding: str = "half-up",
) -> SmoothedScore:
    """Exact expectation over every keep set in I(T,k); flagged exact."""
    if len(x) < 1:
        raise InvalidParams("document must have at least one token")
    T = len(x)
    k = keep_count(T, rho, rounding)
    count = math.comb(T, k)
    if count > cap:
        raise TooLarge(count, cap)
    if hasattr(handle, "build_program"):
        prog = handle.build_program(q, x)
        mean, sd, _ = kernels.exact_masked_mean(prog, T, k, count)
        return SmoothedScore(mean, count, sd, exact=True)
    scores = np.empty(count, dtype=np.float64)
    for i, keep in enumerate(enumerate_keep_sets(SubsetDistribution(T, k), cap)):
        scores[i] = handle.score(q, apply_mask(x, keep))
    mean, sd = _kahan_mean_sd(scores)
    return SmoothedScore(mean, count, sd, exact=True)


def smoothed_vote(
    handle,
    q: TokenSeq,
    xi: TokenSeq,
    xj: TokenSeq,
    cfg: SmoothingConfig,
    rng: RngStream | None = None,
    n: int | None = None,
) -> VoteOutcome:
    """Majority vote of the pairwise judge over n masked copies.

    When the two documents have equal length, one keep set per copy drives
    both (maximizing cancellation); otherwise each document draws from its
    own U(T,k). Tie copies split their vote evenly.
    """
    n = cfg.n if n is None else n
    rng = rng if rng is not None else RngStream(cfg.seed, "smoothing.vote")
    Ti, Tj = len(xi), len(xj)
    ki = keep_count(Ti, cfg.rho, cfg.rounding)
    kj = keep_count(Tj, cfg.rho, cfg.rounding)
    if Ti == Tj:
        rows_i = rng.sample_sets(Ti, ki, n)
        rows_j = rows_i
    else:
        rows_i = rng.sample_sets(Ti, ki, n)
        rows_j = rng.sample_sets(Tj, kj, n)
    c0 = 0.0
    c1 = 0.0
    for i in range(n):
        keep_i = IndexSet(tuple(int(p) + 1 for p in rows_i[i]))
        keep_j = IndexSet(tuple(int(p) + 1 for p in rows_j[i]))
        judgment = handle.judge_pair(q, apply_mask(xi, keep_i), apply_mask(xj, keep_j))
        if judgment.tie:
            c0 += 0.5
            c1 += 0.5
        elif judgment.predicted == 1:
            c1 += 1.0
        else:
            c0 += 1.0
    if c1 > c0:
        decision: int | str = 1
    elif c0 > c1:
        decision = 0
    else:
        decision = 0 if cfg.strict_votes else ABSTAIN
    return VoteOutcome(c0, c1, decision)
