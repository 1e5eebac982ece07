"""Certified top-K robustness: bound terms, beta estimation, radius search.

The certification inequality for a boundary pair (x_K, x_{K+1}) at radius R
is  g_K - g_{K+1} - bound(R) >= 0,  where bound(R) depends on the variant:

  paper         alpha * beta * delta   (the published bound)
  conservative  beta * delta           (drops the 1/C(T,k) factor; default)
  beta-one      delta                  (beta pinned to 1)

alpha = 1/C(T,k); delta = 1 - C(T-R,k)/C(T,k) is the probability a uniform
keep set hits at least one of R fixed positions; beta is the Monte Carlo
mean masked-copy score over keep sets that intersect a hypothesized
R-subset of perturbed positions (estimated on the observed x_{K+1}; the
defender never sees the adversarial document).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._backend import kernels
from .errors import InvalidParams, ShortRanking
from .sampling import RngStream, binom_ratio, binom_ratio_exact, keep_count
from .smoothing import SmoothingConfig, exact_smoothed_score, smoothed_score
from .text import IndexSet, TokenSeq, apply_mask

VARIANTS = ("paper", "conservative", "beta-one")


def alpha(T: int, k: int) -> float:
    """1/C(T,k): the probability of any single masking combination."""
    if T < 1 or not 0 <= k <= T:
        raise InvalidParams(f"bad (T, k) = ({T}, {k})")
    c = math.comb(T, k)
    try:
        return 1.0 / float(c)
    except OverflowError:
        return 0.0


def alpha_exact(T: int, k: int) -> Fraction:
    return Fraction(1, math.comb(T, k))


def delta(T: int, k: int, R: int) -> float:
    """P(keep set intersects a fixed R-subset) = 1 - C(T-R,k)/C(T,k)."""
    return 1.0 - binom_ratio(T, k, R)


def delta_exact(T: int, k: int, R: int) -> Fraction:
    return 1 - binom_ratio_exact(T, k, R)


@dataclass(frozen=True)
class BoundTerms:
    alpha: float
    beta: float
    delta: float
    variant: str

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidParams(f"unknown variant {self.variant!r}")

    def bound(self) -> float:
        if self.variant == "paper":
            return self.alpha * self.beta * self.delta
        if self.variant == "conservative":
            return self.beta * self.delta
        return self.delta


@dataclass
class BetaEstimate:
    value: float
    retained: int
    requested: int
    fallback: bool = False  # zero survivors -> conservative beta = 1
    samples: np.ndarray | None = None


def estimate_beta(
    handle,
    q: TokenSeq,
    x: TokenSeq,
    T: int,
    k: int,
    r: int,
    n_r: int,
    n_k: int,
    rng: RngStream,
    want_samples: bool = False,
) -> BetaEstimate:
    """Monte Carlo beta: sample n_r hypothesized perturbation sets a~U(T,r),
    n_k keep sets b~U(T,k) each, discard disjoint (a,b), average the scores
    of the surviving masked copies of x.
    """
    if not 1 <= r <= T:
        raise InvalidParams(f"r must be in [1, {T}], got {r}")
    if n_r < 1 or n_k < 1:
        raise InvalidParams("n_r and n_k must be >= 1")
    if len(x) != T:
        raise InvalidParams(f"document length {len(x)} != T = {T}")
    if hasattr(handle, "build_program"):
        prog = handle.build_program(q, x)
        mean, retained, samples, rng.state = kernels.beta_estimate(
            prog, T, k, r, n_r, n_k, rng.state, want_samples
        )
        return BetaEstimate(mean, retained, n_r * n_k, retained == 0, samples)
    # generic path: identical draw order to the kernel
    total = 0.0
    c = 0.0
    retained = 0
    samples = [] if want_samples else None
    for _ in range(n_r):
        a = set(int(p) for p in rng.sample_sets(T, r, 1)[0])
        for _ in range(n_k):
            row = rng.sample_sets(T, k, 1)[0]
            if not any(int(p) in a for p in row):
                continue
            keep = IndexSet(tuple(int(p) + 1 for p in row))
            s = handle.score(q, apply_mask(x, keep))
            if samples is not None:
                samples.append(s)
            retained += 1
            y = s - c
            t = total + y
            c = (t - total) - y
            total = t
    if retained == 0:
        return BetaEstimate(1.0, 0, n_r * n_k, True,
                            np.empty(0) if want_samples else None)
    return BetaEstimate(
        float(total / retained),
        retained,
        n_r * n_k,
        False,
        np.asarray(samples) if want_samples else None,
    )


@dataclass
class CertifyConfig:
    rho: float = 0.3
    n_prime: int = 1000
    n_r: int = 50
    n_k: int = 200
    seed: int = 0
    rounding: str = "half-up"
    exact: bool = False  # enumerate g instead of sampling n_prime copies
    enum_cap: int = 200_000

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise InvalidParams(f"rho must be in [0, 1), got {self.rho}")
        if self.n_prime < 1 or self.n_r < 1 or self.n_k < 1:
            raise InvalidParams("n_prime, n_r, n_k must all be >= 1")


@dataclass
class Certificate:
    query_id: str
    K: int
    T: int
    R: int
    r_rate: float
    variant: str
    g_k: float
    g_k1: float
    margin: float
    robust: bool
    non_positive_margin: bool
    exact_scores: bool
    seed: int
    n_prime: int
    n_r: int
    n_k: int
    rho: float
    beta_trace: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "K": self.K,
            "T": self.T,
            "R": self.R,
            "r_rate": self.r_rate,
            "variant": self.variant,
            "g_k": self.g_k,
            "g_k1": self.g_k1,
            "margin": self.margin,
            "robust": self.robust,
            "non_positive_margin": self.non_positive_margin,
            "exact_scores": self.exact_scores,
            "seed": self.seed,
            "n_prime": self.n_prime,
            "n_r": self.n_r,
            "n_k": self.n_k,
            "rho": self.rho,
            "beta_trace": self.beta_trace,
        }


def _binary_search_radius(T: int, k: int, margin: float) -> int:
    """Largest R with delta(T,k,R) <= margin; delta is monotone in R."""
    lo, hi = 0, T  # invariant: delta(lo) <= margin, hi may fail
    if delta(T, k, T) <= margin:
        return T
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if delta(T, k, mid) <= margin:
            lo = mid
        else:
            hi = mid
    return lo


def _smoothed_boundary_score(handle, q, x, cfg: CertifyConfig, stream_name: str):
    if cfg.exact:
        return exact_smoothed_score(
            handle, q, x, cfg.rho, cfg.enum_cap, cfg.rounding
        )
    rng = RngStream(cfg.seed, stream_name)
    sm_cfg = SmoothingConfig(
        rho=cfg.rho, n=1, n_prime=max(cfg.n_prime, 1), seed=cfg.seed,
        rounding=cfg.rounding, enum_cap=cfg.enum_cap,
    )
    return smoothed_score(handle, q, x, sm_cfg, rng=rng, n=cfg.n_prime)


def certify_pair(
    handle,
    q: TokenSeq,
    x_k: TokenSeq,
    x_k1: TokenSeq,
    cfg: CertifyConfig,
    variant: str = "conservative",
    query_id: str = "q",
    K: int = 1,
    search: str = "linear",
) -> Certificate:
    """Largest radius R at which the certification inequality still holds.

    R is scanned linearly from 1 (the Alg. 2 loop); beta is re-estimated per
    R from a stream named by (query, R) only, so the three variants see
    identical beta draws and their radii nest. For beta-one the bound is
    delta alone, which is monotone in R, so a binary search is available;
    per-R beta re-estimation breaks guaranteed monotonicity for the other
    variants, which therefore always scan linearly.
    """
    if variant not in VARIANTS:
        raise InvalidParams(f"unknown variant {variant!r}")
    if search not in ("linear", "binary"):
        raise InvalidParams(f"unknown search mode {search!r}")
    if search == "binary" and variant != "beta-one":
        raise InvalidParams("binary search is only sound for the beta-one variant")
    if K < 1:
        raise InvalidParams(f"K must be >= 1, got {K}")
    T = len(x_k1)
    k = keep_count(T, cfg.rho, cfg.rounding)
    g_k = _smoothed_boundary_score(handle, q, x_k, cfg, f"certify.{query_id}.gk")
    g_k1 = _smoothed_boundary_score(handle, q, x_k1, cfg, f"certify.{query_id}.gk1")
    margin = g_k.mean - g_k1.mean

    if search == "binary" and margin > 0.0:
        certified = _binary_search_radius(T, k, margin)
        trace = [
            {
                "R": certified,
                "alpha": alpha(T, k),
                "beta": 1.0,
                "delta": delta(T, k, certified),
                "bound": delta(T, k, certified),
                "retained": 0,
                "beta_fallback": False,
                "passed": True,
            }
        ] if certified >= 1 else []
        return Certificate(
            query_id=query_id, K=K, T=T, R=certified, r_rate=certified / T,
            variant=variant, g_k=g_k.mean, g_k1=g_k1.mean, margin=margin,
            robust=certified >= 1, non_positive_margin=False,
            exact_scores=cfg.exact, seed=cfg.seed, n_prime=cfg.n_prime,
            n_r=cfg.n_r, n_k=cfg.n_k, rho=cfg.rho, beta_trace=trace,
        )

    trace: list[dict] = []
    certified = 0
    if margin > 0.0:
        a = alpha(T, k)
        for R in range(1, T + 1):
            d = delta(T, k, R)
            if variant == "beta-one":
                beta_val, retained, fallback = 1.0, 0, False
            else:
                est = estimate_beta(
                    handle, q, x_k1, T, k, R, cfg.n_r, cfg.n_k,
                    RngStream(cfg.seed, f"certify.{query_id}.beta.R{R}"),
                )
                beta_val, retained, fallback = est.value, est.retained, est.fallback
            terms = BoundTerms(a, beta_val, d, variant)
            bound = terms.bound()
            passed = bool(margin - bound >= 0.0)
            trace.append(
                {
                    "R": R,
                    "alpha": a,
                    "beta": beta_val,
                    "delta": d,
                    "bound": bound,
                    "retained": retained,
                    "beta_fallback": fallback,
                    "passed": passed,
                }
            )
            if not passed:
                break
            certified = R
    return Certificate(
        query_id=query_id,
        K=K,
        T=T,
        R=certified,
        r_rate=certified / T,
        variant=variant,
        g_k=g_k.mean,
        g_k1=g_k1.mean,
        margin=margin,
        robust=certified >= 1,
        non_positive_margin=bool(margin <= 0.0),
        exact_scores=cfg.exact,
        seed=cfg.seed,
        n_prime=cfg.n_prime,
        n_r=cfg.n_r,
        n_k=cfg.n_k,
        rho=cfg.rho,
        beta_trace=trace,
    )


def certify_query(
    handle,
    ranking: list[tuple[str, TokenSeq]],
    q: TokenSeq,
    K: int,
    cfg: CertifyConfig,
    variant: str = "conservative",
    query_id: str = "q",
) -> Certificate:
    """Certificate for the rank-K boundary of a ranked document list.

    The list must be sorted by smoothed score descending and contain at
    least K+1 documents; by monotonicity of g down the list the boundary
    pair (x_K, x_{K+1}) covers every document below the top K.
    """
    if len(ranking) < K + 1:
        raise ShortRanking(
            f"ranking has {len(ranking)} docs; need at least {K + 1}"
        )
    _, x_k = ranking[K - 1]
    _, x_k1 = ranking[K]
    return certify_pair(handle, q, x_k, x_k1, cfg, variant, query_id, K)
