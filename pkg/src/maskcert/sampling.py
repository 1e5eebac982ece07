"""Uniform keep-set sampling over U(T,k), exact enumeration of I(T,k), and
binomial-ratio numerics.

All randomness flows through RngStream: a splitmix64 generator whose stream
id is derived from a dotted name (module.query_id.purpose), so any single
draw sequence can be replayed in isolation. Bit-exactness across languages
is not promised; bit-exactness within a build is (both kernel backends share
the generator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterator

from ._backend import kernels
from .errors import InvalidParams, TooLarge
from .text import IndexSet

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

EXACT_RATIONAL_MAX_T = 64


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def stream_id(name: str) -> int:
    """64-bit stream id for a dotted stream name."""
    return fnv1a64(name.encode("utf-8"))


class RngStream:
    """Deterministic per-purpose random stream.

    Two streams constructed with the same (seed, stream) always produce the
    same draw sequence within one build of the engine.
    """

    def __init__(self, seed: int, stream: int | str = 0):
        if isinstance(stream, str):
            stream = stream_id(stream)
        self.seed = seed & _MASK64
        self.stream = stream & _MASK64
        self.state = kernels.seed_state(self.seed, self.stream)

    def child(self, name: str) -> "RngStream":
        """Derive an independent stream by name (stream ids chain via FNV)."""
        derived = fnv1a64(self.stream.to_bytes(8, "little") + name.encode("utf-8"))
        return RngStream(self.seed, derived)

    def rand_below(self, n: int) -> int:
        """One uniform integer in [0, n)."""
        v, self.state = kernels.rand_below(n, self.state)
        return v

    def sample_sets(self, T: int, k: int, n: int):
        """n sorted 0-based keep sets as an (n, k) int32 array."""
        out, self.state = kernels.sample_sets(T, k, n, self.state)
        return out


@dataclass(frozen=True)
class SubsetDistribution:
    """U(T,k): the uniform distribution over k-subsets of {1..T}."""

    T: int
    k: int

    def __post_init__(self):
        if self.T < 1:
            raise InvalidParams(f"T must be >= 1, got {self.T}")
        if not 0 <= self.k <= self.T:
            raise InvalidParams(f"k must be in [0, {self.T}], got {self.k}")

    def size(self) -> int:
        return math.comb(self.T, self.k)


def keep_count(T: int, rho: float, rounding: str = "half-up") -> int:
    """Number of kept (unmasked) positions: T minus the rounded mask count.

    The bracket in k = T - [rho * T] is resolved as round half-up by
    default; "floor" is available for experiments.
    """
    if T < 1:
        raise InvalidParams(f"T must be >= 1, got {T}")
    if not 0.0 <= rho <= 1.0:
        raise InvalidParams(f"rho must be in [0, 1], got {rho}")
    if rounding == "half-up":
        masked = math.floor(rho * T + 0.5)
    elif rounding == "floor":
        masked = math.floor(rho * T)
    else:
        raise InvalidParams(f"unknown rounding mode {rounding!r}")
    return min(max(T - masked, 0), T)


def sample_keep_set(dist: SubsetDistribution, rng: RngStream) -> IndexSet:
    """One keep set drawn uniformly from U(T,k); 1-based, sorted."""
    row = rng.sample_sets(dist.T, dist.k, 1)[0]
    return IndexSet(tuple(int(p) + 1 for p in row))


def enumerate_keep_sets(
    dist: SubsetDistribution, cap: int = 1_000_000
) -> Iterator[IndexSet]:
    """All C(T,k) keep sets in lexicographic order; errors out above cap."""
    total = dist.size()
    if total > cap:
        raise TooLarge(total, cap)
    for combo in combinations(range(1, dist.T + 1), dist.k):
        yield IndexSet(combo)


def binom_ratio(T: int, k: int, R: int) -> float:
    """C(T-R, k) / C(T, k) in telescoping-product form.

    Equals prod_{i=0..k-1} (T-R-i)/(T-i); zero when fewer than k positions
    survive removing R. Raw factorials are never materialized, so T up to
    the ingestion limit is safe.
    """
    if T < 1:
        raise InvalidParams(f"T must be >= 1, got {T}")
    if not 0 <= k <= T:
        raise InvalidParams(f"k must be in [0, {T}], got {k}")
    if not 0 <= R <= T:
        raise InvalidParams(f"R must be in [0, {T}], got {R}")
    if T - R < k:
        return 0.0
    out = 1.0
    for i in range(k):
        out *= (T - R - i) / (T - i)
    return out


def binom_ratio_exact(T: int, k: int, R: int) -> Fraction:
    """Exact-rational C(T-R, k) / C(T, k); intended for T <= 64."""
    if T > EXACT_RATIONAL_MAX_T:
        raise InvalidParams(
            f"exact-rational path supports T <= {EXACT_RATIONAL_MAX_T}, got {T}"
        )
    if not (0 <= k <= T and 0 <= R <= T):
        raise InvalidParams(f"bad (T, k, R) = ({T}, {k}, {R})")
    if T - R < k:
        return Fraction(0)
    return Fraction(math.comb(T - R, k), math.comb(T, k))
