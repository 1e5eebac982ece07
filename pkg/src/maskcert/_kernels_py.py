"""Pure-Python hot kernels: masked-copy sampling, scoring, and reduction.

This module is the reference semantics for maskcert._kernels (the Cython
extension). The two implementations must stay in lockstep: identical RNG
consumption, identical accumulation order (ascending kept positions, Kahan
summation in draw order), so that both backends produce bit-identical
floats. tests/test_backends.py enforces this.

Scoring programs arrive as plain attribute bundles (see scorer.ScoreProgram):
  mode    0 = lexical Dice, 1 = hashed-linear sigmoid
  match   int32[T], index into qcount for positions whose token occurs in the
          query, else -1
  qcount  int32[nq], multiplicity of each distinct query token
  pos_z   float64[T], per-position class-logit contribution when kept (mode 1)
  ov_w    class-logit weight of the capped overlap count (mode 1)
  mask_w  class-logit weight of the mask-count feature (mode 1)
  denom   |q| + T, the Dice denominator (mode 0)
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def seed_state(seed: int, stream: int) -> int:
    """Initial splitmix64 state for a (seed, stream) pair."""
    return _mix64((seed & _MASK64) ^ _mix64(stream & _MASK64))


def _next_u64(state: int) -> tuple[int, int]:
    state = (state + _GAMMA) & _MASK64
    return _mix64(state), state


def _rand_below(n: int, state: int) -> tuple[int, int]:
    # rejection sampling keeps the draw exactly uniform over [0, n)
    threshold = ((1 << 64) - n) % n
    while True:
        v, state = _next_u64(state)
        if v >= threshold:
            return v % n, state


def rand_below(n: int, state: int) -> tuple[int, int]:
    """One uniform draw from [0, n); returns (value, new_state)."""
    return _rand_below(n, state)


def _draw_subset(T: int, k: int, perm: list[int], state: int) -> tuple[list[int], int]:
    """Partial Fisher-Yates: k distinct 0-based positions, returned sorted.

    ``perm`` is a reusable identity scratch; swaps are undone afterwards so
    each draw costs O(k) and consumes exactly k bounded draws.
    """
    swaps = []
    for i in range(k):
        j, state = _rand_below(T - i, state)
        j += i
        perm[i], perm[j] = perm[j], perm[i]
        swaps.append(j)
    out = sorted(perm[:k])
    for i in range(k - 1, -1, -1):
        j = swaps[i]
        perm[i], perm[j] = perm[j], perm[i]
    return out, state


def sample_sets(T: int, k: int, n: int, state: int) -> tuple[np.ndarray, int]:
    """n keep sets from U(T,k) as an (n, k) int32 array of sorted positions."""
    perm = list(range(T))
    out = np.empty((n, k), dtype=np.int32)
    for i in range(n):
        row, state = _draw_subset(T, k, perm, state)
        out[i, :] = row
    return out, state


def _eval_kept(kept, prog, cnt) -> float:
    """Score one masked copy given its sorted kept positions (0-based)."""
    match = prog.match
    qcount = prog.qcount
    pos_z = prog.pos_z
    ov = 0
    z = 0.0
    for p in kept:
        m = match[p]
        if m >= 0:
            cnt[m] += 1
            if cnt[m] <= qcount[m]:
                ov += 1
        if prog.mode == 1:
            z += pos_z[p]
    for p in kept:
        m = match[p]
        if m >= 0:
            cnt[m] = 0
    if prog.mode == 0:
        return (2.0 * ov) / prog.denom
    t = z + prog.ov_w * ov
    t = t - prog.mask_w * len(kept)
    return float(1.0 / (1.0 + math.exp(-t)))


def eval_kept(kept, prog) -> float:
    """Public single-copy evaluator (generic scoring path)."""
    cnt = [0] * len(prog.qcount)
    return _eval_kept(list(kept), prog, cnt)


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


def masked_mean(
    prog, T: int, k: int, n: int, state: int, want_scores: bool = False
) -> tuple[float, float, np.ndarray | None, int]:
    """Monte Carlo mean/sd of the masked-copy score over n draws from U(T,k)."""
    perm = list(range(T))
    cnt = [0] * len(prog.qcount)
    scores = np.empty(n, dtype=np.float64)
    for i in range(n):
        kept, state = _draw_subset(T, k, perm, state)
        scores[i] = _eval_kept(kept, prog, cnt)
    mean, sd = _kahan_mean_sd(scores)
    return mean, sd, (scores if want_scores else None), state


def exact_masked_mean(prog, T: int, k: int, count: int) -> tuple[float, float, int]:
    """Exact mean/sd over every keep set in lexicographic order.

    ``count`` is C(T,k), precomputed by the caller (which also enforces the
    enumeration cap).
    """
    cnt = [0] * len(prog.qcount)
    scores = np.empty(count, dtype=np.float64)
    if k == 0:
        scores[0] = _eval_kept([], prog, cnt)
    else:
        idx = list(range(k))
        pos = 0
        while True:
            scores[pos] = _eval_kept(idx, prog, cnt)
            pos += 1
            i = k - 1
            while i >= 0 and idx[i] == i + T - k:
                i -= 1
            if i < 0:
                break
            idx[i] += 1
            for j in range(i + 1, k):
                idx[j] = idx[j - 1] + 1
    mean, sd = _kahan_mean_sd(scores)
    return mean, sd, count


def beta_estimate(
    prog,
    T: int,
    k: int,
    r: int,
    n_r: int,
    n_k: int,
    state: int,
    want_scores: bool = False,
) -> tuple[float, int, np.ndarray | None, int]:
    """Alg.-1 style estimate: mean copy score over keep sets that intersect
    a hypothesized r-subset of perturbed positions.

    Returns (mean, retained, scores|None, state). retained == 0 signals the
    caller to apply the conservative beta = 1 fallback.
    """
    perm = list(range(T))
    cnt = [0] * len(prog.qcount)
    amask = bytearray(T)
    buf = np.empty(n_r * n_k, dtype=np.float64) if want_scores else None
    total = 0.0
    c = 0.0
    retained = 0
    for _ in range(n_r):
        a, state = _draw_subset(T, r, perm, state)
        for p in a:
            amask[p] = 1
        for _ in range(n_k):
            b, state = _draw_subset(T, k, perm, state)
            hit = False
            for p in b:
                if amask[p]:
                    hit = True
                    break
            if not hit:
                continue
            s = _eval_kept(b, prog, cnt)
            if want_scores:
                buf[retained] = s
            retained += 1
            y = s - c
            t = total + y
            c = (t - total) - y
            total = t
        for p in a:
            amask[p] = 0
    if retained == 0:
        return 1.0, 0, (buf[:0] if want_scores else None), state
    mean = float(total / retained)
    return mean, retained, (buf[:retained] if want_scores else None), state
