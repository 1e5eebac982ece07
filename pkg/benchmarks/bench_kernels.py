"""Benchmark the compiled kernels against the pure-Python fallback.

Runs each hot kernel on representative workloads with both backends,
verifies the outputs are bit-identical, and prints a timing table.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from maskcert import _kernels_py as kpy
from maskcert.scorer import LexicalScorer, TrainConfig, train_pairwise
from maskcert.text import tokenize

try:
    from maskcert import _kernels as kc
except ImportError:
    kc = None


def _programs():
    q = tokenize("alpha bravo alpha carol")
    x = tokenize(" ".join(
        ["alpha", "carol", "bravo", "delta", "echo", "foxtrot"] * 5
    ))  # T = 30
    lex = LexicalScorer()
    handle, _ = train_pairwise(
        [("alpha bravo", "alpha bravo carol", "delta echo foxtrot")],
        TrainConfig(epochs=3, seed=7),
    )
    return q, x, {
        "lexical": lex.build_program(q, x),
        "hashed": handle.build_program(q, x),
    }


def _time(fn, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    if kc is None:
        print("compiled kernels not built; nothing to compare")
        return 1

    q, x, progs = _programs()
    T = len(x)
    k = 9  # rho = 0.7
    seed = kpy.seed_state(42, 1)

    workloads = [
        ("sample_sets 20k x U(30,9)",
         lambda mod: mod.sample_sets(T, k, 20_000, seed)),
        ("masked_mean lexical n=50k",
         lambda mod: mod.masked_mean(progs["lexical"], T, k, 50_000, seed)),
        ("masked_mean hashed n=50k",
         lambda mod: mod.masked_mean(progs["hashed"], T, k, 50_000, seed)),
        ("exact_mean lexical C(20,10)",
         lambda mod: mod.exact_masked_mean(
             _trim(progs["lexical"], 20), 20, 10, 184_756)),
        ("beta_estimate 200x500 r=6",
         lambda mod: mod.beta_estimate(progs["lexical"], T, k, 6, 200, 500, seed)),
    ]

    print(f"{'workload':<30} {'python':>10} {'cython':>10} {'speedup':>9}  equal")
    for name, fn in workloads:
        t_py, r_py = _time(lambda: fn(kpy), args.repeat)
        t_cy, r_cy = _time(lambda: fn(kc), args.repeat)
        equal = _same(r_py, r_cy)
        print(f"{name:<30} {t_py:>9.3f}s {t_cy:>9.3f}s {t_py / t_cy:>8.1f}x  {equal}")
    return 0


def _trim(prog, T):
    import copy

    out = copy.copy(prog)
    out.T = T
    out.match = prog.match[:T]
    out.pos_z = prog.pos_z[:T]
    return out


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return bool(np.array_equal(a, b))
    return a == b


if __name__ == "__main__":
    raise SystemExit(main())
