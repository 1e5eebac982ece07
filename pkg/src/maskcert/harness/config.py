"""Run configuration: one validated bundle per CLI invocation.

The echo() dict is embedded verbatim in every JSON report so any result can
be replayed; execution-infrastructure knobs (worker count) are deliberately
excluded so reports stay byte-identical across pool sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..certify import VARIANTS
from ..errors import InvalidParams


@dataclass
class RunConfig:
    command: str
    scorer: str = "lexical"
    weights: str | None = None
    bridge: str | None = None
    rho: float = 0.3
    n: int = 100
    n_prime: int = 1000
    n_r: int = 50
    n_k: int = 200
    K: int = 10
    variant: str = "conservative"
    seed: int = 0
    rounding: str = "half-up"
    exact: bool = False
    enum_cap: int = 200_000
    r_star: int = 1
    extra: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.scorer not in ("lexical", "hashed", "bridge"):
            raise InvalidParams(f"unknown scorer {self.scorer!r}")
        if self.scorer == "hashed" and not self.weights:
            raise InvalidParams("hashed scorer needs --weights")
        if self.variant not in VARIANTS:
            raise InvalidParams(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.rho < 1.0:
            raise InvalidParams(f"rho must be in [0, 1), got {self.rho}")
        if min(self.n, self.n_prime, self.n_r, self.n_k) < 1:
            raise InvalidParams("n, n_prime, n_r, n_k must all be >= 1")
        if self.n_prime < self.n:
            raise InvalidParams("n_prime must be >= n")
        if self.K < 1:
            raise InvalidParams("K must be >= 1")
        if self.rounding not in ("half-up", "floor"):
            raise InvalidParams(f"unknown rounding {self.rounding!r}")
        if self.r_star < 0:
            raise InvalidParams("r_star must be >= 0")
        return self

    def echo(self) -> dict:
        out = {
            "command": self.command,
            "scorer": self.scorer,
            "weights": self.weights,
            "bridge": self.bridge,
            "rho": self.rho,
            "n": self.n,
            "n_prime": self.n_prime,
            "n_r": self.n_r,
            "n_k": self.n_k,
            "K": self.K,
            "variant": self.variant,
            "seed": self.seed,
            "rounding": self.rounding,
            "exact": self.exact,
            "enum_cap": self.enum_cap,
            "r_star": self.r_star,
        }
        out.update(self.extra)
        return out
