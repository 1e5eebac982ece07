"""Pluggable relevance scorers: pointwise scores in [0,1], pairwise class
probabilities, the pairwise training loss, and two deterministic built-ins.

The lexical built-in is formula-fixed (token Dice with [MASK] excluded) so
oracle tests stay scorer-independent. The hashed-linear built-in is
trainable: hashed unigram + query-cross features with overlap / length /
mask-count scalars, one weight state serving both the pairwise classifier
and the pointwise score (sigmoid of the class-logit difference against an
all-[MASK] reference document).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import EmptyDataset, InvalidParams
from .sampling import RngStream, SubsetDistribution, keep_count, sample_keep_set
from .text import MASK, MaskedSeq, TokenSeq, apply_mask, tokenize

N_BUCKETS = 1 << 16

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# scalar feature slots appended after the hash buckets
_F_OVERLAP = N_BUCKETS
_F_LENGTH = N_BUCKETS + 1
_F_MASKS = N_BUCKETS + 2
_F_BIAS = N_BUCKETS + 3
N_FEATURES = N_BUCKETS + 4


def _fnv(parts: tuple[str, ...]) -> int:
    h = _FNV_OFFSET
    for part in parts:
        for b in part.encode("utf-8"):
            h = ((h ^ b) * _FNV_PRIME) & _MASK64
        h = ((h ^ 0x1F) * _FNV_PRIME) & _MASK64
    return h


def _bucket_unigram(tok: str) -> int:
    return _fnv(("u", tok)) % N_BUCKETS


def _bucket_cross(q_tok: str, d_tok: str) -> int:
    return _fnv(("x", q_tok, d_tok)) % N_BUCKETS


@dataclass
class ScoreProgram:
    """Per-(query, document) scoring plan consumed by the kernels.

    mode 0 scores a masked copy as 2*overlap/denom (Dice); mode 1 as
    sigmoid(sum(pos_z[kept]) + ov_w*overlap - mask_w*|kept|). len_w and
    bias_d only matter for pairwise judgments (they cancel pointwise).
    """

    mode: int
    T: int
    match: np.ndarray
    qcount: np.ndarray
    pos_z: np.ndarray
    ov_w: float = 0.0
    mask_w: float = 0.0
    denom: float = 1.0
    len_w: float = 0.0
    bias_d: float = 0.0


def _query_table(q: TokenSeq) -> tuple[dict[str, int], np.ndarray]:
    """Distinct query tokens -> slot index, plus per-slot multiplicities."""
    slots: dict[str, int] = {}
    counts: list[int] = []
    for tok in q:
        if tok in slots:
            counts[slots[tok]] += 1
        else:
            slots[tok] = len(counts)
            counts.append(1)
    return slots, np.asarray(counts, dtype=np.int32)


def _match_array(x_tokens, slots: dict[str, int]) -> np.ndarray:
    return np.asarray(
        [slots.get(tok, -1) if tok != MASK else -1 for tok in x_tokens],
        dtype=np.int32,
    )


def _kept_positions(x: TokenSeq | MaskedSeq) -> list[int]:
    return [i for i, tok in enumerate(x.tokens) if tok != MASK]


@dataclass(frozen=True)
class PairwiseJudgment:
    """Class probabilities over Y={0,1}; class 1 means the first document
    is judged more relevant."""

    p: tuple[float, float]
    predicted: int
    tie: bool


def _judgment_from_p1(p1: float) -> PairwiseJudgment:
    p1 = min(max(p1, 0.0), 1.0)
    p0 = 1.0 - p1
    if p1 == p0:
        return PairwiseJudgment((p0, p1), 0, True)
    return PairwiseJudgment((p0, p1), 1 if p1 > p0 else 0, False)


class ScorerHandle:
    """Common surface of all scorers; built-ins also expose build_program."""

    kind: str = "abstract"
    name: str = "abstract"
    version: str = "0"

    def identity(self) -> dict:
        return {"kind": self.kind, "name": self.name, "version": self.version}

    def score(self, q: TokenSeq, x: TokenSeq | MaskedSeq) -> float:
        raise NotImplementedError

    def judge_pair(self, q: TokenSeq, xi, xj) -> PairwiseJudgment:
        raise NotImplementedError


class LexicalScorer(ScorerHandle):
    """Untrained token-Dice scorer: 2*|q ∩ x| / (|q| + |x|).

    The intersection is a multiset intersection over non-[MASK] tokens; the
    denominator uses the full document length (masks included) so masking a
    document can only lower its score.
    """

    kind = "builtin-lexical"
    name = "builtin-lexical"
    version = "1"

    def build_program(self, q: TokenSeq, x: TokenSeq | MaskedSeq) -> ScoreProgram:
        slots, qcount = _query_table(q)
        T = len(x)
        return ScoreProgram(
            mode=0,
            T=T,
            match=_match_array(x.tokens, slots),
            qcount=qcount,
            pos_z=np.zeros(T, dtype=np.float64),
            denom=float(len(q) + T),
        )

    def score(self, q: TokenSeq, x: TokenSeq | MaskedSeq) -> float:
        prog = self.build_program(q, x)
        return kernels.eval_kept(_kept_positions(x), prog)

    def judge_pair(self, q: TokenSeq, xi, xj) -> PairwiseJudgment:
        si = self.score(q, xi)
        sj = self.score(q, xj)
        return _judgment_from_p1(1.0 / (1.0 + math.exp(-(si - sj))))


class HashedLinearScorer(ScorerHandle):
    """Trainable linear scorer over hashed text features.

    Weight state is a (N_FEATURES, 2) matrix; class-1-minus-class-0 weight
    differences drive both the pairwise softmax and the pointwise sigmoid.
    """

    kind = "builtin-hashed-linear"
    name = "builtin-hashed-linear"
    version = "1"

    def __init__(self, weights: np.ndarray | None = None):
        if weights is None:
            weights = np.zeros((N_FEATURES, 2), dtype=np.float64)
        if weights.shape != (N_FEATURES, 2):
            raise InvalidParams(f"weight shape {weights.shape} != {(N_FEATURES, 2)}")
        self.weights = weights

    # -- feature plumbing ------------------------------------------------

    def features(self, q: TokenSeq, x: TokenSeq | MaskedSeq) -> dict[int, float]:
        """Sparse feature vector; [MASK] positions feed only the mask count."""
        slots, qcount = _query_table(q)
        phi: dict[int, float] = {}

        def bump(idx: int, v: float = 1.0):
            phi[idx] = phi.get(idx, 0.0) + v

        cnt = [0] * len(qcount)
        masks = 0
        for tok in x.tokens:
            if tok == MASK:
                masks += 1
                continue
            bump(_bucket_unigram(tok))
            for q_tok in q:
                bump(_bucket_cross(q_tok, tok))
            m = slots.get(tok, -1)
            if m >= 0:
                cnt[m] += 1
                if cnt[m] <= qcount[m]:
                    bump(_F_OVERLAP)
        bump(_F_LENGTH, float(len(x)))
        if masks:
            bump(_F_MASKS, float(masks))
        bump(_F_BIAS, 1.0)
        return phi

    def logits(self, phi: dict[int, float]) -> np.ndarray:
        out = np.zeros(2, dtype=np.float64)
        for idx, v in phi.items():
            out += self.weights[idx] * v
        return out

    def build_program(self, q: TokenSeq, x: TokenSeq | MaskedSeq) -> ScoreProgram:
        slots, qcount = _query_table(q)
        T = len(x)
        wd = self.weights[:, 1] - self.weights[:, 0]
        pos_z = np.zeros(T, dtype=np.float64)
        for p, tok in enumerate(x.tokens):
            if tok == MASK:
                continue
            z = wd[_bucket_unigram(tok)]
            for q_tok in q:
                z += wd[_bucket_cross(q_tok, tok)]
            pos_z[p] = z
        return ScoreProgram(
            mode=1,
            T=T,
            match=_match_array(x.tokens, slots),
            qcount=qcount,
            pos_z=pos_z,
            ov_w=float(wd[_F_OVERLAP]),
            mask_w=float(wd[_F_MASKS]),
            len_w=float(wd[_F_LENGTH]),
            bias_d=float(wd[_F_BIAS]),
        )

    # -- scoring ----------------------------------------------------------

    def score(self, q: TokenSeq, x: TokenSeq | MaskedSeq) -> float:
        prog = self.build_program(q, x)
        return kernels.eval_kept(_kept_positions(x), prog)

    def class_logit_diff(self, q: TokenSeq, x: TokenSeq | MaskedSeq) -> float:
        """(W phi)[1] - (W phi)[0], including length/mask/bias terms."""
        prog = self.build_program(q, x)
        kept = _kept_positions(x)
        cnt = [0] * len(prog.qcount)
        ov = 0
        z = 0.0
        for p in kept:
            m = prog.match[p]
            if m >= 0:
                cnt[m] += 1
                if cnt[m] <= prog.qcount[m]:
                    ov += 1
            z += prog.pos_z[p]
        n_masks = prog.T - len(kept)
        return (
            z
            + prog.ov_w * ov
            + prog.mask_w * n_masks
            + prog.len_w * prog.T
            + prog.bias_d
        )

    def judge_pair(self, q: TokenSeq, xi, xj) -> PairwiseJudgment:
        zi = self.class_logit_diff(q, xi)
        zj = self.class_logit_diff(q, xj)
        return _judgment_from_p1(1.0 / (1.0 + math.exp(-(zi - zj))))

    # -- persistence --------------------------------------------------------

    def state_dict(self) -> dict:
        nz = np.nonzero(np.any(self.weights != 0.0, axis=1))[0]
        return {
            "kind": self.kind,
            "version": self.version,
            "n_features": N_FEATURES,
            "weights": {str(int(i)): [self.weights[i, 0], self.weights[i, 1]] for i in nz},
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "HashedLinearScorer":
        if state.get("n_features") != N_FEATURES:
            raise InvalidParams("weight state has incompatible feature space")
        w = np.zeros((N_FEATURES, 2), dtype=np.float64)
        for key, pair in state["weights"].items():
            w[int(key)] = pair
        return cls(w)


def softmax2(d: np.ndarray) -> np.ndarray:
    m = float(np.max(d))
    e = np.exp(d - m)
    return e / e.sum()


def pairwise_loss(
    si: np.ndarray, sj: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Cross-entropy of softmax(si - sj) against a one-hot label.

    Returns (loss, dL/dsi, dL/dsj); the gradient w.r.t. (si - sj) is
    softmax(si - sj) - y, and dL/dsj is its negation.
    """
    si = np.asarray(si, dtype=np.float64)
    sj = np.asarray(sj, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if si.shape != (2,) or sj.shape != (2,) or y.shape != (2,):
        raise InvalidParams("si, sj, y must be 2-vectors")
    if sorted(y.tolist()) != [0.0, 1.0]:
        raise InvalidParams("y must be one-hot over two classes")
    d = si - sj
    p = softmax2(d)
    label = int(np.argmax(y))
    # stable -log softmax
    m = float(np.max(d))
    logz = m + math.log(math.exp(d[0] - m) + math.exp(d[1] - m))
    loss = logz - float(d[label])
    grad = p - y
    return loss, grad, -grad


@dataclass
class TrainConfig:
    rho_train: float = 0.0
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0
    balance: bool = True
    rounding: str = "half-up"

    def __post_init__(self):
        if not 0.0 <= self.rho_train < 1.0:
            raise InvalidParams(f"rho_train must be in [0, 1), got {self.rho_train}")
        if self.learning_rate <= 0:
            raise InvalidParams("learning rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidParams("epochs and batch size must be >= 1")


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    label_counts: dict[int, int] = field(default_factory=lambda: {0: 0, 1: 0})

    def non_increasing(self, tol: float = 1e-6) -> bool:
        return all(
            b <= a + tol for a, b in zip(self.epoch_losses, self.epoch_losses[1:])
        )


def _maybe_mask(x: TokenSeq, rho: float, rng: RngStream, rounding: str):
    if rho == 0.0:
        return x
    k = keep_count(len(x), rho, rounding)
    keep = sample_keep_set(SubsetDistribution(len(x), k), rng)
    return apply_mask(x, keep)


def train_pairwise(
    dataset: list[tuple[str, str, str]] | list[tuple[TokenSeq, TokenSeq, TokenSeq]],
    cfg: TrainConfig,
) -> tuple[HashedLinearScorer, TrainLog]:
    """SGD on the pairwise loss over (query, positive, negative) triples.

    Each triplet is duplicated with swapped documents and flipped label when
    balancing is on; every document instance is masked independently at
    rho_train before feature extraction.
    """
    if not dataset:
        raise EmptyDataset("no training triples")
    triples = []
    for q, pos, neg in dataset:
        q = q if isinstance(q, TokenSeq) else tokenize(q)
        pos = pos if isinstance(pos, TokenSeq) else tokenize(pos)
        neg = neg if isinstance(neg, TokenSeq) else tokenize(neg)
        triples.append((q, pos, neg))

    handle = HashedLinearScorer()
    log = TrainLog()
    order_rng = RngStream(cfg.seed, "train.order")
    mask_rng = RngStream(cfg.seed, "train.mask")
    y1 = np.array([0.0, 1.0])
    y0 = np.array([1.0, 0.0])

    for epoch in range(cfg.epochs):
        # Fisher-Yates shuffle of triplet order, driven by the order stream
        idx = list(range(len(triples)))
        for i in range(len(idx) - 1, 0, -1):
            j = order_rng.rand_below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]

        epoch_loss = 0.0
        n_instances = 0
        for start in range(0, len(idx), cfg.batch_size):
            batch = idx[start : start + cfg.batch_size]
            grad: dict[int, np.ndarray] = {}
            batch_instances = 0
            for ti in batch:
                q, pos, neg = triples[ti]
                pairs = [(pos, neg, y1)]
                if cfg.balance:
                    pairs.append((neg, pos, y0))
                for da, db, y in pairs:
                    da_m = _maybe_mask(da, cfg.rho_train, mask_rng, cfg.rounding)
                    db_m = _maybe_mask(db, cfg.rho_train, mask_rng, cfg.rounding)
                    phi_a = handle.features(q, da_m)
                    phi_b = handle.features(q, db_m)
                    sa = handle.logits(phi_a)
                    sb = handle.logits(phi_b)
                    loss, ga, gb = pairwise_loss(sa, sb, y)
                    epoch_loss += loss
                    log.label_counts[int(np.argmax(y))] += 1
                    for phi, g in ((phi_a, ga), (phi_b, gb)):
                        for f_idx, v in phi.items():
                            if f_idx in grad:
                                grad[f_idx] = grad[f_idx] + g * v
                            else:
                                grad[f_idx] = g * v
                    batch_instances += 1
            scale = cfg.learning_rate / batch_instances
            for f_idx, g in grad.items():
                handle.weights[f_idx] -= scale * g
            n_instances += batch_instances
        log.epoch_losses.append(epoch_loss / n_instances)
    return handle, log


def pair_accuracy(handle: ScorerHandle, dataset) -> float:
    """Fraction of (q, pos, neg) triples judged pos > neg (ties count wrong)."""
    if not dataset:
        raise EmptyDataset("no triples")
    good = 0
    for q, pos, neg in dataset:
        q = q if isinstance(q, TokenSeq) else tokenize(q)
        pos = pos if isinstance(pos, TokenSeq) else tokenize(pos)
        neg = neg if isinstance(neg, TokenSeq) else tokenize(neg)
        j = handle.judge_pair(q, pos, neg)
        good += 1 if (j.predicted == 1 and not j.tie) else 0
    return good / len(dataset)
