"""Word-substitution attacks and the defense evaluation harness.

brute_force_attack enumerates every substitution within the Hamming budget
(the soundness oracle for certificates); greedy_substitution_attack is a
simplified importance-style attacker; keyword_stuff converts trigger
insertion to the length-preserving Hamming model by prepend-then-truncate.
Positional shifts caused by stuffing count as substitutions, so the
effective Hamming distance is reported alongside the insertion budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product

from ._backend import kernels
from .errors import BudgetTooLarge, InvalidParams, ShortRanking, TooLarge
from .sampling import RngStream, keep_count
from .scorer import ScoreProgram
from .smoothing import SmoothingConfig, exact_smoothed_score, smoothed_score
from .text import MASK, TokenSeq, diff_set

BRUTE_FORCE_GUARD = 10**7


@dataclass
class AttackBudget:
    R: int
    vocab: tuple[str, ...]
    objective: str = "enter-top-K"

    def __post_init__(self):
        if self.R < 0:
            raise InvalidParams("budget R must be >= 0")
        if any(tok == MASK for tok in self.vocab):
            raise InvalidParams("attack vocabulary must not contain [MASK]")


@dataclass
class AttackResult:
    adversarial: TokenSeq
    score: float
    success: bool
    substitutions: list[tuple[int, str]] = field(default_factory=list)
    hamming: int = 0
    early_stop: bool = False


class BaseRanker:
    """Scores documents with the raw (unsmoothed) scorer."""

    tag = "base"

    def __init__(self, handle):
        self.handle = handle

    def score_doc(self, q: TokenSeq, x: TokenSeq) -> float:
        return self.handle.score(q, x)


class SmoothedRanker:
    """Scores documents with the masking-smoothed scorer.

    With exact=True (feasible at desk scale) the expectation is enumerated,
    which keeps attack evaluations deterministic and noise-free; otherwise
    Monte Carlo copies are drawn from this ranker's own stream.
    """

    tag = "smoothed"

    def __init__(self, handle, cfg: SmoothingConfig, exact: bool = False,
                 stream_name: str = "attacks.smoothed"):
        self.handle = handle
        self.cfg = cfg
        self.exact = exact
        self._rng = RngStream(cfg.seed, stream_name)

    def score_doc(self, q: TokenSeq, x: TokenSeq) -> float:
        if self.exact:
            return exact_smoothed_score(
                self.handle, q, x, self.cfg.rho, self.cfg.enum_cap, self.cfg.rounding
            ).mean
        return smoothed_score(self.handle, q, x, self.cfg, rng=self._rng).mean


def _exact_program_scorer(ranker, q: TokenSeq, x: TokenSeq):
    """Fast candidate scorer for built-in handles under exact smoothing.

    Candidates differ from x only at substituted positions, so the scoring
    program is patched instead of rebuilt; falls back to None when the
    ranker cannot take this path.
    """
    if not isinstance(ranker, SmoothedRanker) or not ranker.exact:
        return None
    handle = ranker.handle
    if not hasattr(handle, "build_program"):
        return None
    T = len(x)
    k = keep_count(T, ranker.cfg.rho, ranker.cfg.rounding)
    count = math.comb(T, k)
    if count > ranker.cfg.enum_cap:
        raise TooLarge(count, ranker.cfg.enum_cap)
    base = handle.build_program(q, x)

    def scorer(subs: dict[int, str]) -> float:
        prog = _patched_program(handle, base, q, x, subs)
        mean, _, _ = kernels.exact_masked_mean(prog, T, k, count)
        return mean

    return scorer


def _patched_program(handle, base: ScoreProgram, q: TokenSeq, x: TokenSeq,
                     subs: dict[int, str]) -> ScoreProgram:
    if not subs:
        return base
    tokens = list(x.tokens)
    for pos, tok in subs.items():
        tokens[pos] = tok
    return handle.build_program(q, TokenSeq(tuple(tokens)))


def brute_force_attack(
    ranker,
    q: TokenSeq,
    x: TokenSeq,
    budget: AttackBudget,
    target_score: float,
    guard: int = BRUTE_FORCE_GUARD,
) -> AttackResult:
    """Exhaustive search over all substitutions within Hamming distance R.

    Returns the highest-scoring adversarial candidate (x itself counts, at
    distance 0); success means that score strictly exceeds the target.
    """
    T = len(x)
    R = min(budget.R, T)
    V = len(budget.vocab)
    # enumerability precondition; the dominant size-R term bounds the work
    load = (V**R) * math.comb(T, R)
    if load > guard:
        raise TooLarge(load, guard)

    fast = _exact_program_scorer(ranker, q, x)

    def candidate_score(subs: dict[int, str]) -> float:
        if fast is not None:
            return fast(subs)
        tokens = list(x.tokens)
        for pos, tok in subs.items():
            tokens[pos] = tok
        return ranker.score_doc(q, TokenSeq(tuple(tokens)))

    best_subs: dict[int, str] = {}
    best_score = candidate_score({})
    for size in range(1, R + 1):
        for positions in combinations(range(T), size):
            for assignment in product(budget.vocab, repeat=size):
                subs = {
                    pos: tok
                    for pos, tok in zip(positions, assignment)
                    if x.tokens[pos] != tok
                }
                if len(subs) != size:
                    continue  # covered by a smaller size
                s = candidate_score(subs)
                if s > best_score:
                    best_score = s
                    best_subs = subs
    tokens = list(x.tokens)
    for pos, tok in best_subs.items():
        tokens[pos] = tok
    adversarial = TokenSeq(tuple(tokens))
    return AttackResult(
        adversarial=adversarial,
        score=best_score,
        success=best_score > target_score,
        substitutions=sorted(best_subs.items()),
        hamming=len(diff_set(x, adversarial)),
    )


def keyword_stuff(
    q: TokenSeq, x: TokenSeq, budget_fraction: float = 0.05,
    max_fraction: float = 0.05,
) -> TokenSeq:
    """Query+ stuffing mapped onto the Hamming model.

    Prepends floor(budget_fraction * T) query tokens (cycling through the
    query) and truncates the same count from the end; a zero-token budget or
    an empty query returns x unchanged.
    """
    if budget_fraction > max_fraction:
        raise BudgetTooLarge(
            f"budget fraction {budget_fraction} exceeds maximum {max_fraction}"
        )
    if budget_fraction < 0:
        raise InvalidParams("budget fraction must be >= 0")
    T = len(x)
    m = math.floor(budget_fraction * T)
    if m == 0 or len(q) == 0:
        return x
    prefix = [q.tokens[i % len(q)] for i in range(m)]
    return TokenSeq(tuple(prefix + list(x.tokens[: T - m])))


def greedy_substitution_attack(
    ranker,
    q: TokenSeq,
    x: TokenSeq,
    budget: AttackBudget,
    target_score: float,
) -> AttackResult:
    """Greedy (position, token) substitution: one best swap per budget unit,
    stopping early when nothing improves or the target is already beaten.
    """
    if budget.R < 1:
        raise InvalidParams("greedy attack needs budget R >= 1")
    T = len(x)
    fast = _exact_program_scorer(ranker, q, x)

    def candidate_score(subs: dict[int, str]) -> float:
        if fast is not None:
            return fast(subs)
        tokens = list(x.tokens)
        for pos, tok in subs.items():
            tokens[pos] = tok
        return ranker.score_doc(q, TokenSeq(tuple(tokens)))

    current: dict[int, str] = {}
    current_score = candidate_score({})
    applied: list[tuple[int, str]] = []
    early = False
    for _ in range(min(budget.R, T)):
        if current_score > target_score:
            early = True
            break
        best_gain = 0.0
        best_move = None
        for pos in range(T):
            here = current.get(pos, x.tokens[pos])
            for tok in budget.vocab:
                if tok == here:
                    continue
                trial = dict(current)
                trial[pos] = tok
                s = candidate_score(trial)
                if s - current_score > best_gain:
                    best_gain = s - current_score
                    best_move = (pos, tok, s)
        if best_move is None:
            early = True
            break
        pos, tok, s = best_move
        current[pos] = tok
        current_score = s
        applied.append((pos, tok))
    tokens = list(x.tokens)
    for pos, tok in current.items():
        tokens[pos] = tok
    adversarial = TokenSeq(tuple(tokens))
    return AttackResult(
        adversarial=adversarial,
        score=current_score,
        success=current_score > target_score,
        substitutions=applied,
        hamming=len(diff_set(x, adversarial)),
        early_stop=early,
    )


@dataclass
class DefenseReport:
    attack: str
    K: int
    per_query: list[dict]
    asr: dict[str, float]
    defense_rate: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "attack": self.attack,
            "K": self.K,
            "asr": self.asr,
            "defense_rate": self.defense_rate,
            "per_query": self.per_query,
        }


def evaluate_precomputed(
    base_ranker: BaseRanker,
    smoothed_ranker: SmoothedRanker,
    pairs: list[tuple[str, str, TokenSeq]],
    queries: list[tuple[str, TokenSeq]],
    corpus: dict[str, TokenSeq],
    K: int,
) -> DefenseReport:
    """Evaluate externally generated adversarial documents.

    Each (query_id, doc_id, adversarial doc) row is scored against both
    rankers; success means it strictly outscores the respective rank-K
    document. The Hamming distance to the original is recorded when lengths
    match (external attacks may not be length-preserving).
    """
    by_query = dict(queries)
    per_query = []
    successes = {"base": 0, "smoothed": 0}
    n = 0
    for qid, doc_id, adversarial in pairs:
        if qid not in by_query:
            raise InvalidParams(f"precomputed pair references unknown query {qid}")
        if doc_id not in corpus:
            raise InvalidParams(f"precomputed pair references unknown doc {doc_id}")
        q = by_query[qid]
        original = corpus[doc_id]
        hamming = (
            len(diff_set(original, adversarial))
            if len(original) == len(adversarial)
            else None
        )
        row: dict = {"query_id": qid, "doc_id": doc_id, "hamming": hamming}
        n += 1
        for ranker in (base_ranker, smoothed_ranker):
            ranked = sorted(
                ((d, ranker.score_doc(q, doc)) for d, doc in corpus.items()),
                key=lambda item: (-item[1], item[0]),
            )
            if len(ranked) < K:
                raise ShortRanking(f"query {qid}: need at least {K} documents")
            target_score = ranked[K - 1][1]
            eval_score = ranker.score_doc(q, adversarial)
            success = eval_score > target_score
            successes[ranker.tag] += 1 if success else 0
            row[ranker.tag] = {
                "target_score": target_score,
                "eval_score": eval_score,
                "success": success,
            }
        per_query.append(row)
    if n == 0:
        raise InvalidParams("no precomputed adversarial pairs")
    asr = {tag: successes[tag] / n for tag in ("base", "smoothed")}
    return DefenseReport(
        attack="precomputed",
        K=K,
        per_query=per_query,
        asr=asr,
        defense_rate={tag: 1.0 - asr[tag] for tag in asr},
    )


def evaluate_defense(
    base_ranker: BaseRanker,
    smoothed_ranker: SmoothedRanker,
    attack: str,
    budget: AttackBudget,
    queries: list[tuple[str, TokenSeq]],
    corpus: dict[str, TokenSeq],
    K: int,
) -> DefenseReport:
    """Attack the rank-(K+1) document of every query against both rankers.

    The attacker adapts to whichever ranker it is attacking (its candidate
    scores come from that ranker). Success means the adversarial document
    strictly outscores the rank-K document. The report carries both ASR and
    the complementary defense success rate.
    """
    if attack not in ("brute", "greedy", "stuff"):
        raise InvalidParams(f"unknown attack {attack!r}")
    per_query = []
    successes = {"base": 0, "smoothed": 0}
    for qid, q in queries:
        row: dict = {"query_id": qid}
        for ranker in (base_ranker, smoothed_ranker):
            ranked = sorted(
                ((doc_id, ranker.score_doc(q, doc)) for doc_id, doc in corpus.items()),
                key=lambda item: (-item[1], item[0]),
            )
            if len(ranked) < K + 1:
                raise ShortRanking(f"query {qid}: need at least {K + 1} documents")
            target_score = ranked[K - 1][1]
            victim_id = ranked[K][0]
            victim = corpus[victim_id]
            if attack == "brute":
                result = brute_force_attack(ranker, q, victim, budget, target_score)
            elif attack == "greedy":
                result = greedy_substitution_attack(
                    ranker, q, victim, budget, target_score
                )
            else:
                stuffed = keyword_stuff(q, victim)  # the 5% insertion budget
                score = ranker.score_doc(q, stuffed)
                result = AttackResult(
                    adversarial=stuffed,
                    score=score,
                    success=score > target_score,
                    substitutions=[],
                    hamming=len(diff_set(victim, stuffed)),
                )
            # success is judged on a fresh scoring pass: search-time scores
            # are maxima over noisy candidates and would inflate Monte Carlo
            # attack success
            eval_score = ranker.score_doc(q, result.adversarial)
            success = eval_score > target_score
            successes[ranker.tag] += 1 if success else 0
            row[ranker.tag] = {
                "victim": victim_id,
                "target_score": target_score,
                "search_score": result.score,
                "eval_score": eval_score,
                "success": success,
                "hamming": result.hamming,
            }
        per_query.append(row)
    n = len(queries)
    asr = {tag: successes[tag] / n for tag in ("base", "smoothed")}
    return DefenseReport(
        attack=attack,
        K=K,
        per_query=per_query,
        asr=asr,
        defense_rate={tag: 1.0 - asr[tag] for tag in asr},
    )
