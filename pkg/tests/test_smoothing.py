"""Smoothed scoring against the exact enumeration oracle, and voting."""

import math

import numpy as np
import pytest

from maskcert.errors import TooLarge
from maskcert.sampling import RngStream, keep_count
from maskcert.scorer import LexicalScorer, ScorerHandle
from maskcert.smoothing import (
    ABSTAIN,
    SmoothingConfig,
    exact_smoothed_score,
    smoothed_score,
    smoothed_vote,
)
from maskcert.text import tokenize

from oracles import exact_smoothed_dice


class ConstantScorer(ScorerHandle):
    kind = name = "constant"
    version = "1"

    def __init__(self, value=0.7):
        self.value = value

    def score(self, q, x):
        return self.value


class TestSmoothedScore:
    def test_rho_zero_is_identity(self):
        lex = LexicalScorer()
        q = tokenize("apple pie")
        x = tokenize("apple pie recipe")
        cfg = SmoothingConfig(rho=0.0, n=17, n_prime=17, seed=1)
        out = smoothed_score(lex, q, x, cfg)
        assert out.mean == lex.score(q, x)
        assert out.stddev == 0.0

    def test_constant_scorer(self):
        cfg = SmoothingConfig(rho=0.5, n=200, n_prime=200, seed=1)
        out = smoothed_score(ConstantScorer(0.7), tokenize("q"), tokenize("a b c d"), cfg)
        assert out.mean == pytest.approx(0.7, abs=1e-12)
        assert out.stddev == pytest.approx(0.0, abs=1e-12)

    def test_constant_for_every_rho(self):
        for rho in (0.0, 0.2, 0.5, 0.8):
            cfg = SmoothingConfig(rho=rho, n=50, n_prime=50, seed=2)
            out = smoothed_score(
                ConstantScorer(0.31), tokenize("q"), tokenize("a b c d e"), cfg
            )
            assert out.mean == pytest.approx(0.31, abs=1e-12)

    def test_mc_converges_to_exact(self):
        lex = LexicalScorer()
        q = tokenize("alpha bravo")
        x = tokenize("alpha carol bravo delta alpha foxtrot")
        cfg = SmoothingConfig(rho=0.5, n=20_000, n_prime=20_000, seed=7)
        exact = exact_smoothed_score(lex, q, x, 0.5)
        mc = smoothed_score(lex, q, x, cfg)
        tol = 3 * exact.stddev / math.sqrt(cfg.n) + 1e-12
        assert abs(mc.mean - exact.mean) <= tol

    def test_bounds_and_stddev_range(self):
        lex = LexicalScorer()
        cfg = SmoothingConfig(rho=0.6, n=500, n_prime=500, seed=3)
        out = smoothed_score(lex, tokenize("a b"), tokenize("a b c d e f g"), cfg)
        assert 0.0 <= out.mean <= 1.0
        assert 0.0 <= out.stddev <= 0.5


class TestExactSmoothedScore:
    def test_hand_enumeration_T4_k2(self):
        """T=4, k=2 fixture: mean over the 6 masked copies, oracle-computed."""
        lex = LexicalScorer()
        q_tokens = ["alpha", "bravo"]
        x_tokens = ["alpha", "bravo", "carol", "alpha"]
        expected = exact_smoothed_dice(q_tokens, x_tokens, k=2)
        got = exact_smoothed_score(lex, tokenize(" ".join(q_tokens)),
                                   tokenize(" ".join(x_tokens)), rho=0.5)
        assert got.exact
        assert got.n == 6
        assert got.mean == pytest.approx(expected, abs=1e-15)

    def test_rho_zero(self):
        lex = LexicalScorer()
        q = tokenize("apple")
        x = tokenize("apple tart")
        assert exact_smoothed_score(lex, q, x, 0.0).mean == lex.score(q, x)

    def test_too_large(self):
        with pytest.raises(TooLarge):
            exact_smoothed_score(
                LexicalScorer(), tokenize("a"), tokenize(" ".join(["b"] * 40)), 0.5
            )

    @pytest.mark.parametrize("seed", range(10))
    def test_exact_matches_oracle_random_fixtures(self, seed):
        """Kernel enumeration equals the independent itertools oracle."""
        rng = np.random.default_rng(seed)
        vocab = ["a", "b", "c", "d"]
        T = int(rng.integers(2, 9))
        x_tokens = [vocab[i] for i in rng.integers(0, 4, size=T)]
        q_tokens = [vocab[i] for i in rng.integers(0, 4, size=int(rng.integers(1, 4)))]
        rho = float(rng.choice([0.25, 0.5, 0.75]))
        k = keep_count(T, rho)
        got = exact_smoothed_score(
            LexicalScorer(),
            tokenize(" ".join(q_tokens)),
            tokenize(" ".join(x_tokens)),
            rho,
        )
        assert got.mean == pytest.approx(
            exact_smoothed_dice(q_tokens, x_tokens, k), abs=1e-13
        )


class TestGenericPathAgreement:
    """A scorer without build_program must reproduce the kernel path bit for
    bit (same draws, same reduction order)."""

    class OpaqueLexical(ScorerHandle):
        kind = name = "opaque-lexical"
        version = "1"

        def __init__(self):
            self._inner = LexicalScorer()

        def score(self, q, x):
            return self._inner.score(q, x)

    def test_mc_path_identical(self):
        q = tokenize("alpha bravo")
        x = tokenize("alpha carol bravo delta alpha foxtrot golf hotel")
        cfg = SmoothingConfig(rho=0.5, n=300, n_prime=300, seed=11)
        fast = smoothed_score(LexicalScorer(), q, x, cfg,
                              rng=RngStream(11, "agree"))
        slow = smoothed_score(self.OpaqueLexical(), q, x, cfg,
                              rng=RngStream(11, "agree"))
        assert fast.mean == slow.mean
        assert fast.stddev == slow.stddev

    def test_exact_path_identical(self):
        q = tokenize("alpha bravo")
        x = tokenize("alpha carol bravo delta alpha foxtrot")
        fast = exact_smoothed_score(LexicalScorer(), q, x, 0.5)
        slow = exact_smoothed_score(self.OpaqueLexical(), q, x, 0.5)
        assert fast.mean == slow.mean
        assert fast.stddev == slow.stddev


class TestMaskInvarianceBackbone:
    def test_paired_copies_identical_when_diff_masked(self):
        """Copies of x and x' agree whenever the keep set avoids the diff."""
        from maskcert.text import IndexSet, apply_mask, diff_set

        lex = LexicalScorer()
        q = tokenize("alpha bravo carol")
        x = tokenize("alpha bravo carol delta echo foxtrot")
        x2 = tokenize("alpha golf carol delta hotel foxtrot")
        d = set(diff_set(x, x2))
        rng = RngStream(5, "invariance")
        hits = 0
        for _ in range(300):
            rows = rng.sample_sets(6, 3, 1)
            keep = IndexSet(tuple(int(p) + 1 for p in rows[0]))
            if not (set(keep) & d):
                hits += 1
                assert lex.score(q, apply_mask(x, keep)) == \
                    lex.score(q, apply_mask(x2, keep))
        assert hits > 0


class TestVote:
    def test_identical_docs_abstain(self):
        lex = LexicalScorer()
        q = tokenize("alpha bravo")
        x = tokenize("alpha bravo carol delta")
        cfg = SmoothingConfig(rho=0.5, n=51, n_prime=51, seed=1)
        out = smoothed_vote(lex, q, x, x, cfg)
        assert out.decision == ABSTAIN
        assert out.count0 == out.count1
        assert out.count0 + out.count1 == 51

    def test_identical_docs_strict_mode(self):
        lex = LexicalScorer()
        q = tokenize("alpha bravo")
        x = tokenize("alpha bravo carol delta")
        cfg = SmoothingConfig(rho=0.5, n=11, n_prime=11, seed=1, strict_votes=True)
        assert smoothed_vote(lex, q, x, x, cfg).decision == 0

    def test_separated_pair_votes_class_one(self):
        lex = LexicalScorer()
        q = tokenize("alpha bravo carol")
        xi = tokenize("alpha bravo carol alpha bravo carol alpha bravo")
        xj = tokenize("golf hotel india juliet kilo lima mike november")
        cfg = SmoothingConfig(rho=0.25, n=101, n_prime=101, seed=4)
        out = smoothed_vote(lex, q, xi, xj, cfg)
        assert out.decision == 1
        assert out.count1 >= 95

    def test_separated_pair_trained_scorer(self):
        """Trained judge: a clearly separated pair votes class 1 nearly
        unanimously under masking."""
        from maskcert.scorer import TrainConfig, train_pairwise

        triples = [
            ("red blue widget", "red blue widget shop catalog item",
             "rock sand pile heap dump yard"),
            ("green gold widget", "green gold widget shop catalog item",
             "mud clay pile heap dump yard"),
        ]
        handle, _ = train_pairwise(triples, TrainConfig(epochs=25,
                                                        learning_rate=0.2,
                                                        seed=8))
        q = tokenize("red blue widget")
        xi = tokenize("red blue widget shop catalog item red blue")
        xj = tokenize("rock sand pile heap dump yard rock sand")
        cfg = SmoothingConfig(rho=0.25, n=101, n_prime=101, seed=6)
        out = smoothed_vote(handle, q, xi, xj, cfg)
        assert out.decision == 1
        assert out.count1 >= 95

    def test_single_copy_never_abstains_on_clear_pair(self):
        lex = LexicalScorer()
        q = tokenize("alpha")
        cfg = SmoothingConfig(rho=0.25, n=1, n_prime=1, seed=9)
        out = smoothed_vote(
            lex, q, tokenize("alpha alpha alpha alpha"), tokenize("golf hotel india juliet"), cfg
        )
        assert out.decision == 1
        assert out.count1 == 1.0

    def test_unequal_lengths_draw_independent_sets(self):
        lex = LexicalScorer()
        q = tokenize("alpha")
        cfg = SmoothingConfig(rho=0.5, n=31, n_prime=31, seed=2)
        out = smoothed_vote(
            lex, q, tokenize("alpha alpha alpha alpha alpha"), tokenize("golf hotel india"), cfg
        )
        assert out.count0 + out.count1 == 31
        assert out.decision == 1
