"""Conformance of the reference scorer server (secondary component).

Skips cleanly when refscorer/dist has not been built; the primary suite
never depends on it.
"""

import shutil
from pathlib import Path

import numpy as np
import pytest

from maskcert.scorer import LexicalScorer
from maskcert.text import TokenSeq, tokenize

REFSCORER = Path(__file__).resolve().parent.parent / "refscorer" / "dist" / "server.js"

pytestmark = pytest.mark.skipif(
    not REFSCORER.exists() or shutil.which("node") is None,
    reason="reference scorer server not built (secondary component)",
)


@pytest.fixture(scope="module")
def scorer():
    from maskcert.harness.bridge import BridgeScorer

    handle = BridgeScorer(f"stdio:{shutil.which('node')} {REFSCORER}", timeout=20.0)
    yield handle
    handle.close()


def test_identity(scorer):
    assert scorer.name == "toy-lexical"
    assert scorer.max_doc_tokens == 256


def test_ten_thousand_pairs_match_to_last_digit(scorer):
    """toy-lexical equals builtin-lexical on 10000 random (q, x) pairs,
    bit for bit through the JSON serialization."""
    lex = LexicalScorer()
    rng = np.random.default_rng(99)
    vocab = np.array(["alpha", "bravo", "carol", "delta", "echo", "[MASK]"])
    pairs = []
    requests = []
    for _ in range(10_000):
        q = TokenSeq(tuple(rng.choice(vocab[:5], size=int(rng.integers(1, 5)))))
        x = TokenSeq(tuple(rng.choice(vocab, size=int(rng.integers(1, 12)))))
        pairs.append((q, x))
        requests.append(
            {"op": "score", "query": list(q.tokens), "doc": list(x.tokens)}
        )
    responses = scorer.conn.call_many(requests)
    assert len(responses) == 10_000
    for (q, x), resp in zip(pairs, responses):
        assert resp.get("error") is None
        assert resp["result"] == lex.score(q, x)


def test_judge_pair_close(scorer):
    lex = LexicalScorer()
    q = tokenize("alpha bravo")
    xi = tokenize("alpha bravo carol")
    xj = tokenize("delta echo")
    got = scorer.judge_pair(q, xi, xj)
    want = lex.judge_pair(q, xi, xj)
    assert got.p[1] == pytest.approx(want.p[1], abs=1e-12)


def test_malformed_line_recovery(scorer):
    """A garbage line yields an error response and the next request is
    still served (exercised over the live connection)."""
    scorer.conn.transport.send(b"utter garbage\n")
    # the unsolicited error response has id null; the client treats it as
    # malformed when matching, so consume it directly
    line = scorer.conn._read_line(__import__("time").monotonic() + 10)
    import json

    obj = json.loads(line)
    assert obj["error"]["code"] == "malformed"
    assert scorer.score(tokenize("alpha"), tokenize("alpha bravo")) == 2 / 3