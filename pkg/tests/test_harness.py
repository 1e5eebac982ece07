"""CLI end-to-end: ingestion, runs, certification determinism, reports."""

import json
import math

import pytest

from maskcert.harness import io
from maskcert.harness.cli import main
from maskcert.errors import ParseError, SentinelCollision
from maskcert.metrics import RunList

import fixtures_gen


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fixtures")
    fixtures_gen.write_corpus(d / "corpus.jsonl")
    fixtures_gen.write_queries(d / "queries.tsv")
    fixtures_gen.write_eval_fixture(d / "eval.run", d / "eval.qrels")
    fixtures_gen.write_training_triples(d / "triples.tsv")
    return d


class TestIngestion:
    def test_corpus_roundtrip(self, data_dir):
        corpus = io.load_corpus(data_dir / "corpus.jsonl")
        assert len(corpus) == 20
        assert all(len(doc) == 8 for doc in corpus.values())

    def test_sentinel_rejected(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"doc_id": "d1", "text": "hello [MASK] world"}\n')
        with pytest.raises(SentinelCollision):
            io.load_corpus(p)

    def test_parse_error_carries_line(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"doc_id": "d1", "text": "ok"}\nnot json\n')
        with pytest.raises(ParseError) as err:
            io.load_corpus(p)
        assert err.value.line_no == 2

    def test_truncation_to_256(self, tmp_path, caplog):
        p = tmp_path / "long.jsonl"
        text = " ".join(f"w{i}" for i in range(300))
        p.write_text(json.dumps({"doc_id": "big", "text": text}) + "\n")
        with caplog.at_level("WARNING", logger="maskcert"):
            corpus = io.load_corpus(p)
        assert len(corpus["big"]) == 256
        assert any("truncated" in r.message for r in caplog.records)

    def test_run_roundtrip(self, tmp_path):
        run = RunList({"q1": [("a", 0.75), ("b", 0.25)]}, tag="t")
        io.write_run(tmp_path / "r.trec", run)
        back = io.load_run(tmp_path / "r.trec", tag="t")
        assert back.rankings == run.rankings


class TestCliEval:
    def test_mrr_fixture_exact_half(self, data_dir, tmp_path):
        out = tmp_path / "metrics.json"
        code = main([
            "eval", "--run", str(data_dir / "eval.run"),
            "--qrels", str(data_dir / "eval.qrels"),
            "--k", "10", "--out", str(out),
        ])
        assert code == 0
        got = json.loads(out.read_text())
        assert got["mrr@10"] == 0.5

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        code = main([
            "eval", "--run", str(tmp_path / "nope.run"),
            "--qrels", str(tmp_path / "nope.qrels"),
            "--out", str(tmp_path / "m.json"),
        ])
        assert code == 2
        assert "maskcert-error code=data" in capsys.readouterr().err

    def test_usage_error_is_exit_1(self):
        with pytest.raises(SystemExit) as exc:
            main(["eval", "--run"])
        assert exc.value.code == 1


class TestCliTrainRank:
    def test_train_writes_state(self, data_dir, tmp_path):
        out = tmp_path / "weights.json"
        code = main([
            "train", "--triples", str(data_dir / "triples.tsv"),
            "--out", str(out), "--epochs", "5", "--seed", "3",
        ])
        assert code == 0
        state = json.loads(out.read_text())
        assert state["kind"] == "builtin-hashed-linear"
        assert state["training"]["loss_non_increasing"] is True
        assert state["training"]["label_counts"]["0"] == \
            state["training"]["label_counts"]["1"]

    def test_rank_base_mode(self, data_dir, tmp_path):
        out = tmp_path / "run.trec"
        code = main([
            "rank", "--corpus", str(data_dir / "corpus.jsonl"),
            "--queries", str(data_dir / "queries.tsv"),
            "--mode", "base", "--out", str(out), "--seed", "1",
        ])
        assert code == 0
        run = io.load_run(out)
        assert len(run.rankings) == 20
        meta = json.loads((tmp_path / "run.trec.meta.json").read_text())
        assert meta["engine_version"]

    def test_rank_mode_both(self, data_dir, tmp_path):
        code = main([
            "rank", "--corpus", str(data_dir / "corpus.jsonl"),
            "--queries", str(data_dir / "queries.tsv"),
            "--mode", "both",
            "--out-base", str(tmp_path / "b.trec"),
            "--out-smoothed", str(tmp_path / "s.trec"),
            "--rho", "0.5", "--n", "20", "--seed", "1",
        ])
        assert code == 0
        assert io.load_run(tmp_path / "b.trec").rankings.keys() == \
            io.load_run(tmp_path / "s.trec").rankings.keys()

    def test_rank_mode_both_needs_both_outputs(self, data_dir, tmp_path):
        code = main([
            "rank", "--corpus", str(data_dir / "corpus.jsonl"),
            "--queries", str(data_dir / "queries.tsv"),
            "--mode", "both", "--out", str(tmp_path / "x.trec"),
        ])
        assert code == 1

    def test_config_validation(self):
        from maskcert.errors import InvalidParams
        from maskcert.harness.config import RunConfig

        with pytest.raises(InvalidParams):
            RunConfig(command="t", scorer="hashed").validate()  # no weights
        with pytest.raises(InvalidParams):
            RunConfig(command="t", rho=1.0).validate()
        with pytest.raises(InvalidParams):
            RunConfig(command="t", variant="optimistic").validate()
        with pytest.raises(InvalidParams):
            RunConfig(command="t", n=200, n_prime=100).validate()

    def test_rank_smoothed_rho_zero_matches_base(self, data_dir, tmp_path):
        base_out = tmp_path / "base.trec"
        sm_out = tmp_path / "sm.trec"
        main(["rank", "--corpus", str(data_dir / "corpus.jsonl"),
              "--queries", str(data_dir / "queries.tsv"),
              "--mode", "base", "--out", str(base_out), "--seed", "1"])
        main(["rank", "--corpus", str(data_dir / "corpus.jsonl"),
              "--queries", str(data_dir / "queries.tsv"),
              "--mode", "smoothed", "--rho", "0.0", "--n", "1",
              "--out", str(sm_out), "--seed", "1"])
        base_order = {q: [d for d, _ in r]
                      for q, r in io.load_run(base_out).rankings.items()}
        sm_order = {q: [d for d, _ in r]
                    for q, r in io.load_run(sm_out).rankings.items()}
        assert base_order == sm_order


def _certify_args(data_dir, run, certs, summary, workers, seed=42):
    return [
        "certify", "--run", str(run),
        "--corpus", str(data_dir / "corpus.jsonl"),
        "--queries", str(data_dir / "queries.tsv"),
        "--out-certificates", str(certs), "--out-summary", str(summary),
        "--K", "1", "--rho", str(fixtures_gen.FIXTURE_RHO),
        "--n-prime", "400", "--n-r", "20", "--n-k", "50",
        "--variant", "conservative", "--seed", str(seed),
        "--workers", str(workers),
    ]


@pytest.fixture(scope="module")
def smoothed_run(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "smoothed.trec"
    code = main([
        "rank", "--corpus", str(data_dir / "corpus.jsonl"),
        "--queries", str(data_dir / "queries.tsv"),
        "--mode", "smoothed", "--rho", str(fixtures_gen.FIXTURE_RHO),
        "--n", "300", "--out", str(out), "--seed", "42",
    ])
    assert code == 0
    return out


class TestCliCertify:
    def test_determinism_across_runs_and_workers(self, data_dir, smoothed_run,
                                                 tmp_path):
        outputs = []
        for tag, workers in (("a", 1), ("b", 4), ("c", 1)):
            certs = tmp_path / f"certs_{tag}.jsonl"
            summary = tmp_path / f"summary_{tag}.json"
            code = main(_certify_args(data_dir, smoothed_run, certs, summary,
                                      workers))
            assert code == 0
            outputs.append((certs.read_bytes(), summary.read_bytes()))
        assert outputs[0] == outputs[1] == outputs[2]

    def test_summary_contents(self, data_dir, smoothed_run, tmp_path):
        certs = tmp_path / "c.jsonl"
        summary = tmp_path / "s.json"
        main(_certify_args(data_dir, smoothed_run, certs, summary, 2))
        got = json.loads(summary.read_text())
        assert got["n_queries"] == 20
        assert 0.0 <= got["crq"] <= 1.0
        assert got["config"]["variant"] == "conservative"
        assert got["config"]["seed"] == 42
        assert "workers" not in got["config"]
        assert got["scorer"]["kind"] == "builtin-lexical"
        lines = [json.loads(l) for l in certs.read_text().splitlines()]
        assert len(lines) == 20
        for cert in lines:
            assert cert["K"] == 1
            assert 0 <= cert["R"] <= cert["T"]
            assert cert["r_rate"] == cert["R"] / cert["T"]


class TestCliAttackAndBeta:
    def test_attack_report(self, data_dir, tmp_path):
        out = tmp_path / "defense.json"
        code = main([
            "attack", "--corpus", str(data_dir / "corpus.jsonl"),
            "--queries", str(data_dir / "queries.tsv"),
            "--attack", "greedy", "--budget-r", "1", "--K", "1",
            "--rho", str(fixtures_gen.FIXTURE_RHO), "--n", "200",
            "--seed", "7", "--out", str(out),
        ])
        assert code == 0
        got = json.loads(out.read_text())
        assert set(got["defense"]["asr"]) == {"base", "smoothed"}
        assert got["defense"]["asr"]["smoothed"] <= got["defense"]["asr"]["base"]

    def test_precomputed_pairs_attack(self, data_dir, tmp_path):
        pairs_path = tmp_path / "pairs.tsv"
        # stuff a pair-document with its query's missing third token
        pairs_path.write_text(
            "q01\tp01\tcarol alpha alpha alpha bravo bravo bravo bravo\n"
        )
        out = tmp_path / "pre.json"
        code = main([
            "attack", "--corpus", str(data_dir / "corpus.jsonl"),
            "--queries", str(data_dir / "queries.tsv"),
            "--attack", "precomputed", "--pairs", str(pairs_path),
            "--K", "1", "--rho", str(fixtures_gen.FIXTURE_RHO),
            "--n", "200", "--seed", "5", "--out", str(out),
        ])
        assert code == 0
        got = json.loads(out.read_text())
        row = got["defense"]["per_query"][0]
        assert row["query_id"] == "q01"
        assert row["hamming"] == 1
        assert row["base"]["success"] is True  # full query coverage beats raw top

    def test_precomputed_requires_pairs_flag(self, data_dir, tmp_path):
        code = main([
            "attack", "--corpus", str(data_dir / "corpus.jsonl"),
            "--queries", str(data_dir / "queries.tsv"),
            "--attack", "precomputed", "--out", str(tmp_path / "x.json"),
        ])
        assert code == 1

    def test_train_then_rank_with_hashed_scorer(self, data_dir, tmp_path):
        weights = tmp_path / "weights.json"
        assert main([
            "train", "--triples", str(data_dir / "triples.tsv"),
            "--out", str(weights), "--epochs", "8", "--seed", "2",
        ]) == 0
        out = tmp_path / "hashed.trec"
        assert main([
            "rank", "--corpus", str(data_dir / "corpus.jsonl"),
            "--queries", str(data_dir / "queries.tsv"),
            "--mode", "smoothed", "--scorer", "hashed",
            "--weights", str(weights), "--rho", "0.5", "--n", "50",
            "--out", str(out), "--seed", "2",
        ]) == 0
        run = io.load_run(out)
        assert len(run.rankings) == 20
        meta = json.loads((tmp_path / "hashed.trec.meta.json").read_text())
        assert meta["scorer"]["kind"] == "builtin-hashed-linear"

    def test_validate_beta_small_grid(self, tmp_path):
        out = tmp_path / "jsd.json"
        code = main([
            "validate-beta", "--rho-grid", "0.7", "--r-rates", "0.2,0.6",
            "--n-r", "20", "--n-k", "50", "--seed", "3", "--out", str(out),
        ])
        assert code == 0
        got = json.loads(out.read_text())
        assert len(got["cells"]) == 2
        for cell in got["cells"]:
            assert 0.0 <= cell["jsd"] <= math.log(2)
            assert cell["retained"] > 0
