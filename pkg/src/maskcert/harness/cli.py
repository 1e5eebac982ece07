"""maskcert command line: train, rank, certify, attack, validate-beta, eval.

Exit codes: 0 success, 1 usage/validation, 2 data, 3 bridge. Errors print a
single machine-parsable line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .. import __version__
from ..attacks import (
    AttackBudget,
    BaseRanker,
    SmoothedRanker,
    evaluate_defense,
    evaluate_precomputed,
)
from ..certify import CertifyConfig, certify_query, estimate_beta
from ..errors import BridgeFailure, DataError, MaskcertError, ValidationError
from ..metrics import RunList, crq, js_divergence, mcr, mcrr, mrr_at_k, ndcg_at_k
from ..sampling import RngStream, keep_count
from ..scorer import HashedLinearScorer, LexicalScorer, TrainConfig, train_pairwise
from ..smoothing import SmoothingConfig, smoothed_score
from ..text import tokenize
from . import io
from .config import RunConfig

log = logging.getLogger("maskcert")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"maskcert-error code=usage message={json.dumps(message)}", file=sys.stderr)
        raise SystemExit(1)


def _load_scorer(cfg: RunConfig):
    if cfg.scorer == "lexical":
        return LexicalScorer()
    if cfg.scorer == "hashed":
        with open(cfg.weights, encoding="utf-8") as fh:
            return HashedLinearScorer.from_state_dict(json.load(fh))
    from .bridge import BridgeScorer

    return BridgeScorer(cfg.bridge)


def _report_base(cfg: RunConfig, handle) -> dict:
    return {
        "config": cfg.echo(),
        "seeds": {"root": cfg.seed},
        "scorer": handle.identity(),
        "engine_version": __version__,
    }


def _cmd_train(args) -> int:
    triples = io.load_triples(args.triples)
    tc = TrainConfig(
        rho_train=args.rho_train,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        balance=not args.no_balance,
    )
    handle, train_log = train_pairwise(triples, tc)
    state = handle.state_dict()
    state["training"] = {
        "rho_train": tc.rho_train,
        "learning_rate": tc.learning_rate,
        "epochs": tc.epochs,
        "batch_size": tc.batch_size,
        "seed": tc.seed,
        "balance": tc.balance,
        "epoch_losses": train_log.epoch_losses,
        "label_counts": {str(k): v for k, v in train_log.label_counts.items()},
        "loss_non_increasing": train_log.non_increasing(),
        "engine_version": __version__,
    }
    io.dump_json(state, args.out)
    log.info("trained on %d triples; final loss %.6f",
             len(triples), train_log.epoch_losses[-1])
    return 0


def _rank_one(handle, cfg: RunConfig, qid, q, corpus, smoothed: bool):
    scored = []
    for doc_id, doc in corpus.items():
        if smoothed:
            sm = SmoothingConfig(rho=cfg.rho, n=cfg.n, n_prime=max(cfg.n, cfg.n_prime),
                                 seed=cfg.seed, rounding=cfg.rounding)
            rng = RngStream(cfg.seed, f"rank.{qid}.{doc_id}")
            s = smoothed_score(handle, q, doc, sm, rng=rng, n=cfg.n).mean
        else:
            s = handle.score(q, doc)
        scored.append((doc_id, s))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[: cfg.extra.get("depth", 1000)]


def _cmd_rank(args) -> int:
    cfg = RunConfig(
        command="rank", scorer=args.scorer, weights=args.weights,
        bridge=args.bridge, rho=args.rho, n=args.n, n_prime=max(args.n, 1000),
        seed=args.seed, rounding=args.rounding,
        extra={"mode": args.mode, "depth": args.depth},
    ).validate()
    handle = _load_scorer(cfg)
    corpus = io.load_corpus(args.corpus)
    queries = io.load_queries(args.queries)
    modes = ["base", "smoothed"] if args.mode == "both" else [args.mode]
    outs = {}
    if args.mode == "both":
        if not (args.out_base and args.out_smoothed):
            raise ValidationError("mode=both needs --out-base and --out-smoothed")
        outs = {"base": args.out_base, "smoothed": args.out_smoothed}
    else:
        if not args.out:
            raise ValidationError("--out is required")
        outs = {args.mode: args.out}
    for mode in modes:
        rankings = {}
        for qid, q in queries:
            rankings[qid] = _rank_one(handle, cfg, qid, q, corpus, mode == "smoothed")
        run = RunList(rankings, tag=f"maskcert-{mode}")
        io.write_run(outs[mode], run)
        meta = _report_base(cfg, handle)
        io.dump_json(meta, str(outs[mode]) + ".meta.json")
    return 0


def _cmd_certify(args) -> int:
    cfg = RunConfig(
        command="certify", scorer=args.scorer, weights=args.weights,
        bridge=args.bridge, rho=args.rho, n_prime=args.n_prime, n_r=args.n_r,
        n_k=args.n_k, K=args.K, variant=args.variant, seed=args.seed,
        rounding=args.rounding, exact=args.exact, r_star=args.r_star,
    ).validate()
    handle = _load_scorer(cfg)
    corpus = io.load_corpus(args.corpus)
    queries = dict(io.load_queries(args.queries))
    run = io.load_run(args.run)
    ccfg = CertifyConfig(
        rho=cfg.rho, n_prime=cfg.n_prime, n_r=cfg.n_r, n_k=cfg.n_k,
        seed=cfg.seed, rounding=cfg.rounding, exact=cfg.exact,
        enum_cap=cfg.enum_cap,
    )

    def one(qid: str):
        q = queries[qid]
        ranking = [(doc_id, corpus[doc_id]) for doc_id, _ in run.rankings[qid]]
        return certify_query(handle, ranking, q, cfg.K, ccfg, cfg.variant, qid)

    qids = [qid for qid in run.rankings if qid in queries]
    workers = args.workers or os.cpu_count() or 1
    if workers > 1 and cfg.scorer != "bridge":
        with ThreadPoolExecutor(max_workers=workers) as pool:
            certs = list(pool.map(one, qids))
    else:
        certs = [one(qid) for qid in qids]

    io.dump_jsonl([c.to_dict() for c in certs], args.out_certificates)
    summary = _report_base(cfg, handle)
    summary.update(
        {
            "n_queries": len(certs),
            "crq": crq(certs, cfg.K, cfg.r_star),
            "mcr": mcr(certs),
            "mcrr": mcrr(certs),
            "robust_queries": sum(1 for c in certs if c.R >= cfg.r_star),
        }
    )
    io.dump_json(summary, args.out_summary)
    return 0


def _cmd_attack(args) -> int:
    cfg = RunConfig(
        command="attack", scorer=args.scorer, weights=args.weights,
        bridge=args.bridge, rho=args.rho, n=args.n, n_prime=max(args.n, 1000),
        K=args.K, seed=args.seed, rounding=args.rounding, exact=args.exact,
        extra={"attack": args.attack, "budget_r": args.budget_r,
               "vocab": args.vocab},
    ).validate()
    handle = _load_scorer(cfg)
    corpus = io.load_corpus(args.corpus)
    queries = io.load_queries(args.queries)
    sm = SmoothingConfig(rho=cfg.rho, n=cfg.n, n_prime=max(cfg.n, cfg.n_prime),
                         seed=cfg.seed, rounding=cfg.rounding)
    base = BaseRanker(handle)
    smoothed = SmoothedRanker(handle, sm, exact=cfg.exact)
    if args.attack == "precomputed":
        if not args.pairs:
            raise ValidationError("--attack precomputed needs --pairs")
        pairs = [
            (qid, doc_id, tokenize(text, reject_sentinel=True))
            for qid, doc_id, text in io.load_adversarial_pairs(args.pairs)
        ]
        report = evaluate_precomputed(base, smoothed, pairs, queries, corpus,
                                      cfg.K)
    else:
        if args.vocab == "corpus":
            vocab = sorted({tok for doc in corpus.values() for tok in doc})
        else:
            vocab = args.vocab.split(",")
        budget = AttackBudget(R=args.budget_r, vocab=tuple(vocab))
        report = evaluate_defense(base, smoothed, args.attack, budget,
                                  queries, corpus, cfg.K)
    out = _report_base(cfg, handle)
    out["defense"] = report.to_dict()
    io.dump_json(out, args.out)
    return 0


def _cmd_validate_beta(args) -> int:
    cfg = RunConfig(
        command="validate-beta", scorer=args.scorer, weights=args.weights,
        bridge=args.bridge, n_r=args.n_r, n_k=args.n_k, seed=args.seed,
        rounding=args.rounding,
        extra={"rho_grid": args.rho_grid, "r_rates": args.r_rates},
    ).validate()
    handle = _load_scorer(cfg)
    q = tokenize(args.query)
    x = tokenize(args.doc)
    T = len(x)
    rhos = [float(v) for v in args.rho_grid.split(",")]
    r_rates = [float(v) for v in args.r_rates.split(",")]
    cells = []
    for rho in rhos:
        k = keep_count(T, rho, cfg.rounding)
        if k == T:
            raise ValidationError(
                f"rho={rho} masks nothing at T={T}; beta validation needs k < T"
            )
        for r_rate in r_rates:
            r = max(1, round(r_rate * T))
            rng = RngStream(cfg.seed, f"validate.beta.rho{rho}.r{r}")
            est = estimate_beta(handle, q, x, T, k, r, cfg.n_r, cfg.n_k, rng,
                                want_samples=True)
            g_rng = RngStream(cfg.seed, f"validate.g.rho{rho}")
            sm = SmoothingConfig(rho=rho, n=1, n_prime=cfg.n_r * cfg.n_k,
                                 seed=cfg.seed, rounding=cfg.rounding)
            g = smoothed_score(handle, q, x, sm, rng=g_rng,
                               n=cfg.n_r * cfg.n_k, want_scores=True)
            jsd = js_divergence(est.samples, g.scores, bins=args.bins)
            cells.append(
                {
                    "rho": rho,
                    "r": r,
                    "r_rate": r / T,
                    "beta": est.value,
                    "g_mean": g.mean,
                    "retained": est.retained,
                    "jsd": jsd,
                }
            )
    out = _report_base(cfg, handle)
    out["T"] = T
    out["bins"] = args.bins
    out["cells"] = cells
    io.dump_json(out, args.out)
    return 0


def _cmd_eval(args) -> int:
    cfg = RunConfig(command="eval", extra={"k": args.k}).validate()
    run = io.load_run(args.run)
    qrels = io.load_qrels(args.qrels)
    out = {
        "config": cfg.echo(),
        "engine_version": __version__,
        "n_queries": len(run.rankings),
        f"mrr@{args.k}": mrr_at_k(run, qrels, args.k),
        f"ndcg@{args.k}": ndcg_at_k(run, qrels, args.k, gain=args.gain),
    }
    io.dump_json(out, args.out)
    return 0


def _add_scorer_flags(p):
    p.add_argument("--scorer", default="lexical",
                   choices=["lexical", "hashed", "bridge"])
    p.add_argument("--weights", help="weight state JSON for the hashed scorer")
    p.add_argument("--bridge", help="bridge endpoint (stdio:CMD or tcp:host:port)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maskcert", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the hashed-linear scorer on triples")
    p.add_argument("--triples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rho-train", type=float, default=0.0)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-balance", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("rank", help="write TREC runs (base and/or smoothed)")
    _add_scorer_flags(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--mode", default="base", choices=["base", "smoothed", "both"])
    p.add_argument("--out")
    p.add_argument("--out-base")
    p.add_argument("--out-smoothed")
    p.add_argument("--rho", type=float, default=0.3)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--depth", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounding", default="half-up", choices=["half-up", "floor"])
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("certify", help="certify the top-K boundary per query")
    _add_scorer_flags(p)
    p.add_argument("--run", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out-certificates", required=True)
    p.add_argument("--out-summary", required=True)
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--rho", type=float, default=0.3)
    p.add_argument("--n-prime", type=int, default=1000)
    p.add_argument("--n-r", type=int, default=50)
    p.add_argument("--n-k", type=int, default=200)
    p.add_argument("--variant", default="conservative",
                   choices=["paper", "conservative", "beta-one"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounding", default="half-up", choices=["half-up", "floor"])
    p.add_argument("--exact", action="store_true",
                   help="enumerate g instead of n' Monte Carlo copies")
    p.add_argument("--r-star", type=int, default=1)
    p.add_argument("--workers", type=int, default=0,
                   help="0 = available parallelism")
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("attack", help="attack base vs smoothed rankers")
    _add_scorer_flags(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--attack", default="greedy",
                   choices=["greedy", "brute", "stuff", "precomputed"])
    p.add_argument("--budget-r", type=int, default=2)
    p.add_argument("--vocab", default="corpus",
                   help='comma-separated tokens, or "corpus"')
    p.add_argument("--pairs",
                   help="TSV of precomputed adversarial docs "
                        "(query_id<TAB>doc_id<TAB>text)")
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--rho", type=float, default=0.3)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounding", default="half-up", choices=["half-up", "floor"])
    p.add_argument("--exact", action="store_true")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("validate-beta", help="JSD table of beta vs g samples")
    _add_scorer_flags(p)
    p.add_argument("--query", default="certified ranking robustness")
    p.add_argument(
        "--doc",
        default=("certified ranking robustness holds when masked copies of a "
                 "document keep their relevance judgment stable under random "
                 "masking and bounded word substitutions by an adversary at "
                 "test time"),
    )
    p.add_argument("--rho-grid", default="0.7")
    p.add_argument("--r-rates", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    p.add_argument("--n-r", type=int, default=500)
    p.add_argument("--n-k", type=int, default=1000)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounding", default="half-up", choices=["half-up", "floor"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_validate_beta)

    p = sub.add_parser("eval", help="MRR@k / NDCG@k for a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--gain", default="exp", choices=["exp", "linear"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"maskcert-error code=validation message={json.dumps(str(exc))}",
              file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError, KeyError) as exc:
        print(f"maskcert-error code=data message={json.dumps(str(exc))}",
              file=sys.stderr)
        return 2
    except BridgeFailure as exc:
        print(f"maskcert-error code=bridge message={json.dumps(str(exc))}",
              file=sys.stderr)
        return 3
    except MaskcertError as exc:
        print(f"maskcert-error code=error message={json.dumps(str(exc))}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
