"""Command-line entry points: corpus, run, report, stats, serve.

Exit codes: 0 success, 1 invariant violation during execution, 2 bad
configuration or inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import MalformedCorpus, generate_default_corpus, load_corpus, save_corpus
from .orchestrator import InternalInvariantViolation
from .reporting import REPORT_FORMATS, build_summary, render_report
from .runner import DEFAULT_STRATEGIES, BenchmarkPlan, PlanConfigError, run_plan
from .scoring import MalformedSheet, load_scored_csv
from .stats import (
    MannWhitneyMode,
    cliffs_delta,
    effect_label,
    mann_whitney_u,
    prob_superiority,
)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apdlbench",
        description="APDL automation harness and recovery-strategy benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_corpus = sub.add_parser("corpus", help="generate the default task corpus")
    p_corpus.add_argument("--seed", type=int, default=42)
    p_corpus.add_argument("--out", type=Path, required=True)

    p_run = sub.add_parser("run", help="execute a benchmark plan")
    p_run.add_argument("--corpus", type=Path, default=None,
                       help="corpus file (default: generate with --seed)")
    p_run.add_argument("--strategies", default=",".join(DEFAULT_STRATEGIES),
                       help="comma-separated strategy names")
    p_run.add_argument("--repeats", type=int, default=3)
    p_run.add_argument("--seed", type=int, default=42)
    p_run.add_argument("--out", type=Path, required=True)
    p_run.add_argument("--parallel", type=int, default=1)
    p_run.add_argument("--oracle-scorer", action=argparse.BooleanOptionalAction,
                       default=True, help="derive task scores from simulated output")
    p_run.add_argument("--max-runs", type=int, default=None,
                       help="execute at most N pending runs, then stop (resumable)")

    p_report = sub.add_parser("report", help="aggregate a finished runs directory")
    p_report.add_argument("--runs", type=Path, required=True)
    p_report.add_argument("--format", choices=REPORT_FORMATS, default="md")
    p_report.add_argument("--out", type=Path, default=None,
                          help="output file (default: stdout)")

    p_stats = sub.add_parser("stats", help="pairwise comparison of two strategies")
    p_stats.add_argument("--runs", type=Path, required=True)
    p_stats.add_argument("--pair", required=True, help="A:B strategy pair")
    p_stats.add_argument("--metric", choices=("q", "t"), default="q")

    p_serve = sub.add_parser("serve", help="start the routing HTTP service")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--corpus", type=Path, default=None)
    p_serve.add_argument("--workdir", type=Path, default=None)

    return parser


def _cmd_corpus(args: argparse.Namespace) -> int:
    save_corpus(generate_default_corpus(args.seed), args.out)
    print(f"wrote corpus to {args.out}")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    plan = BenchmarkPlan(
        out_dir=args.out,
        corpus_path=args.corpus,
        strategies=tuple(s.strip() for s in args.strategies.split(",") if s.strip()),
        repeats=args.repeats,
        seed=args.seed,
        parallelism=args.parallel,
        oracle_scorer=args.oracle_scorer,
        max_runs=args.max_runs,
    )
    try:
        result = run_plan(plan)
    except (PlanConfigError, MalformedCorpus, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InternalInvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    print(f"executed {result.executed} runs, skipped {result.skipped} "
          f"(already recorded), pending {result.pending}")
    if result.complete:
        print(f"scored runs: {result.scored_csv}")
    return EXIT_OK


def _load_runs_dir(runs_dir: Path):
    csv_path = runs_dir / "scored_runs.csv"
    corpus_path = runs_dir / "corpus.json"
    if not csv_path.exists() or not corpus_path.exists():
        raise MalformedSheet(
            f"{runs_dir} is not a finished runs directory "
            "(need scored_runs.csv and corpus.json)"
        )
    return load_scored_csv(csv_path), load_corpus(corpus_path)


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        rows, corpus = _load_runs_dir(args.runs)
    except (MalformedSheet, MalformedCorpus) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = render_report(build_summary(rows, corpus), args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote report to {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_stats(args: argparse.Namespace) -> int:
    try:
        rows, _ = _load_runs_dir(args.runs)
    except (MalformedSheet, MalformedCorpus) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        name_a, name_b = args.pair.split(":", 1)
    except ValueError:
        print("error: --pair must be A:B", file=sys.stderr)
        return EXIT_CONFIG
    metric = args.metric
    sample_a = [getattr(r, metric) for r in rows if r.strategy == name_a]
    sample_b = [getattr(r, metric) for r in rows if r.strategy == name_b]
    if not sample_a or not sample_b:
        print(f"error: no rows for pair {name_a}:{name_b}", file=sys.stderr)
        return EXIT_CONFIG
    delta = cliffs_delta(sample_a, sample_b)
    u, p = mann_whitney_u(sample_a, sample_b, MannWhitneyMode.NORMAL_APPROX)
    print(json.dumps({
        "a": name_a,
        "b": name_b,
        "metric": metric,
        "n": [len(sample_a), len(sample_b)],
        "cliffs_delta": delta,
        "effect": effect_label(delta).value,
        "prob_superiority": prob_superiority(delta),
        "mann_whitney_u": u,
        "p_value": p,
    }, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    corpus = load_corpus(args.corpus) if args.corpus else None
    app = create_app(corpus=corpus, workdir=args.workdir)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "corpus": _cmd_corpus,
        "run": _cmd_run,
        "report": _cmd_report,
        "stats": _cmd_stats,
        "serve": _cmd_serve,
    }
    return handlers[args.command](args)


def entrypoint() -> None:
    sys.exit(main())
