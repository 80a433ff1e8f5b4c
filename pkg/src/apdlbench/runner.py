"""Benchmark runner: executes a plan of case-runs with bounded parallelism,
resumable output, and deterministic artifacts.

Output directory layout:

    corpus.json        the resolved corpus (copied so reports are
                       self-contained)
    traces/<id>.jsonl  one trace per case-run
    records/<id>.json  terminal record + scores, written atomically; a
                       present record is what makes a rerun skip the run
    artifacts/<id>/    zero-byte image markers from the simulated solver
    scored_runs.csv    one row per case-run, sorted, byte-stable
    summary.json       aggregate summary (see reporting)
    report.md          human-readable report

Records are scored as soon as their run terminates, so resuming after an
interrupt never needs to re-open finished traces. Rows are sorted before
the CSV is written, which is why parallelism never changes the output.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .clients import DEFAULT_COMPETENCE, ScriptedModelClient
from .corpus import Corpus, generate_default_corpus, load_corpus, save_corpus
from .orchestrator import CaseRunner, CaseRunRecord, make_run_id
from .recovery import Policy, StrategyConfig
from .reporting import build_summary, render_json, render_markdown
from .scoring import ScoredRun, score_run, write_scored_csv
from .solver import BackendConfig, select_backend

DEFAULT_STRATEGIES = (Policy.NO_RECOVERY.value, Policy.RULE_ONLY.value, Policy.MODEL_ONLY.value)


class PlanConfigError(ValueError):
    """The benchmark plan references unknown strategies or missing inputs."""


@dataclass(frozen=True)
class BenchmarkPlan:
    out_dir: Path
    corpus_path: Path | None = None
    strategies: tuple[str, ...] = DEFAULT_STRATEGIES
    repeats: int = 3
    seed: int = 42
    parallelism: int = 1
    oracle_scorer: bool = True
    max_runs: int | None = None  # execute at most N pending runs (interrupt hook)

    def validate(self) -> None:
        known = {p.value for p in Policy}
        unknown = [s for s in self.strategies if s not in known]
        if unknown:
            raise PlanConfigError(f"unknown strategies: {unknown}; known: {sorted(known)}")
        if self.repeats < 1:
            raise PlanConfigError("repeats must be >= 1")
        if self.parallelism < 1:
            raise PlanConfigError("parallelism must be >= 1")


@dataclass
class PlanResult:
    out_dir: Path
    executed: int
    skipped: int
    pending: int
    scored_csv: Path | None = None
    summary: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return self.pending == 0


def execute_case(
    corpus: Corpus,
    case_id: int,
    strategy: str,
    repeat_index: int,
    seed: int,
    out_dir: Path,
) -> tuple[CaseRunRecord, ScoredRun]:
    """Run one case-run with the standard benchmark collaborators and score
    it. The CLI and the HTTP service both funnel through here, which is what
    keeps their records identical for identical inputs."""
    task = corpus.task(case_id)
    config = StrategyConfig.for_policy(strategy)
    run_id = make_run_id(case_id, strategy, repeat_index, seed)
    backend = select_backend(BackendConfig(workdir=out_dir / "artifacts" / run_id))
    client = ScriptedModelClient(seed=seed, competence=dict(DEFAULT_COMPETENCE))
    runner = CaseRunner(
        task, config, client, backend,
        seed=seed, repeat_index=repeat_index,
        trace_path=out_dir / "traces" / f"{run_id}.jsonl",
    )
    record = runner.run()
    scored = score_run(record, [e.to_dict() for e in runner.events], corpus)
    return record, scored


def _record_path(out_dir: Path, run_id: str) -> Path:
    return out_dir / "records" / f"{run_id}.json"


def _write_record(out_dir: Path, record: CaseRunRecord, scored: ScoredRun) -> None:
    path = _record_path(out_dir, record.run_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"record": record.to_dict(), "scores": scored.__dict__}
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")
    tmp.replace(path)


def load_record(path: Path) -> tuple[CaseRunRecord, ScoredRun]:
    doc = json.loads(path.read_text(encoding="utf-8"))
    return CaseRunRecord.from_dict(doc["record"]), ScoredRun(**doc["scores"])


def resolve_corpus(plan: BenchmarkPlan) -> Corpus:
    if plan.corpus_path is not None:
        return load_corpus(plan.corpus_path)
    return generate_default_corpus(plan.seed)


def run_plan(plan: BenchmarkPlan) -> PlanResult:
    """Execute a benchmark plan; resumable and idempotent per run."""
    plan.validate()
    out_dir = Path(plan.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = resolve_corpus(plan)
    save_corpus(corpus, out_dir / "corpus.json")

    all_runs = [
        (task.case_id, strategy, repeat)
        for task in corpus.tasks
        for strategy in plan.strategies
        for repeat in range(1, plan.repeats + 1)
    ]
    pending = [
        (case_id, strategy, repeat)
        for case_id, strategy, repeat in all_runs
        if not _record_path(out_dir, make_run_id(case_id, strategy, repeat, plan.seed)).exists()
    ]
    skipped = len(all_runs) - len(pending)
    to_run = pending if plan.max_runs is None else pending[: plan.max_runs]

    def one(args: tuple[int, str, int]) -> None:
        case_id, strategy, repeat = args
        record, scored = execute_case(corpus, case_id, strategy, repeat, plan.seed, out_dir)
        _write_record(out_dir, record, scored)

    if plan.parallelism == 1:
        for args in to_run:
            one(args)
    else:
        with ThreadPoolExecutor(max_workers=plan.parallelism) as pool:
            # consume results so worker exceptions propagate
            for _ in pool.map(one, to_run):
                pass

    result = PlanResult(
        out_dir=out_dir,
        executed=len(to_run),
        skipped=skipped,
        pending=len(pending) - len(to_run),
    )
    if result.pending == 0:
        rows = [
            load_record(_record_path(out_dir, make_run_id(case_id, strategy, repeat, plan.seed)))[1]
            for case_id, strategy, repeat in all_runs
        ]
        csv_path = out_dir / "scored_runs.csv"
        write_scored_csv(rows, csv_path)
        summary = build_summary(rows, corpus)
        (out_dir / "summary.json").write_text(render_json(summary), encoding="utf-8")
        (out_dir / "report.md").write_text(render_markdown(summary), encoding="utf-8")
        result.scored_csv = csv_path
        result.summary = summary
    return result
