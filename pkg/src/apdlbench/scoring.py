"""Per-run scores and strategy aggregates.

Each case-run gets a task score t (0-4, from the output oracle or an
external rater sheet), an autonomy score a (0-3, derived from the trace),
and an efficiency score e (0-3, from retries and outcome); the composite is
q = t + a + e in [0, 10]. Aggregation produces per-strategy completion
rates, mean scores, zero-intervention rates, per-category breakdowns,
score quartiles, and the majority-case view over repeats.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .clients import expected_image_count
from .corpus import Category, Corpus
from .orchestrator import CaseRunRecord, RunStatus, TraceEventKind

SCORED_CSV_HEADER = ["case_id", "strategy", "repeat", "completed", "t", "a", "e", "q",
                     "retries", "intervention"]
RATER_CSV_HEADER = ["case_id", "strategy", "repeat", "rater", "t"]


class IncompleteTrace(ValueError):
    """Autonomy scoring requires a terminal trace."""


class UnevenRepeats(ValueError):
    """Aggregation requires the same repeat count for every case."""


class MalformedSheet(ValueError):
    """Rater sheet violates its CSV schema."""


@dataclass(frozen=True)
class ScoredRun:
    case_id: int
    strategy: str
    repeat: int
    completed: int
    t: int
    a: int
    e: int
    q: int
    retries: int
    intervention: int

    def to_row(self) -> list:
        return [self.case_id, self.strategy, self.repeat, self.completed,
                self.t, self.a, self.e, self.q, self.retries, self.intervention]


def autonomy_score(events: list[dict]) -> int:
    """Autonomy 0-3 from a terminal trace.

    3: no confirmations or escalations; 2: an auto-acknowledged confirmation
    occurred; 1: context enrichment was needed; 0: escalated or flagged as
    requiring intervention.
    """
    if not events or events[-1].get("event") != TraceEventKind.STOPPED.value:
        raise IncompleteTrace("trace has no terminal Stopped event")
    names = [e.get("event") for e in events]
    status = events[-1].get("payload", {}).get("status")
    if TraceEventKind.ESCALATED.value in names or status == RunStatus.ESCALATED.value:
        return 0
    if TraceEventKind.CONTEXT_ENRICHED.value in names:
        return 1
    if TraceEventKind.CONFIRMATION_REQUESTED.value in names:
        return 2
    return 3


def efficiency_score(retries: int, completed: int) -> int:
    """Efficiency 0-3: failures floor at 0; otherwise fewer retries score
    higher (0 -> 3, 1 -> 2, >=2 -> 1)."""
    if retries < 0:
        raise ValueError("retries must be >= 0")
    if not completed:
        return 0
    if retries == 0:
        return 3
    if retries == 1:
        return 2
    return 1


def oracle_task_score(record: CaseRunRecord, expected_images: int) -> int:
    """Task score derived from simulated output: 4 for a success with the
    expected artifact count, 2 for a success with a wrong count, 0 for a
    failure. Intermediate values are reserved for external rater sheets."""
    if not record.completed:
        return 0
    return 4 if record.images == expected_images else 2


def score_run(record: CaseRunRecord, events: list[dict], corpus: Corpus) -> ScoredRun:
    task = corpus.task(record.case_id)
    t = oracle_task_score(record, expected_image_count(task))
    a = autonomy_score(events)
    e = efficiency_score(record.retries, record.completed)
    return ScoredRun(
        case_id=record.case_id,
        strategy=record.strategy,
        repeat=record.repeat_index,
        completed=record.completed,
        t=t,
        a=a,
        e=e,
        q=t + a + e,
        retries=record.retries,
        intervention=1 if record.intervention_required else 0,
    )


def write_scored_csv(rows: list[ScoredRun], path: str | Path) -> None:
    rows = sorted(rows, key=lambda r: (r.case_id, r.strategy, r.repeat))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORED_CSV_HEADER)
        for row in rows:
            writer.writerow(row.to_row())


def load_scored_csv(path: str | Path) -> list[ScoredRun]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCORED_CSV_HEADER:
            raise MalformedSheet(f"{path}: expected header {SCORED_CSV_HEADER}, got {header}")
        rows = []
        for raw in reader:
            case_id, strategy, repeat, completed, t, a, e, q, retries, intervention = raw
            rows.append(ScoredRun(
                case_id=int(case_id), strategy=strategy, repeat=int(repeat),
                completed=int(completed), t=int(t), a=int(a), e=int(e), q=int(q),
                retries=int(retries), intervention=int(intervention),
            ))
    return rows


def load_rater_sheet(path: str | Path) -> list[dict]:
    """External rater scores: one row per (run, rater), t in 0..4."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RATER_CSV_HEADER:
            raise MalformedSheet(f"{path}: expected header {RATER_CSV_HEADER}, got {header}")
        rows = []
        for raw in reader:
            case_id, strategy, repeat, rater, t = raw
            t = int(t)
            if not 0 <= t <= 4:
                raise MalformedSheet(f"{path}: task score {t} outside 0..4")
            rows.append({"case_id": int(case_id), "strategy": strategy,
                         "repeat": int(repeat), "rater": rater, "t": t})
    return rows


def rater_pairs(sheet: list[dict], rater_a: str, rater_b: str) -> list[tuple[int, int]]:
    """Join two raters' scores on (case, strategy, repeat)."""
    def key(row):
        return (row["case_id"], row["strategy"], row["repeat"])

    a_scores = {key(r): r["t"] for r in sheet if r["rater"] == rater_a}
    b_scores = {key(r): r["t"] for r in sheet if r["rater"] == rater_b}
    return [(a_scores[k], b_scores[k]) for k in sorted(a_scores) if k in b_scores]


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StrategySummary:
    strategy: str
    runs: int
    completion_rate: float
    mean_total_score: float
    zero_intervention_rate: float
    per_type: dict[str, dict[str, float]]
    score_quartiles: tuple[float, float, float]
    majority_case_rate: float
    failed_case_ids: tuple[int, ...]
    failure_by_category: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "runs": self.runs,
            "completion_rate": self.completion_rate,
            "mean_total_score": self.mean_total_score,
            "zero_intervention_rate": self.zero_intervention_rate,
            "per_type": self.per_type,
            "score_quartiles": list(self.score_quartiles),
            "majority_case_rate": self.majority_case_rate,
            "failed_case_ids": list(self.failed_case_ids),
            "failure_by_category": self.failure_by_category,
        }


def quantile_midpoint(values: list[float], fraction: float) -> float:
    """Quantile with midpoint interpolation (stable golden convention)."""
    if not values:
        raise ValueError("quantile of empty data")
    ordered = sorted(values)
    position = fraction * (len(ordered) - 1)
    lower = int(position)
    upper = min(lower + 1, len(ordered) - 1)
    if position == lower:
        return float(ordered[lower])
    return (ordered[lower] + ordered[upper]) / 2.0


def aggregate(rows: list[ScoredRun], corpus: Corpus) -> StrategySummary:
    """Summary of one strategy's scored runs (equal repeats per case)."""
    if not rows:
        raise ValueError("no scored runs to aggregate")
    strategies = {r.strategy for r in rows}
    if len(strategies) != 1:
        raise ValueError(f"aggregate expects one strategy, got {sorted(strategies)}")
    strategy = rows[0].strategy

    by_case: dict[int, list[ScoredRun]] = {}
    for row in rows:
        by_case.setdefault(row.case_id, []).append(row)
    repeat_counts = {len(v) for v in by_case.values()}
    if len(repeat_counts) != 1:
        raise UnevenRepeats(f"repeat counts differ across cases: {sorted(repeat_counts)}")
    repeats = repeat_counts.pop()

    n = len(rows)
    completion_rate = sum(r.completed for r in rows) / n
    mean_q = sum(r.q for r in rows) / n
    zero_intervention = sum(1 for r in rows if r.a == 3) / n

    per_type: dict[str, dict[str, float]] = {}
    for category in Category:
        subset = [r for r in rows if corpus.task(r.case_id).category is category]
        if subset:
            per_type[category.value] = {
                "completion_rate": sum(r.completed for r in subset) / len(subset),
                "mean_total_score": sum(r.q for r in subset) / len(subset),
            }

    quartiles = tuple(
        quantile_midpoint([float(r.q) for r in rows], f) for f in (0.25, 0.5, 0.75)
    )

    majority_completed = {
        case_id: sum(r.completed for r in case_rows) > repeats / 2
        for case_id, case_rows in by_case.items()
    }
    majority_rate = sum(majority_completed.values()) / len(majority_completed)
    failed_ids = tuple(sorted(c for c, ok in majority_completed.items() if not ok))
    failure_by_category = {c.value: 0 for c in Category}
    for case_id in failed_ids:
        failure_by_category[corpus.task(case_id).category.value] += 1
    failure_by_category["total"] = len(failed_ids)

    return StrategySummary(
        strategy=strategy,
        runs=n,
        completion_rate=completion_rate,
        mean_total_score=mean_q,
        zero_intervention_rate=zero_intervention,
        per_type=per_type,
        score_quartiles=quartiles,  # type: ignore[arg-type]
        majority_case_rate=majority_rate,
        failed_case_ids=failed_ids,
        failure_by_category=failure_by_category,
    )


def per_task_sensitivity(rows_by_strategy: dict[str, list[ScoredRun]]) -> dict:
    """Rank strategies on run-level and per-task-mean scores; flags whether
    both levels agree (a robustness check against repeat correlation)."""
    from .stats import cliffs_delta

    task_counts = {len({r.case_id for r in rows}) for rows in rows_by_strategy.values()}
    if not task_counts or min(task_counts) < 2:
        return {"insufficient_tasks": True, "ranking_match": None,
                "run_level_ranking": [], "per_task_ranking": []}

    def run_mean(rows: list[ScoredRun]) -> float:
        return sum(r.q for r in rows) / len(rows)

    def task_means(rows: list[ScoredRun]) -> list[float]:
        by_case: dict[int, list[int]] = {}
        for r in rows:
            by_case.setdefault(r.case_id, []).append(r.q)
        return [sum(v) / len(v) for _, v in sorted(by_case.items())]

    run_ranking = sorted(rows_by_strategy, key=lambda s: run_mean(rows_by_strategy[s]),
                         reverse=True)
    per_task = {s: task_means(rows) for s, rows in rows_by_strategy.items()}
    task_ranking = sorted(per_task, key=lambda s: sum(per_task[s]) / len(per_task[s]),
                          reverse=True)

    deltas = {}
    names = sorted(rows_by_strategy)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            deltas[f"{a}_vs_{b}"] = {
                "run_level": cliffs_delta([r.q for r in rows_by_strategy[a]],
                                          [r.q for r in rows_by_strategy[b]]),
                "per_task": cliffs_delta(per_task[a], per_task[b]),
            }

    return {
        "insufficient_tasks": False,
        "run_level_ranking": run_ranking,
        "per_task_ranking": task_ranking,
        "ranking_match": run_ranking == task_ranking,
        "cliffs_delta": deltas,
    }
