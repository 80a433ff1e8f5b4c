"""Benchmark reports: aggregate summaries in json, csv, and markdown.

Every number is a pure function of the scored-run CSV (plus the corpus for
category lookups), so regenerating a report from the same inputs is
byte-identical.
"""

from __future__ import annotations

import csv
import io
import json

from .corpus import Corpus
from .scoring import ScoredRun, aggregate, per_task_sensitivity
from .stats import (
    MannWhitneyMode,
    binomial_ci,
    cliffs_delta,
    effect_label,
    mann_whitney_u,
    prob_superiority,
)

REPORT_FORMATS = ("csv", "json", "md")


def build_summary(rows: list[ScoredRun], corpus: Corpus) -> dict:
    """Machine-readable summary: per-strategy aggregates, pairwise effect
    sizes and tests on the total score, and the per-task sensitivity check."""
    if not rows:
        return {}
    by_strategy: dict[str, list[ScoredRun]] = {}
    for row in rows:
        by_strategy.setdefault(row.strategy, []).append(row)

    strategies = {}
    for name in sorted(by_strategy):
        subset = by_strategy[name]
        summary = aggregate(subset, corpus)
        lo, hi = binomial_ci(sum(r.completed for r in subset), len(subset))
        doc = summary.to_dict()
        doc["completion_ci_95"] = [lo, hi]
        strategies[name] = doc

    pairwise = []
    names = sorted(by_strategy)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            qa = [r.q for r in by_strategy[a]]
            qb = [r.q for r in by_strategy[b]]
            delta = cliffs_delta(qa, qb)
            _, p_value = mann_whitney_u(qa, qb, MannWhitneyMode.NORMAL_APPROX)
            pairwise.append({
                "a": a,
                "b": b,
                "metric": "q",
                "cliffs_delta": delta,
                "effect": effect_label(delta).value,
                "prob_superiority": prob_superiority(delta),
                "p_value": p_value,
                "test": "mann_whitney_normal_approx",
            })

    return {
        "total_runs": len(rows),
        "strategies": strategies,
        "pairwise": pairwise,
        "per_task_sensitivity": per_task_sensitivity(by_strategy),
    }


def render_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def render_csv(summary: dict) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow([
        "strategy", "runs", "completion_rate", "ci_lo", "ci_hi", "mean_total_score",
        "zero_intervention_rate", "majority_case_rate",
        "failed_total", "failed_static", "failed_thermal", "failed_modal",
    ])
    for name in sorted(summary.get("strategies", {})):
        doc = summary["strategies"][name]
        fails = doc["failure_by_category"]
        writer.writerow([
            name, doc["runs"],
            f"{doc['completion_rate']:.4f}",
            f"{doc['completion_ci_95'][0]:.3f}", f"{doc['completion_ci_95'][1]:.3f}",
            f"{doc['mean_total_score']:.4f}", f"{doc['zero_intervention_rate']:.4f}",
            f"{doc['majority_case_rate']:.4f}",
            fails["total"], fails["static"], fails["thermal"], fails["modal"],
        ])
    return buffer.getvalue()


def render_markdown(summary: dict) -> str:
    if not summary:
        return "# Benchmark report\n\nNo runs found.\n"
    lines = ["# Benchmark report", ""]
    lines += ["## Overall results", ""]
    lines.append("| Strategy | Compl. Rate | 95% CI | Total (/10) | Zero-Interv. |")
    lines.append("|---|---|---|---|---|")
    for name in sorted(summary["strategies"]):
        doc = summary["strategies"][name]
        lo, hi = doc["completion_ci_95"]
        lines.append(
            f"| {name} | {doc['completion_rate']:.4f} | {lo:.3f}-{hi:.3f} "
            f"| {doc['mean_total_score']:.4f} | {doc['zero_intervention_rate']:.4f} |"
        )
    lines += ["", "## Failed cases by category (majority-case criterion)", ""]
    lines.append("| Strategy | Total Failed | Static | Thermal | Modal |")
    lines.append("|---|---|---|---|---|")
    for name in sorted(summary["strategies"]):
        fails = summary["strategies"][name]["failure_by_category"]
        lines.append(
            f"| {name} | {fails['total']} | {fails['static']} "
            f"| {fails['thermal']} | {fails['modal']} |"
        )
    lines += ["", "## Score quartiles and majority-case completion", ""]
    lines.append("| Strategy | Q1 | Median | Q3 | Majority-case rate | Failed case ids |")
    lines.append("|---|---|---|---|---|---|")
    for name in sorted(summary["strategies"]):
        doc = summary["strategies"][name]
        q1, med, q3 = doc["score_quartiles"]
        ids = ", ".join(str(i) for i in doc["failed_case_ids"]) or "-"
        lines.append(
            f"| {name} | {q1:g} | {med:g} | {q3:g} | {doc['majority_case_rate']:.4f} | {ids} |"
        )
    lines += ["", "## Per-category completion", ""]
    lines.append("| Strategy | Category | Compl. Rate | Total (/10) |")
    lines.append("|---|---|---|---|")
    for name in sorted(summary["strategies"]):
        per_type = summary["strategies"][name]["per_type"]
        for category in sorted(per_type):
            doc = per_type[category]
            lines.append(
                f"| {name} | {category} | {doc['completion_rate']:.4f} "
                f"| {doc['mean_total_score']:.4f} |"
            )
    lines += ["", "## Pairwise comparisons (total score)", ""]
    lines.append("| A | B | Cliff's delta | Effect | P(A>B) | p (two-sided) |")
    lines.append("|---|---|---|---|---|---|")
    for pair in summary["pairwise"]:
        lines.append(
            f"| {pair['a']} | {pair['b']} | {pair['cliffs_delta']:.4f} "
            f"| {pair['effect']} | {pair['prob_superiority']:.4f} "
            f"| {pair['p_value']:.3e} |"
        )
    sensitivity = summary["per_task_sensitivity"]
    lines += ["", "## Per-task sensitivity check", ""]
    if sensitivity.get("insufficient_tasks"):
        lines.append("Insufficient tasks for a per-task comparison.")
    else:
        lines.append(f"- Run-level ranking: {', '.join(sensitivity['run_level_ranking'])}")
        lines.append(f"- Per-task ranking: {', '.join(sensitivity['per_task_ranking'])}")
        lines.append(f"- Rankings match: {str(sensitivity['ranking_match']).lower()}")
    lines.append("")
    return "\n".join(lines)


def render_report(summary: dict, fmt: str) -> str:
    if fmt == "json":
        return render_json(summary)
    if fmt == "csv":
        return render_csv(summary)
    if fmt == "md":
        return render_markdown(summary)
    raise ValueError(f"unknown report format {fmt!r}; expected one of {REPORT_FORMATS}")
