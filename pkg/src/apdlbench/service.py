"""Routing-layer HTTP service: module registry, run submission, status,
trace streaming, and the aggregate report endpoint.

One module key is registered ("mapdl"); unknown keys are rejected with
MODULE_NOT_FOUND, never silently defaulted. Submissions enqueue onto a
bounded worker pool and execute through the same path as the CLI runner,
so a run submitted here produces the same record as `apdlbench run` would
for the same (task, strategy, seed).
"""

from __future__ import annotations

import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .corpus import Corpus, generate_default_corpus
from .orchestrator import make_run_id
from .recovery import Policy
from .reporting import build_summary
from .runner import execute_case
from .scoring import ScoredRun, UnevenRepeats

DEFAULT_MODULE_KEY = "mapdl"


@dataclass(frozen=True)
class ModuleHandler:
    key: str
    description: str


class ModuleRegistry:
    """Maps module keys to sub-agent handlers; unknown keys are an error."""

    def __init__(self, handlers: dict[str, ModuleHandler] | None = None):
        if handlers is None:
            handlers = {
                DEFAULT_MODULE_KEY: ModuleHandler(
                    key=DEFAULT_MODULE_KEY,
                    description="simulated MAPDL case-run execution",
                )
            }
        self._handlers = dict(handlers)

    def lookup(self, key: str) -> ModuleHandler | None:
        return self._handlers.get(key)

    def keys(self) -> list[str]:
        return sorted(self._handlers)


class RunSubmission(BaseModel):
    case_id: int = Field(ge=1)
    strategy: str
    repeat: int = Field(default=1, ge=1)
    seed: int = 42


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(
    corpus: Corpus | None = None,
    workdir: str | Path | None = None,
    parallelism: int = 4,
    registry: ModuleRegistry | None = None,
) -> FastAPI:
    corpus = corpus or generate_default_corpus()
    workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="apdlbench-svc-"))
    registry = registry or ModuleRegistry()

    app = FastAPI(title="apdlbench", version="0.1.0")
    jobs: dict[str, dict] = {}
    lock = threading.Lock()
    pool = ThreadPoolExecutor(max_workers=parallelism)

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return _error(400, "MALFORMED_BODY", str(exc.errors()))

    def _run_job(run_id: str, case_id: int, strategy: str, repeat: int, seed: int) -> None:
        try:
            record, scored = execute_case(corpus, case_id, strategy, repeat, seed, workdir)
            with lock:
                jobs[run_id].update(
                    status="terminal", record=record.to_dict(), scores=scored.__dict__
                )
        except Exception as exc:  # surfaced through the status endpoint
            with lock:
                jobs[run_id].update(status="error", error=f"{type(exc).__name__}: {exc}")

    @app.post("/v1/modules/{key}/runs", status_code=202)
    def submit_run(key: str, submission: RunSubmission):
        if registry.lookup(key) is None:
            return _error(404, "MODULE_NOT_FOUND",
                          f"unknown module {key!r}; registered: {registry.keys()}")
        if submission.strategy not in {p.value for p in Policy}:
            return _error(400, "UNKNOWN_STRATEGY", f"unknown strategy {submission.strategy!r}")
        try:
            corpus.task(submission.case_id)
        except KeyError:
            return _error(400, "UNKNOWN_CASE", f"no case {submission.case_id} in the corpus")
        run_id = make_run_id(submission.case_id, submission.strategy,
                             submission.repeat, submission.seed)
        with lock:
            if run_id in jobs:
                return _error(409, "DUPLICATE_RUN", f"run {run_id} already submitted")
            jobs[run_id] = {
                "run_id": run_id,
                "case_id": submission.case_id,
                "strategy": submission.strategy,
                "repeat": submission.repeat,
                "seed": submission.seed,
                "status": "queued",
            }
        pool.submit(_run_job, run_id, submission.case_id, submission.strategy,
                    submission.repeat, submission.seed)
        return {"run_id": run_id, "status": "queued"}

    @app.get("/v1/runs/{run_id}")
    def run_status(run_id: str):
        with lock:
            job = jobs.get(run_id)
            if job is None:
                return _error(404, "RUN_NOT_FOUND", f"unknown run {run_id!r}")
            return dict(job)

    @app.get("/v1/runs/{run_id}/trace")
    def run_trace(run_id: str):
        with lock:
            job = jobs.get(run_id)
        if job is None:
            return _error(404, "RUN_NOT_FOUND", f"unknown run {run_id!r}")
        trace_path = workdir / "traces" / f"{run_id}.jsonl"
        if not trace_path.exists():
            return PlainTextResponse("", media_type="application/jsonl")
        return PlainTextResponse(trace_path.read_text(encoding="utf-8"),
                                 media_type="application/jsonl")

    @app.get("/v1/reports/summary")
    def report_summary():
        with lock:
            terminal = [dict(j) for j in jobs.values() if j.get("status") == "terminal"]
        if not terminal:
            return {}
        rows = [ScoredRun(**j["scores"]) for j in terminal]
        try:
            return build_summary(rows, corpus)
        except UnevenRepeats:
            return {"total_runs": len(rows), "strategies": {},
                    "note": "repeat counts are uneven; submit full repeats for aggregates"}

    @app.get("/v1/modules")
    def modules():
        return {"modules": registry.keys()}

    return app
