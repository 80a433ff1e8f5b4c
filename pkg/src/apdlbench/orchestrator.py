"""Harness core: the ReAct-style case runner with tool dispatch, context
management, budget enforcement, recovery dispatch, traces, and checkpoints.

A case-run is a small explicit state machine (generate -> execute ->
diagnose -> recover -> ... -> finalize) driven by ``CaseRunner.step``; the
whole run state is serializable, which is what makes mid-run checkpointing
and resume possible. The orchestrator, not the model client, owns the
retry budget and stop control: a scripted client may ask to stop after a
failure, and under the model strategy the runner overrides it while forced
retries remain.

Trace files are append-only JSONL, one event per line, fsynced on the
terminal event. Each event carries the conversation turns it appended so
the stored trace can be linted for the message-pairing invariant without
replaying the run.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping

from .apdl import ApdlScript, parse_script, render_script
from .clients import ModelClient
from .corpus import TaskSpec
from .faults import ExitStatus, FailureSignature, FaultClass, SolverLog, extract_failure
from .recovery import LadderLevel, Policy, StrategyConfig, ladder_next, rule_patch

DEFAULT_TOKEN_BUDGET = 8192
CHECKPOINT_VERSION = 1


class InternalInvariantViolation(RuntimeError):
    """Budget or pairing breach inside a run; aborts the run."""


class BudgetInfeasible(ValueError):
    """Context cannot be reduced to the token budget without breaking
    pairing or protected turns."""


class CorruptCheckpoint(ValueError):
    """Checkpoint file is unreadable or fails schema validation."""


class UnknownTool(KeyError):
    """Tool call names a tool that is not registered."""


class SchemaViolation(ValueError):
    """Tool call arguments do not match the tool's schema."""


class TurnKind(str, Enum):
    SYSTEM = "System"
    USER = "User"
    MODEL_THOUGHT = "ModelThought"
    TOOL_CALL = "ToolCall"
    TOOL_RESULT = "ToolResult"


class TraceEventKind(str, Enum):
    GENERATED = "Generated"
    EXECUTED = "Executed"
    FAILURE_EXTRACTED = "FailureExtracted"
    RULE_PATCHED = "RulePatched"
    MODEL_REPAIRED = "ModelRepaired"
    CONTEXT_ENRICHED = "ContextEnriched"
    CONFIRMATION_REQUESTED = "ConfirmationRequested"
    ESCALATED = "Escalated"
    STOPPED = "Stopped"


class RunStatus(str, Enum):
    RUNNING = "Running"
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"
    ESCALATED = "Escalated"


class Phase(str, Enum):
    GENERATE = "generate"
    EXECUTE = "execute"
    DIAGNOSE = "diagnose"
    RECOVER = "recover"
    FINALIZE = "finalize"
    DONE = "done"


def estimate_tokens(payload: Any) -> int:
    text = payload if isinstance(payload, str) else json.dumps(payload, sort_keys=True)
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class Turn:
    kind: TurnKind
    payload: dict
    token_estimate: int

    @classmethod
    def make(cls, kind: TurnKind, payload: dict) -> "Turn":
        return cls(kind=kind, payload=payload, token_estimate=estimate_tokens(payload))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "payload": self.payload,
                "token_estimate": self.token_estimate}

    @classmethod
    def from_dict(cls, d: dict) -> "Turn":
        return cls(kind=TurnKind(d["kind"]), payload=d["payload"],
                   token_estimate=int(d["token_estimate"]))


def pairing_violations(kinds: list[TurnKind], allow_open_call: bool = False) -> list[str]:
    """Message-pairing check: every ToolCall is answered by exactly one
    ToolResult before the next ModelThought (and before the end)."""
    violations = []
    open_call = False
    for i, kind in enumerate(kinds):
        if kind is TurnKind.TOOL_CALL:
            if open_call:
                violations.append(f"turn {i}: ToolCall while a ToolCall is unanswered")
            open_call = True
        elif kind is TurnKind.TOOL_RESULT:
            if not open_call:
                violations.append(f"turn {i}: ToolResult without a pending ToolCall")
            open_call = False
        elif kind is TurnKind.MODEL_THOUGHT and open_call:
            violations.append(f"turn {i}: ModelThought before the pending ToolCall was answered")
            open_call = False
    if open_call and not allow_open_call:
        violations.append("conversation ends with an unanswered ToolCall")
    return violations


# ---------------------------------------------------------------------------
# Tool pipeline: Validate -> Permit -> Execute
# ---------------------------------------------------------------------------

TOOL_SCHEMAS: dict[str, dict[str, type]] = {
    "read_error_log": {},
    "run_solver": {"script": str},
    "patch_script": {"script": str},
}


def tool_dispatch(
    call: Mapping[str, Any],
    config: StrategyConfig,
    handlers: Mapping[str, Callable[[dict], dict]],
    timeout_s: float = 30.0,
) -> dict:
    """Validate, permit-check, and execute one tool call.

    Returns the ToolResult payload. A permit denial is a result carrying
    ``PermissionDenied``, never an exception; unknown tools and schema
    violations do raise.
    """
    tool = call.get("tool")
    if tool not in TOOL_SCHEMAS:
        raise UnknownTool(f"unknown tool {tool!r}")
    args = call.get("args") or {}
    schema = TOOL_SCHEMAS[tool]
    for name, expected in schema.items():
        if name not in args:
            raise SchemaViolation(f"{tool}: missing required argument {name!r}")
        if not isinstance(args[name], expected):
            raise SchemaViolation(f"{tool}: argument {name!r} must be {expected.__name__}")
    for name in args:
        if name not in schema:
            raise SchemaViolation(f"{tool}: unexpected argument {name!r}")

    if tool == "read_error_log" and not config.log_tool_enabled:
        return {"tool": tool, "ok": False, "denied": "PermissionDenied",
                "message": "error-log reading is disabled for this strategy"}

    if tool not in handlers:
        raise UnknownTool(f"tool {tool!r} has no registered handler")
    executor = ThreadPoolExecutor(max_workers=1)
    try:
        future = executor.submit(handlers[tool], dict(args))
        try:
            content = future.result(timeout=timeout_s)
        except FutureTimeout:
            return {"tool": tool, "ok": False, "error": f"timeout after {timeout_s}s"}
    finally:
        executor.shutdown(wait=False)
    return {"tool": tool, "ok": True, "content": content}


# ---------------------------------------------------------------------------
# Context manager: Collapse | Trim
# ---------------------------------------------------------------------------

def _total_tokens(turns: list[Turn]) -> int:
    return sum(t.token_estimate for t in turns)


def manage_context(conversation: list[Turn], token_budget: int) -> list[Turn]:
    """Reduce the conversation under the token budget.

    First collapses old ToolResult payloads to one-line summaries, then
    trims whole old iteration groups. System turns and the two most recent
    turns are never touched; the pairing invariant is preserved by
    construction. Raises BudgetInfeasible when no valid reduction reaches
    the budget.
    """
    turns = list(conversation)
    if _total_tokens(turns) <= token_budget:
        return turns

    protected_tail = max(0, len(turns) - 2)
    for i, turn in enumerate(turns):
        if i >= protected_tail:
            break
        if turn.kind is TurnKind.TOOL_RESULT and "collapsed" not in turn.payload:
            tool = turn.payload.get("tool", "tool")
            summary = {"tool": tool, "collapsed": True,
                       "summary": f"[{tool} result collapsed: {turn.token_estimate} tokens]"}
            turns[i] = Turn.make(TurnKind.TOOL_RESULT, summary)
            if _total_tokens(turns) <= token_budget:
                return turns

    while _total_tokens(turns) > token_budget:
        group = _oldest_trimmable_group(turns)
        if group is None:
            raise BudgetInfeasible(
                f"cannot reach token budget {token_budget} "
                f"(current estimate {_total_tokens(turns)})"
            )
        start, end = group
        del turns[start:end]
    return turns


def _oldest_trimmable_group(turns: list[Turn]) -> tuple[int, int] | None:
    protected_tail = max(0, len(turns) - 2)
    for i, turn in enumerate(turns):
        if i >= protected_tail:
            return None
        if turn.kind is TurnKind.SYSTEM:
            continue
        end = i + 1
        if turn.kind is TurnKind.MODEL_THOUGHT:
            if end < len(turns) and turns[end].kind is TurnKind.TOOL_CALL:
                end += 1
                if end < len(turns) and turns[end].kind is TurnKind.TOOL_RESULT:
                    end += 1
        elif turn.kind is TurnKind.TOOL_CALL:
            if end < len(turns) and turns[end].kind is TurnKind.TOOL_RESULT:
                end += 1
        if end > protected_tail:
            return None
        return (i, end)
    return None


# ---------------------------------------------------------------------------
# Trace events and records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceEvent:
    run_id: str
    case_id: int
    strategy: str
    seed: int
    seq: int
    event: TraceEventKind
    payload: dict
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "case_id": self.case_id,
            "strategy": self.strategy,
            "seed": self.seed,
            "seq": self.seq,
            "event": self.event.value,
            "payload": self.payload,
            "wall_time": self.wall_time,
        }


@dataclass(frozen=True)
class CaseRunRecord:
    run_id: str
    case_id: int
    strategy: str
    repeat_index: int
    status: RunStatus
    completed: int
    retries: int
    intervention_required: bool
    images: int
    trace_ref: str
    token_estimate: int

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["status"] = self.status.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CaseRunRecord":
        return cls(
            run_id=d["run_id"],
            case_id=int(d["case_id"]),
            strategy=d["strategy"],
            repeat_index=int(d["repeat_index"]),
            status=RunStatus(d["status"]),
            completed=int(d["completed"]),
            retries=int(d["retries"]),
            intervention_required=bool(d["intervention_required"]),
            images=int(d["images"]),
            trace_ref=d["trace_ref"],
            token_estimate=int(d["token_estimate"]),
        )


def make_run_id(case_id: int, strategy: str, repeat_index: int, seed: int) -> str:
    digest = hashlib.sha256(f"{case_id}:{strategy}:{repeat_index}:{seed}".encode())
    return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Run state (fully serializable for checkpoint/resume)
# ---------------------------------------------------------------------------

@dataclass
class RunState:
    run_id: str
    case_id: int
    strategy: str
    seed: int
    repeat_index: int
    trace_ref: str
    phase: Phase = Phase.GENERATE
    status: RunStatus = RunStatus.RUNNING
    attempt: int = 0
    react_iter: int = 0
    seq: int = 0
    script_text: str | None = None
    conversation: list[Turn] = field(default_factory=list)
    last_outcome: dict | None = None
    last_sig: dict | None = None
    sig_history: list[dict] = field(default_factory=list)
    ladder_pos: str | None = None
    forced_rounds_used: int = 0
    confirmations: int = 0
    exec_model_driven: bool = True
    intervention_required: bool = False
    images: list[str] = field(default_factory=list)
    pending_status: str | None = None
    pending_reason: str | None = None
    stop_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "case_id": self.case_id,
            "strategy": self.strategy,
            "seed": self.seed,
            "repeat_index": self.repeat_index,
            "trace_ref": self.trace_ref,
            "phase": self.phase.value,
            "status": self.status.value,
            "attempt": self.attempt,
            "react_iter": self.react_iter,
            "seq": self.seq,
            "script_text": self.script_text,
            "conversation": [t.to_dict() for t in self.conversation],
            "last_outcome": self.last_outcome,
            "last_sig": self.last_sig,
            "sig_history": self.sig_history,
            "ladder_pos": self.ladder_pos,
            "forced_rounds_used": self.forced_rounds_used,
            "confirmations": self.confirmations,
            "exec_model_driven": self.exec_model_driven,
            "intervention_required": self.intervention_required,
            "images": self.images,
            "pending_status": self.pending_status,
            "pending_reason": self.pending_reason,
            "stop_reason": self.stop_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunState":
        state = cls(
            run_id=d["run_id"],
            case_id=int(d["case_id"]),
            strategy=d["strategy"],
            seed=int(d["seed"]),
            repeat_index=int(d["repeat_index"]),
            trace_ref=d["trace_ref"],
        )
        state.phase = Phase(d["phase"])
        state.status = RunStatus(d["status"])
        state.attempt = int(d["attempt"])
        state.react_iter = int(d["react_iter"])
        state.seq = int(d["seq"])
        state.script_text = d["script_text"]
        state.conversation = [Turn.from_dict(t) for t in d["conversation"]]
        state.last_outcome = d["last_outcome"]
        state.last_sig = d["last_sig"]
        state.sig_history = list(d["sig_history"])
        state.ladder_pos = d["ladder_pos"]
        state.forced_rounds_used = int(d["forced_rounds_used"])
        state.confirmations = int(d["confirmations"])
        state.exec_model_driven = bool(d["exec_model_driven"])
        state.intervention_required = bool(d["intervention_required"])
        state.images = list(d["images"])
        state.pending_status = d["pending_status"]
        state.pending_reason = d["pending_reason"]
        state.stop_reason = d["stop_reason"]
        return state


def checkpoint_save(state: RunState, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"checkpoint_version": CHECKPOINT_VERSION, "state": state.to_dict()}
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")
    tmp.replace(path)


def checkpoint_resume(path: str | Path) -> RunState:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"{path}: unsupported checkpoint format")
    try:
        return RunState.from_dict(doc["state"])
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptCheckpoint(f"{path}: bad state: {exc}") from exc


# ---------------------------------------------------------------------------
# The case runner
# ---------------------------------------------------------------------------

_ENRICHMENT_NOTES = {
    "static": "Static structural runs need a supported structural element "
              "(SOLID185/SOLID186/BEAM188/SHELL181), a mesh size the geometry "
              "tolerates, and SET,LAST before post-processing.",
    "modal": "Modal runs need MODOPT/MXPAND before SOLVE and a structural "
             "element type; read results with SET,LAST.",
    "thermal": "Thermal runs need a thermal element (SOLID70/SOLID90) and a "
               "heat-flux load; read results with SET,LAST.",
}


class CaseRunner:
    """Executes one case-run to a terminal state; resumable from a
    checkpointed RunState."""

    def __init__(
        self,
        task: TaskSpec,
        config: StrategyConfig,
        client: ModelClient,
        backend,
        *,
        seed: int = 0,
        repeat_index: int = 1,
        trace_path: str | Path | None = None,
        token_budget: int = DEFAULT_TOKEN_BUDGET,
        state: RunState | None = None,
    ):
        self.task = task
        self.config = config
        self.client = client
        self.backend = backend
        self.token_budget = token_budget
        self.events: list[TraceEvent] = []
        self._turn_buffer: list[dict] = []

        if state is not None:
            if state.case_id != task.case_id or state.strategy != config.policy.value:
                raise CorruptCheckpoint("checkpoint does not match the task/strategy")
            self.state = state
        else:
            run_id = make_run_id(task.case_id, config.policy.value, repeat_index, seed)
            ref = str(trace_path) if trace_path is not None else ""
            self.state = RunState(
                run_id=run_id,
                case_id=task.case_id,
                strategy=config.policy.value,
                seed=seed,
                repeat_index=repeat_index,
                trace_ref=ref,
            )
            self._append_turn(TurnKind.SYSTEM, {
                "text": (
                    f"APDL automation agent. Case {task.case_id} "
                    f"({task.category.value}): {task.prompt} "
                    f"Strategy: {config.policy.value}."
                )
            })
        if trace_path is not None:
            self.state.trace_ref = str(trace_path)
        self._trace_file = None

    # -- turn and event plumbing ------------------------------------------

    def _append_turn(self, kind: TurnKind, payload: dict) -> Turn:
        turn = Turn.make(kind, payload)
        if kind is TurnKind.MODEL_THOUGHT:
            self.state.react_iter += 1
            if self.state.react_iter > self.config.max_react_iters:
                raise InternalInvariantViolation(
                    f"react iteration cap exceeded: {self.state.react_iter} > "
                    f"{self.config.max_react_iters}"
                )
        self.state.conversation.append(turn)
        kinds = [t.kind for t in self.state.conversation]
        problems = pairing_violations(kinds, allow_open_call=True)
        if problems:
            raise InternalInvariantViolation(f"pairing violation: {problems[0]}")
        entry = {"kind": kind.value}
        if kind in (TurnKind.TOOL_CALL, TurnKind.TOOL_RESULT):
            entry["tool"] = payload.get("tool")
        self._turn_buffer.append(entry)
        return turn

    def _thought(self, text: str) -> None:
        self._append_turn(TurnKind.MODEL_THOUGHT, {"text": text})

    def _tool_exchange(self, tool: str, args: dict) -> dict:
        call = {"tool": tool, "args": args}
        self._append_turn(TurnKind.TOOL_CALL, call)
        result = tool_dispatch(call, self.config, self._handlers())
        self._append_turn(TurnKind.TOOL_RESULT, result)
        return result

    def _emit(self, event: TraceEventKind, payload: dict) -> None:
        self.state.seq += 1
        payload = dict(payload)
        payload["turns"] = self._turn_buffer
        self._turn_buffer = []
        trace_event = TraceEvent(
            run_id=self.state.run_id,
            case_id=self.state.case_id,
            strategy=self.state.strategy,
            seed=self.state.seed,
            seq=self.state.seq,
            event=event,
            payload=payload,
            wall_time=time.time(),
        )
        self.events.append(trace_event)
        self._write_event(trace_event, terminal=event is TraceEventKind.STOPPED)
        self.state.conversation = manage_context(self.state.conversation, self.token_budget)

    def _write_event(self, event: TraceEvent, terminal: bool) -> None:
        if not self.state.trace_ref:
            return
        if self._trace_file is None:
            path = Path(self.state.trace_ref)
            if path.parent != Path("."):
                path.parent.mkdir(parents=True, exist_ok=True)
            self._trace_file = open(path, "a", encoding="utf-8")
        self._trace_file.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")
        self._trace_file.flush()
        if terminal:
            os.fsync(self._trace_file.fileno())
            self._trace_file.close()
            self._trace_file = None

    # -- tool handlers ------------------------------------------------------

    def _handlers(self) -> dict[str, Callable[[dict], dict]]:
        return {
            "read_error_log": self._handle_read_error_log,
            "run_solver": self._handle_run_solver,
            "patch_script": self._handle_patch_script,
        }

    def _handle_read_error_log(self, args: dict) -> dict:
        outcome = self.state.last_outcome
        if outcome is None:
            return {"text": ""}
        return {"text": "\n".join(outcome["log_lines"])}

    def _handle_run_solver(self, args: dict) -> dict:
        outcome = self._run_backend(parse_script(args["script"]))
        return {
            "success": outcome["success"],
            "images": len(outcome["images"]),
            "log_tail": outcome["log_lines"][-1] if outcome["log_lines"] else "",
        }

    def _handle_patch_script(self, args: dict) -> dict:
        script = parse_script(args["script"])
        return {"accepted": True, "commands": len(script.commands)}

    def _run_backend(self, script: ApdlScript) -> dict:
        outcome = self.backend.execute(script, self.task, attempt=self.state.attempt)
        as_dict = {
            "success": outcome.success,
            "images": list(outcome.images),
            "log_lines": list(outcome.log.lines),
            "exit_status": outcome.log.exit_status.value,
            "solve_steps": outcome.solve_steps,
        }
        self.state.last_outcome = as_dict
        return as_dict

    # -- signature helpers ---------------------------------------------------

    def _current_sig(self) -> FailureSignature:
        sig = self.state.last_sig
        return FailureSignature(
            fault_class=FaultClass(sig["fault_class"]), message=sig["message"]
        )

    def _current_script(self) -> ApdlScript:
        return parse_script(self.state.script_text or "")

    # -- state machine ------------------------------------------------------

    @property
    def done(self) -> bool:
        return self.state.phase is Phase.DONE

    def run(self) -> CaseRunRecord:
        while not self.done:
            self.step()
        return self.record()

    def step(self) -> None:
        phase = self.state.phase
        if phase is Phase.GENERATE:
            self._step_generate()
        elif phase is Phase.EXECUTE:
            self._step_execute()
        elif phase is Phase.DIAGNOSE:
            self._step_diagnose()
        elif phase is Phase.RECOVER:
            self._step_recover()
        elif phase is Phase.FINALIZE:
            self._step_finalize()
        else:
            raise RuntimeError("run already terminal")

    def _step_generate(self) -> None:
        task = self.task
        self._thought(f"Drafting APDL script for case {task.case_id} ({task.category.value}).")
        script = self.client.generate_initial(task)
        text = render_script(script)
        self._tool_exchange("patch_script", {"script": text})
        self.state.script_text = text
        self._emit(TraceEventKind.GENERATED, {
            "commands": len(script.commands),
            "script_sha": hashlib.sha256(text.encode()).hexdigest()[:12],
        })
        self.state.phase = Phase.EXECUTE
        self.state.exec_model_driven = True

    def _step_execute(self) -> None:
        self.state.attempt += 1
        if self.state.attempt > self.config.budget:
            raise InternalInvariantViolation(
                f"execution attempt {self.state.attempt} exceeds budget {self.config.budget}"
            )
        if self.state.exec_model_driven:
            self._thought("Submitting the script to the solver.")
            self._tool_exchange("run_solver", {"script": self.state.script_text})
            outcome = self.state.last_outcome
        else:
            outcome = self._run_backend(self._current_script())
        self._emit(TraceEventKind.EXECUTED, {
            "attempt": self.state.attempt,
            "success": outcome["success"],
            "images": len(outcome["images"]),
            "solve_steps": outcome["solve_steps"],
            "harness_driven": not self.state.exec_model_driven,
        })
        if outcome["success"]:
            self.state.images = list(outcome["images"])
            self._to_finalize(RunStatus.SUCCEEDED, "solver produced image output")
        else:
            self.state.phase = Phase.DIAGNOSE

    def _step_diagnose(self) -> None:
        log = SolverLog(
            lines=tuple(self.state.last_outcome["log_lines"]),
            exit_status=ExitStatus.FAILURE,
        )
        sig = extract_failure(log)
        self.state.last_sig = {"fault_class": sig.fault_class.value, "message": sig.message}
        self.state.sig_history.append(self.state.last_sig)
        self._emit(TraceEventKind.FAILURE_EXTRACTED, {
            "fault_class": sig.fault_class.value,
            "message": sig.message,
        })
        self.state.phase = Phase.RECOVER

    def _step_recover(self) -> None:
        policy = self.config.policy
        if policy is Policy.NO_RECOVERY:
            self._to_finalize(RunStatus.FAILED, "single execution failed; no recovery policy")
        elif policy is Policy.RULE_ONLY:
            self._recover_rule_only()
        elif policy is Policy.MODEL_ONLY:
            self._recover_model_only()
        else:
            self._recover_full_ladder()

    def _recover_rule_only(self) -> None:
        if self.state.attempt >= self.config.budget:
            self._to_finalize(RunStatus.FAILED, "retry budget exhausted")
            return
        sig = self._current_sig()
        level = ladder_next(
            LadderLevel(self.state.ladder_pos) if self.state.ladder_pos else None,
            sig, self.config,
        )
        if level is None:
            self._to_finalize(RunStatus.FAILED, "recovery ladder exhausted")
            return
        self.state.ladder_pos = level.value
        result = rule_patch(self._current_script(), sig)
        self._emit(TraceEventKind.RULE_PATCHED, {
            "rules_applied": [r.value for r in result.rules_applied],
            "changed": result.changed,
            "fault_class": sig.fault_class.value,
        })
        if not result.changed:
            self._to_finalize(RunStatus.FAILED, "no rule matches the failure signature")
            return
        self.state.script_text = render_script(result.patched)
        self._confirm("patched script re-execution")
        self.state.exec_model_driven = False
        self.state.phase = Phase.EXECUTE

    def _recover_model_only(self) -> None:
        if self.state.attempt >= self.config.budget:
            self._to_finalize(RunStatus.FAILED, "retry budget exhausted")
            return
        sig = self._current_sig()
        stop_requested = self.client.requests_stop(sig, self.task, self.state.attempt)
        forced = False
        if stop_requested:
            if self.state.forced_rounds_used < self.config.forced_retries:
                forced = True
                self.state.forced_rounds_used += 1
            else:
                self._to_finalize(RunStatus.FAILED, "model stop honored; forced retries spent")
                return
        self._model_repair_round(sig, enrichment=None, forced=forced,
                                 stop_requested=stop_requested)
        self.state.phase = Phase.EXECUTE

    def _model_repair_round(
        self,
        sig: FailureSignature,
        enrichment: str | None,
        forced: bool,
        stop_requested: bool,
    ) -> None:
        self._thought("Execution failed; reading the solver error log.")
        self._tool_exchange("read_error_log", {})
        self._thought(f"Regenerating the script to address {sig.fault_class.value}.")
        repaired = self.client.repair(
            self._current_script(), sig, self.task, enrichment, attempt=self.state.attempt
        )
        new_text = render_script(repaired)
        self._tool_exchange("patch_script", {"script": new_text})
        self._emit(TraceEventKind.MODEL_REPAIRED, {
            "attempt": self.state.attempt,
            "fault_class": sig.fault_class.value,
            "stop_requested": stop_requested,
            "forced_retry": forced,
            "script_changed": new_text != self.state.script_text,
        })
        self.state.script_text = new_text
        self.state.exec_model_driven = True

    def _recover_full_ladder(self) -> None:
        if self.state.attempt >= self.config.budget:
            self._to_finalize(RunStatus.FAILED, "retry budget exhausted")
            return
        sig = self._current_sig()
        level = ladder_next(
            LadderLevel(self.state.ladder_pos) if self.state.ladder_pos else None,
            sig, self.config,
        )
        if level is None:
            self._to_finalize(RunStatus.FAILED, "recovery ladder exhausted")
            return
        self.state.ladder_pos = level.value
        if level is LadderLevel.L1_RULE_PATCH:
            result = rule_patch(self._current_script(), sig)
            self._emit(TraceEventKind.RULE_PATCHED, {
                "rules_applied": [r.value for r in result.rules_applied],
                "changed": result.changed,
                "fault_class": sig.fault_class.value,
            })
            if result.changed:
                self.state.script_text = render_script(result.patched)
                self.state.exec_model_driven = False
                self.state.phase = Phase.EXECUTE
            # unchanged: stay in RECOVER and escalate on the next step
        elif level is LadderLevel.L2_MODEL_REGEN:
            self._model_repair_round(sig, None, forced=False, stop_requested=False)
            self.state.phase = Phase.EXECUTE
        elif level is LadderLevel.L3_CONTEXT_ENRICH:
            enrichment = self._enrichment_text()
            self._emit(TraceEventKind.CONTEXT_ENRICHED, {
                "enrichment_chars": len(enrichment),
                "signatures": self.state.sig_history[-2:],
            })
            self._model_repair_round(sig, enrichment, forced=False, stop_requested=False)
            self.state.phase = Phase.EXECUTE
        else:
            self._emit(TraceEventKind.ESCALATED, {
                "reason": "recovery ladder reached human escalation",
                "fault_class": sig.fault_class.value,
            })
            self.state.intervention_required = True
            self._to_finalize(RunStatus.ESCALATED, "escalated to human operator")

    def _enrichment_text(self) -> str:
        notes = _ENRICHMENT_NOTES[self.task.category.value]
        recent = "; ".join(s["message"] for s in self.state.sig_history[-2:])
        return f"{notes} Recent failures: {recent}"

    def _confirm(self, reason: str) -> None:
        self._emit(TraceEventKind.CONFIRMATION_REQUESTED, {
            "reason": reason,
            "auto_acknowledged": True,
        })
        self.state.confirmations += 1

    def _to_finalize(self, status: RunStatus, reason: str) -> None:
        self.state.pending_status = status.value
        self.state.pending_reason = reason
        self.state.phase = Phase.FINALIZE

    def _step_finalize(self) -> None:
        status = RunStatus(self.state.pending_status or RunStatus.FAILED.value)
        reason = self.state.pending_reason or "aborted"
        if self.config.human_fallback and self.state.confirmations == 0:
            self._confirm("result review")
        self.state.status = status
        self.state.stop_reason = reason
        kinds = [t.kind for t in self.state.conversation]
        problems = pairing_violations(kinds, allow_open_call=False)
        if problems:
            raise InternalInvariantViolation(f"pairing violation at finalize: {problems[0]}")
        self._emit(TraceEventKind.STOPPED, {
            "status": status.value,
            "reason": reason,
            "attempt": self.state.attempt,
            "retries": max(0, self.state.attempt - 1),
        })
        self.state.phase = Phase.DONE

    # -- results --------------------------------------------------------------

    def record(self) -> CaseRunRecord:
        if not self.done:
            raise RuntimeError("run is not terminal yet")
        state = self.state
        return CaseRunRecord(
            run_id=state.run_id,
            case_id=state.case_id,
            strategy=state.strategy,
            repeat_index=state.repeat_index,
            status=state.status,
            completed=1 if len(state.images) >= 1 else 0,
            retries=max(0, state.attempt - 1),
            intervention_required=state.intervention_required,
            images=len(state.images),
            trace_ref=state.trace_ref,
            token_estimate=_total_tokens(state.conversation),
        )


def run_case(
    task: TaskSpec,
    config: StrategyConfig,
    client: ModelClient,
    backend,
    *,
    seed: int = 0,
    repeat_index: int = 1,
    trace_path: str | Path | None = None,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
) -> tuple[CaseRunRecord, list[TraceEvent]]:
    """Run one case to a terminal state; returns the record and its events."""
    runner = CaseRunner(
        task, config, client, backend,
        seed=seed, repeat_index=repeat_index,
        trace_path=trace_path, token_budget=token_budget,
    )
    record = runner.run()
    return record, runner.events


# ---------------------------------------------------------------------------
# Trace linting (independent of the runner)
# ---------------------------------------------------------------------------

_FINAL_EVENTS = {TraceEventKind.STOPPED.value}


def load_trace(path: str | Path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def lint_trace(events: list[dict], max_executions: int | None = None) -> list[str]:
    """Validate a stored trace: monotone seq, consistent identity, budget
    law, terminal event, and the message-pairing invariant over the turns
    recorded in event payloads. Returns human-readable violations."""
    problems: list[str] = []
    if not events:
        return ["trace is empty"]

    run_id = events[0].get("run_id")
    strategy = events[0].get("strategy")
    previous_seq = 0
    executions = 0
    thoughts = 0
    kinds: list[TurnKind] = []
    for event in events:
        if event.get("run_id") != run_id:
            problems.append(f"seq {event.get('seq')}: run_id differs within one trace")
        seq = event.get("seq", 0)
        if seq <= previous_seq:
            problems.append(f"seq {seq}: not strictly increasing")
        previous_seq = seq
        if event.get("event") == TraceEventKind.EXECUTED.value:
            executions += 1
        for turn in event.get("payload", {}).get("turns", []):
            kind = TurnKind(turn["kind"])
            kinds.append(kind)
            if kind is TurnKind.MODEL_THOUGHT:
                thoughts += 1

    if events[0].get("event") != TraceEventKind.GENERATED.value:
        problems.append("trace does not start with a Generated event")
    if events[-1].get("event") not in _FINAL_EVENTS:
        problems.append("trace does not end with a Stopped event")

    if max_executions is None:
        try:
            config = StrategyConfig.for_policy(strategy)
            max_executions = config.budget
        except ValueError:
            max_executions = None
    if max_executions is not None and executions > max_executions:
        problems.append(f"{executions} Executed events exceed the budget {max_executions}")
    if strategy == Policy.NO_RECOVERY.value and executions != 1:
        problems.append(f"no_recovery trace has {executions} Executed events, expected exactly 1")

    problems.extend(pairing_violations(kinds, allow_open_call=False))
    return problems
