import json

import pytest

from apdlbench.clients import DEFAULT_COMPETENCE, ScriptedModelClient
from apdlbench.faults import FaultClass
from apdlbench.orchestrator import (
    BudgetInfeasible,
    CaseRunner,
    CorruptCheckpoint,
    RunStatus,
    SchemaViolation,
    TraceEventKind,
    Turn,
    TurnKind,
    UnknownTool,
    checkpoint_resume,
    checkpoint_save,
    lint_trace,
    load_trace,
    make_run_id,
    manage_context,
    pairing_violations,
    run_case,
    tool_dispatch,
)
from apdlbench.recovery import Policy, StrategyConfig
from apdlbench.solver import SimulatedBackend
from conftest import make_task

BACKEND = SimulatedBackend()


def run(task, policy, *, client=None, config=None, trace_path=None, seed=7):
    config = config or StrategyConfig.for_policy(policy)
    client = client or ScriptedModelClient(seed=seed)
    return run_case(task, config, client, BACKEND, seed=seed, trace_path=trace_path)


def events_of(events, kind):
    return [e for e in events if e.event is kind]


# -- run_case behaviour -------------------------------------------------------

@pytest.mark.parametrize("policy", list(Policy))
def test_clean_task_succeeds_first_attempt(clean_task, policy):
    record, events = run(clean_task, policy)
    assert record.status is RunStatus.SUCCEEDED
    assert record.completed == 1
    assert record.retries == 0
    assert events_of(events, TraceEventKind.EXECUTED)[0].payload["attempt"] == 1


def test_rule_only_recovers_mesh_fault(mesh_task):
    record, events = run(mesh_task, Policy.RULE_ONLY)
    assert record.status is RunStatus.SUCCEEDED
    assert record.retries == 1
    patched = events_of(events, TraceEventKind.RULE_PATCHED)
    assert patched and patched[0].payload["rules_applied"] == ["R1_Mesh"]
    confirmations = events_of(events, TraceEventKind.CONFIRMATION_REQUESTED)
    assert confirmations and confirmations[0].payload["auto_acknowledged"]
    assert len(events_of(events, TraceEventKind.EXECUTED)) == 2


def test_no_recovery_fails_once_and_stops(mesh_task):
    record, events = run(mesh_task, Policy.NO_RECOVERY)
    assert record.status is RunStatus.FAILED
    assert record.completed == 0
    assert record.retries == 0
    assert len(events_of(events, TraceEventKind.EXECUTED)) == 1
    assert events[-1].event is TraceEventKind.STOPPED


def test_model_only_forced_retry_on_stop_request(mesh_task):
    record, events = run(mesh_task, Policy.MODEL_ONLY)
    assert record.status is RunStatus.SUCCEEDED
    repaired = events_of(events, TraceEventKind.MODEL_REPAIRED)
    assert repaired and repaired[0].payload["stop_requested"]
    assert repaired[0].payload["forced_retry"]


def test_model_only_double_fault_needs_three_attempts():
    task = make_task(injected=(FaultClass.MESH, FaultClass.MISSING_RESULTS))
    record, events = run(task, Policy.MODEL_ONLY)
    assert record.status is RunStatus.SUCCEEDED
    assert record.retries == 2
    assert len(events_of(events, TraceEventKind.EXECUTED)) == 3


def test_model_only_exhausts_budget_on_hard_task(hard_task):
    record, events = run(hard_task, Policy.MODEL_ONLY)
    assert record.status is RunStatus.FAILED
    executed = events_of(events, TraceEventKind.EXECUTED)
    assert len(executed) == 4  # budget B=4
    assert record.retries == 3


def test_model_stop_honored_when_forced_retries_spent(hard_task):
    config = StrategyConfig(
        policy=Policy.MODEL_ONLY, budget=4, max_react_iters=12,
        forced_retries=1, log_tool_enabled=True,
    )
    record, events = run(hard_task, Policy.MODEL_ONLY, config=config)
    assert record.status is RunStatus.FAILED
    assert len(events_of(events, TraceEventKind.EXECUTED)) == 2
    assert "stop honored" in events[-1].payload["reason"]


def test_rule_only_stops_without_reexecution_when_no_rule_matches(hard_task):
    record, events = run(hard_task, Policy.RULE_ONLY)
    assert record.status is RunStatus.FAILED
    assert len(events_of(events, TraceEventKind.EXECUTED)) == 1
    patched = events_of(events, TraceEventKind.RULE_PATCHED)
    assert patched and not patched[0].payload["changed"]


def test_human_fallback_strategies_always_log_a_confirmation(clean_task, mesh_task):
    for task in (clean_task, mesh_task):
        for policy in (Policy.NO_RECOVERY, Policy.RULE_ONLY):
            _, events = run(task, policy)
            assert events_of(events, TraceEventKind.CONFIRMATION_REQUESTED), (task.case_id, policy)
    _, events = run(clean_task, Policy.MODEL_ONLY)
    assert not events_of(events, TraceEventKind.CONFIRMATION_REQUESTED)


def test_full_ladder_walks_to_escalation(hard_task):
    record, events = run(hard_task, Policy.FULL_LADDER)
    assert record.status is RunStatus.ESCALATED
    assert record.intervention_required
    names = [e.event for e in events]
    assert TraceEventKind.RULE_PATCHED in names
    assert TraceEventKind.MODEL_REPAIRED in names
    assert TraceEventKind.CONTEXT_ENRICHED in names
    assert TraceEventKind.ESCALATED in names
    assert names[-1] is TraceEventKind.STOPPED


def test_full_ladder_l1_cures_rule_fixable_fault(mesh_task):
    record, events = run(mesh_task, Policy.FULL_LADDER)
    assert record.status is RunStatus.SUCCEEDED
    assert events_of(events, TraceEventKind.RULE_PATCHED)
    assert not events_of(events, TraceEventKind.ESCALATED)


def test_react_iteration_caps_respected(hard_task, mesh_task):
    for task, policy, cap in ((mesh_task, Policy.NO_RECOVERY, 2),
                              (hard_task, Policy.MODEL_ONLY, 12)):
        _, events = run(task, policy)
        thoughts = sum(
            1 for e in events for t in e.payload["turns"] if t["kind"] == "ModelThought"
        )
        assert thoughts <= cap


def test_determinism_identical_event_sequences(mesh_task):
    def key(events):
        return [(e.seq, e.event.value, json.dumps(e.payload, sort_keys=True)) for e in events]

    first = run(mesh_task, Policy.MODEL_ONLY)[1]
    second = run(mesh_task, Policy.MODEL_ONLY)[1]
    assert key(first) == key(second)


def test_trace_file_schema(tmp_path, mesh_task):
    trace_path = tmp_path / "trace.jsonl"
    run(mesh_task, Policy.RULE_ONLY, trace_path=trace_path)
    events = load_trace(trace_path)
    assert events
    for event in events:
        assert set(event) == {"run_id", "case_id", "strategy", "seed", "seq",
                              "event", "payload", "wall_time"}
    assert [e["seq"] for e in events] == list(range(1, len(events) + 1))


# -- tool pipeline ------------------------------------------------------------

def _noop_handlers():
    return {
        "read_error_log": lambda args: {"text": "log"},
        "run_solver": lambda args: {"success": True},
        "patch_script": lambda args: {"accepted": True},
    }


def test_read_error_log_denied_without_permission():
    config = StrategyConfig.for_policy(Policy.NO_RECOVERY)
    result = tool_dispatch({"tool": "read_error_log", "args": {}}, config, _noop_handlers())
    assert result["denied"] == "PermissionDenied"
    model = StrategyConfig.for_policy(Policy.MODEL_ONLY)
    granted = tool_dispatch({"tool": "read_error_log", "args": {}}, model, _noop_handlers())
    assert granted["ok"]


def test_unknown_tool_raises():
    config = StrategyConfig.for_policy(Policy.MODEL_ONLY)
    with pytest.raises(UnknownTool):
        tool_dispatch({"tool": "rm_rf", "args": {}}, config, _noop_handlers())


def test_schema_violations():
    config = StrategyConfig.for_policy(Policy.MODEL_ONLY)
    with pytest.raises(SchemaViolation):
        tool_dispatch({"tool": "run_solver", "args": {}}, config, _noop_handlers())
    with pytest.raises(SchemaViolation):
        tool_dispatch({"tool": "run_solver", "args": {"script": 42}}, config, _noop_handlers())
    with pytest.raises(SchemaViolation):
        tool_dispatch(
            {"tool": "read_error_log", "args": {"surprise": 1}}, config, _noop_handlers()
        )


def test_tool_timeout_is_an_error_result():
    import time

    config = StrategyConfig.for_policy(Policy.MODEL_ONLY)
    handlers = dict(_noop_handlers())
    handlers["read_error_log"] = lambda args: time.sleep(1)
    result = tool_dispatch({"tool": "read_error_log", "args": {}}, config, handlers,
                           timeout_s=0.05)
    assert not result["ok"] and "timeout" in result["error"]


# -- context management ---------------------------------------------------------

def _turn(kind, text):
    return Turn.make(kind, {"text": text})


def _sample_conversation():
    return [
        _turn(TurnKind.SYSTEM, "system prompt"),
        _turn(TurnKind.MODEL_THOUGHT, "thinking " * 50),
        Turn.make(TurnKind.TOOL_CALL, {"tool": "run_solver", "args": {"script": "S" * 400}}),
        Turn.make(TurnKind.TOOL_RESULT, {"tool": "run_solver", "content": "R" * 400}),
        _turn(TurnKind.MODEL_THOUGHT, "more thinking"),
        Turn.make(TurnKind.TOOL_CALL, {"tool": "read_error_log", "args": {}}),
        Turn.make(TurnKind.TOOL_RESULT, {"tool": "read_error_log", "content": "L" * 400}),
    ]


def test_context_under_budget_unchanged():
    conversation = _sample_conversation()
    assert manage_context(conversation, 10_000) == conversation


def test_context_collapse_preserves_pairing():
    conversation = _sample_conversation()
    total = sum(t.token_estimate for t in conversation)
    # budget reachable by collapsing the one old ToolResult, without trimming
    budget = total - 20
    reduced = manage_context(conversation, budget)
    kinds = [t.kind for t in reduced]
    assert not pairing_violations(kinds)
    assert kinds[0] is TurnKind.SYSTEM
    assert len(reduced) == len(conversation)  # nothing trimmed
    collapsed = [t for t in reduced if t.payload.get("collapsed")]
    assert collapsed, "old tool results should be summarised first"
    assert reduced[-2:] == conversation[-2:]  # most recent 2 turns untouched


def test_context_trim_drops_old_groups():
    conversation = _sample_conversation()
    reduced = manage_context(conversation, 150)
    assert sum(t.token_estimate for t in reduced) <= 150
    assert reduced[0].kind is TurnKind.SYSTEM
    assert not pairing_violations([t.kind for t in reduced])


def test_context_budget_smaller_than_system_turn_infeasible():
    conversation = _sample_conversation()
    with pytest.raises(BudgetInfeasible):
        manage_context(conversation, 1)


def test_pairing_violation_detection():
    good = [TurnKind.SYSTEM, TurnKind.MODEL_THOUGHT, TurnKind.TOOL_CALL, TurnKind.TOOL_RESULT]
    assert pairing_violations(good) == []
    assert pairing_violations([TurnKind.TOOL_RESULT])
    assert pairing_violations([TurnKind.TOOL_CALL, TurnKind.MODEL_THOUGHT])
    assert pairing_violations([TurnKind.TOOL_CALL])
    assert not pairing_violations([TurnKind.TOOL_CALL], allow_open_call=True)


# -- checkpointing ---------------------------------------------------------------

def test_checkpoint_resume_reproduces_uninterrupted_run(tmp_path):
    task = make_task(case_id=23, injected=(FaultClass.MESH, FaultClass.MISSING_RESULTS))
    config = StrategyConfig.for_policy(Policy.MODEL_ONLY)

    def fresh_runner(trace_name, state=None):
        return CaseRunner(
            task, config, ScriptedModelClient(seed=5), BACKEND,
            seed=5, trace_path=tmp_path / trace_name, state=state,
        )

    full = fresh_runner("full.jsonl")
    full_record = full.run()

    partial = fresh_runner("partial.jsonl")
    for _ in range(4):
        partial.step()
    checkpoint_save(partial.state, tmp_path / "ckpt.json")

    resumed = CaseRunner(
        task, config, ScriptedModelClient(seed=5), BACKEND,
        state=checkpoint_resume(tmp_path / "ckpt.json"),
    )
    resumed_record = resumed.run()

    full_doc = full_record.to_dict()
    resumed_doc = resumed_record.to_dict()
    full_doc.pop("trace_ref"), resumed_doc.pop("trace_ref")
    assert resumed_doc == full_doc

    def normalize(events):
        return [
            {k: v for k, v in e.items() if k != "wall_time"}
            for e in events
        ]

    full_events = normalize(load_trace(tmp_path / "full.jsonl"))
    stitched = normalize(load_trace(tmp_path / "partial.jsonl"))
    assert stitched == full_events


def test_resume_of_terminal_state_returns_record(tmp_path, clean_task):
    config = StrategyConfig.for_policy(Policy.NO_RECOVERY)
    runner = CaseRunner(clean_task, config, ScriptedModelClient(seed=5), BACKEND, seed=5,
                        trace_path=tmp_path / "t.jsonl")
    record = runner.run()
    checkpoint_save(runner.state, tmp_path / "done.json")
    resumed = CaseRunner(clean_task, config, ScriptedModelClient(seed=5), BACKEND,
                         state=checkpoint_resume(tmp_path / "done.json"))
    assert resumed.done
    assert resumed.run() == record


def test_truncated_checkpoint_rejected(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"checkpoint_version": 1, "state": {"run_id"')
    with pytest.raises(CorruptCheckpoint):
        checkpoint_resume(path)


def test_checkpoint_mismatch_rejected(tmp_path, clean_task, mesh_task):
    config = StrategyConfig.for_policy(Policy.NO_RECOVERY)
    runner = CaseRunner(clean_task, config, ScriptedModelClient(seed=5), BACKEND, seed=5)
    checkpoint_save(runner.state, tmp_path / "c.json")
    state = checkpoint_resume(tmp_path / "c.json")
    with pytest.raises(CorruptCheckpoint):
        CaseRunner(mesh_task, config, ScriptedModelClient(seed=5), BACKEND, state=state)


# -- trace linting -----------------------------------------------------------------

def test_lint_accepts_generated_traces(tmp_path, mesh_task):
    trace_path = tmp_path / "ok.jsonl"
    run(mesh_task, Policy.MODEL_ONLY, trace_path=trace_path)
    assert lint_trace(load_trace(trace_path)) == []


def test_lint_flags_budget_breach(tmp_path, mesh_task):
    trace_path = tmp_path / "t.jsonl"
    run(mesh_task, Policy.RULE_ONLY, trace_path=trace_path)
    events = load_trace(trace_path)
    executed = [e for e in events if e["event"] == "Executed"]
    bloated = events + [dict(executed[0], seq=events[-1]["seq"] + 1)]
    problems = lint_trace(bloated)
    assert any("exceed the budget" in p for p in problems)
    assert any("Stopped" in p for p in problems)


def test_lint_flags_seq_and_pairing_problems(tmp_path, clean_task):
    trace_path = tmp_path / "t.jsonl"
    run(clean_task, Policy.NO_RECOVERY, trace_path=trace_path)
    events = load_trace(trace_path)
    events[1]["seq"] = events[0]["seq"]
    events[0]["payload"]["turns"].append({"kind": "ToolResult", "tool": "run_solver"})
    problems = lint_trace(events)
    assert any("strictly increasing" in p for p in problems)
    assert any("ToolResult without" in p for p in problems)


def test_lint_empty_trace():
    assert lint_trace([]) == ["trace is empty"]


def test_run_id_is_stable():
    assert make_run_id(8, "rule_only", 1, 42) == make_run_id(8, "rule_only", 1, 42)
    assert make_run_id(8, "rule_only", 1, 42) != make_run_id(8, "rule_only", 2, 42)
