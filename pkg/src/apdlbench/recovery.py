"""Recovery policy: deterministic rule patches, the escalation ladder, and
per-strategy retry budgets.

The four string-transform rules map one failure class each:

  R1_Mesh      double every ESIZE argument and add a MSHKEY,0 free-mesh
               fallback (after the last ESIZE; prepended when there is none)
  R2_Conv      insert AUTOTS,ON and NSUBST,10,100,5 immediately before the
               first SOLVE
  R3_ElemType  swap the offending ET element for its cross-domain partner
               (SOLID185<->SOLID70, SOLID186<->SOLID90)
  R4_SetLast   rewrite every SET with an explicit step to SET,LAST

HardGeom and Unknown signatures match no rule: the patch is a no-op.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .apdl import ApdlCommand, ApdlScript, script_from_commands
from .faults import FailureSignature, FaultClass, invalid_element_name


class Policy(str, Enum):
    NO_RECOVERY = "no_recovery"
    RULE_ONLY = "rule_only"
    MODEL_ONLY = "model_only"
    FULL_LADDER = "full_ladder"


class LadderLevel(str, Enum):
    L1_RULE_PATCH = "L1_RulePatch"
    L2_MODEL_REGEN = "L2_ModelRegen"
    L3_CONTEXT_ENRICH = "L3_ContextEnrich"
    L4_HUMAN = "L4_Human"


class CostClass(str, Enum):
    FREE = "Free"
    CHEAP = "Cheap"
    PAID = "Paid"
    MANUAL = "Manual"


LADDER_COST = {
    LadderLevel.L1_RULE_PATCH: CostClass.FREE,
    LadderLevel.L2_MODEL_REGEN: CostClass.CHEAP,
    LadderLevel.L3_CONTEXT_ENRICH: CostClass.PAID,
    LadderLevel.L4_HUMAN: CostClass.MANUAL,
}

_LADDER_ORDER = (
    LadderLevel.L1_RULE_PATCH,
    LadderLevel.L2_MODEL_REGEN,
    LadderLevel.L3_CONTEXT_ENRICH,
    LadderLevel.L4_HUMAN,
)

# Execution-attempt budgets. Full-ladder gets one attempt per level on top
# of the initial try; in batch mode L4 terminates without re-executing.
_BUDGETS = {
    Policy.NO_RECOVERY: 1,
    Policy.RULE_ONLY: 2,
    Policy.MODEL_ONLY: 4,
    Policy.FULL_LADDER: 5,
}


class RuleId(str, Enum):
    R1_MESH = "R1_Mesh"
    R2_CONV = "R2_Conv"
    R3_ELEM_TYPE = "R3_ElemType"
    R4_SET_LAST = "R4_SetLast"


ELEMENT_SUBSTITUTION = {
    "SOLID185": "SOLID70",
    "SOLID70": "SOLID185",
    "SOLID186": "SOLID90",
    "SOLID90": "SOLID186",
}


@dataclass(frozen=True)
class StrategyConfig:
    policy: Policy
    budget: int
    max_react_iters: int
    forced_retries: int
    log_tool_enabled: bool
    rule_confirmation_required: bool = False

    @property
    def human_fallback(self) -> bool:
        """Strategies without model-driven repair keep a human review gate
        armed for every run, so no run of theirs counts as fully autonomous."""
        return self.policy in (Policy.NO_RECOVERY, Policy.RULE_ONLY)

    @classmethod
    def for_policy(cls, policy: Policy | str) -> "StrategyConfig":
        policy = Policy(policy)
        if policy is Policy.NO_RECOVERY:
            return cls(policy, budget=1, max_react_iters=2, forced_retries=0,
                       log_tool_enabled=False)
        if policy is Policy.RULE_ONLY:
            return cls(policy, budget=2, max_react_iters=12, forced_retries=0,
                       log_tool_enabled=False, rule_confirmation_required=True)
        if policy is Policy.MODEL_ONLY:
            return cls(policy, budget=4, max_react_iters=12, forced_retries=3,
                       log_tool_enabled=True)
        return cls(policy, budget=5, max_react_iters=12, forced_retries=0,
                   log_tool_enabled=True)


def budget_for(policy: Policy | str) -> int:
    return _BUDGETS[Policy(policy)]


@dataclass(frozen=True)
class PatchResult:
    patched: ApdlScript
    rules_applied: tuple[RuleId, ...]
    changed: bool


def _format_number(value: float) -> str:
    return f"{value:g}"


def _patch_mesh(script: ApdlScript) -> tuple[list[ApdlCommand], bool]:
    commands: list[ApdlCommand] = []
    changed = False
    last_esize_index = -1
    for cmd in script.commands:
        if cmd.name == "ESIZE" and cmd.args:
            try:
                doubled = _format_number(2.0 * float(cmd.args[0]))
            except ValueError:
                commands.append(cmd)
                continue
            commands.append(ApdlCommand("ESIZE", (doubled, *cmd.args[1:])))
            last_esize_index = len(commands) - 1
            changed = True
        else:
            commands.append(cmd)
    has_free_mesh = any(c.name == "MSHKEY" and c.args and c.args[0] == "0" for c in commands)
    if not has_free_mesh:
        commands.insert(last_esize_index + 1, ApdlCommand("MSHKEY", ("0",)))
        changed = True
    return commands, changed


def _patch_convergence(script: ApdlScript) -> tuple[list[ApdlCommand], bool]:
    first_solve = script.first_index("SOLVE")
    cutoff = len(script.commands) if first_solve is None else first_solve
    before = script.commands[:cutoff]
    has_autots = any(c.name == "AUTOTS" and c.args and c.args[0].upper() == "ON" for c in before)
    has_nsubst = any(c.name == "NSUBST" for c in before)
    if has_autots and has_nsubst:
        return list(script.commands), False
    insert: list[ApdlCommand] = []
    if not has_autots:
        insert.append(ApdlCommand("AUTOTS", ("ON",)))
    if not has_nsubst:
        insert.append(ApdlCommand("NSUBST", ("10", "100", "5")))
    commands = list(script.commands)
    commands[cutoff:cutoff] = insert
    return commands, True


def _patch_element_type(script: ApdlScript, sig: FailureSignature) -> tuple[list[ApdlCommand], bool]:
    offending = invalid_element_name(sig.message)
    if offending is None or offending not in ELEMENT_SUBSTITUTION:
        return list(script.commands), False
    replacement = ELEMENT_SUBSTITUTION[offending]
    commands: list[ApdlCommand] = []
    changed = False
    for cmd in script.commands:
        if cmd.name == "ET" and len(cmd.args) >= 2 and cmd.args[1].upper() == offending:
            commands.append(ApdlCommand("ET", (cmd.args[0], replacement, *cmd.args[2:])))
            changed = True
        else:
            commands.append(cmd)
    return commands, changed


def _patch_set_last(script: ApdlScript) -> tuple[list[ApdlCommand], bool]:
    commands: list[ApdlCommand] = []
    changed = False
    for cmd in script.commands:
        if cmd.name == "SET" and cmd.args and cmd.args[0].upper() != "LAST":
            commands.append(ApdlCommand("SET", ("LAST",)))
            changed = True
        else:
            commands.append(cmd)
    return commands, changed


def rule_patch(script: ApdlScript, sig: FailureSignature) -> PatchResult:
    """Apply the one rule matching the signature class; total function."""
    if sig.fault_class is FaultClass.MESH:
        commands, changed = _patch_mesh(script)
        rule = RuleId.R1_MESH
    elif sig.fault_class is FaultClass.CONVERGENCE:
        commands, changed = _patch_convergence(script)
        rule = RuleId.R2_CONV
    elif sig.fault_class is FaultClass.ELEMENT_TYPE:
        commands, changed = _patch_element_type(script, sig)
        rule = RuleId.R3_ELEM_TYPE
    elif sig.fault_class is FaultClass.MISSING_RESULTS:
        commands, changed = _patch_set_last(script)
        rule = RuleId.R4_SET_LAST
    else:
        return PatchResult(patched=script, rules_applied=(), changed=False)
    if not changed:
        return PatchResult(patched=script, rules_applied=(), changed=False)
    return PatchResult(patched=script_from_commands(commands), rules_applied=(rule,), changed=True)


def ladder_next(
    current: LadderLevel | None,
    sig: FailureSignature,
    config: StrategyConfig,
) -> LadderLevel | None:
    """Next escalation level permitted by the policy; None when exhausted."""
    if config.policy is Policy.NO_RECOVERY:
        return None
    if config.policy is Policy.RULE_ONLY:
        return LadderLevel.L1_RULE_PATCH if current is None else None
    if config.policy is Policy.MODEL_ONLY:
        return LadderLevel.L2_MODEL_REGEN
    if current is None:
        return _LADDER_ORDER[0]
    index = _LADDER_ORDER.index(current)
    if index + 1 >= len(_LADDER_ORDER):
        return None
    return _LADDER_ORDER[index + 1]
