"""Model clients: the script generation/repair interface.

Benchmark runs use the scripted client, a deterministic stand-in that emits
category-appropriate script templates, plants one defect per injected fault
class, and repairs failures according to a per-class competence table. The
gateway client and the escalation wrapper cover the external completion
path; they are never used by the benchmark.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Protocol

from .apdl import ApdlCommand, ApdlScript, parse_script, script_from_commands
from .corpus import Category, TaskSpec
from .faults import FailureSignature, FaultClass
from .gateway import GatewayConfig, GenerationRequest, external_complete
from .solver import unresolved_faults

DEFAULT_COMPETENCE: dict[FaultClass, float] = {
    FaultClass.MESH: 1.0,
    FaultClass.CONVERGENCE: 1.0,
    FaultClass.ELEMENT_TYPE: 1.0,
    FaultClass.MISSING_RESULTS: 1.0,
    FaultClass.HARD_GEOMETRY: 0.0,
}

# Default (compatible) element per category; the element-type defect swaps in
# the cross-domain partner instead.
_DEFAULT_ELEMENT = {
    Category.STATIC: "SOLID185",
    Category.MODAL: "SOLID186",
    Category.THERMAL: "SOLID70",
}
_WRONG_ELEMENT = {
    Category.STATIC: "SOLID70",
    Category.MODAL: "SOLID90",
    Category.THERMAL: "SOLID185",
}


class ModelClient(Protocol):
    def generate_initial(self, task: TaskSpec) -> ApdlScript: ...

    def repair(
        self,
        script: ApdlScript,
        sig: FailureSignature,
        task: TaskSpec,
        enrichment: str | None = None,
        attempt: int = 1,
    ) -> ApdlScript: ...

    def requests_stop(self, sig: FailureSignature, task: TaskSpec, attempt: int) -> bool: ...


def _seeded_unit(seed: int, case_id: int, attempt: int) -> float:
    digest = hashlib.sha256(f"{seed}:{case_id}:{attempt}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def build_template(task: TaskSpec, defects: frozenset[FaultClass] | set[FaultClass]) -> ApdlScript:
    """Category template for a task, planting one defect per class in
    `defects` (HardGeom has no script-level defect and is ignored)."""
    geo = task.geometry
    esize = geo.esize_mm if FaultClass.MESH in defects else 2.0 * geo.esize_mm
    element = (
        _WRONG_ELEMENT[task.category]
        if FaultClass.ELEMENT_TYPE in defects
        else _DEFAULT_ELEMENT[task.category]
    )
    dims = tuple(f"{v:g}" for v in geo.dims_mm)

    commands: list[ApdlCommand] = [
        ApdlCommand("PREP7"),
        ApdlCommand("ET", ("1", element)),
    ]
    if task.category is Category.THERMAL:
        commands.append(ApdlCommand("MP", ("KXX", "1", "45")))
    else:
        commands += [
            ApdlCommand("MP", ("EX", "1", "210000")),
            ApdlCommand("MP", ("PRXY", "1", "0.3")),
        ]
    commands += [
        ApdlCommand("BLOCK", ("0", dims[0], "0", dims[1], "0", dims[2])),
        ApdlCommand("ESIZE", (f"{esize:g}",)),
        ApdlCommand("VMESH", ("ALL",)),
        ApdlCommand("FINISH"),
        ApdlCommand("SOLU"),
    ]
    if task.category is Category.MODAL:
        commands += [
            ApdlCommand("ANTYPE", ("MODAL",)),
            ApdlCommand("MODOPT", ("LANB", "6")),
            ApdlCommand("MXPAND", ("6",)),
        ]
    else:
        commands.append(ApdlCommand("ANTYPE", ("STATIC",)))
    if FaultClass.CONVERGENCE not in defects:
        commands += [
            ApdlCommand("AUTOTS", ("ON",)),
            ApdlCommand("NSUBST", ("10", "100", "5")),
        ]
    if task.category is Category.THERMAL:
        commands.append(ApdlCommand("SFE", ("ALL", "1", "HFLUX", "", f"{geo.load_magnitude:g}")))
    elif task.category is Category.STATIC:
        commands.append(ApdlCommand("F", ("ALL", "FY", f"{-geo.load_magnitude:g}")))
    commands += [
        ApdlCommand("SOLVE"),
        ApdlCommand("FINISH"),
        ApdlCommand("POST1"),
    ]
    if FaultClass.MISSING_RESULTS in defects:
        commands.append(ApdlCommand("SET", ("3", "1")))
    else:
        commands.append(ApdlCommand("SET", ("LAST",)))
    if task.category is Category.THERMAL:
        commands.append(ApdlCommand("PLNSOL", ("TEMP",)))
    elif task.category is Category.MODAL:
        commands.append(ApdlCommand("PLDISP", ("1",)))
    else:
        commands.append(ApdlCommand("PLNSOL", ("U", "SUM")))
    commands.append(ApdlCommand("FINISH"))
    return script_from_commands(commands)


def expected_image_count(task: TaskSpec) -> int:
    """Images a defect-free run of the task should produce (one per SET or
    plot directive in the clean template)."""
    from .solver import PLOT_COMMANDS

    clean = build_template(task, frozenset())
    return max(1, sum(1 for c in clean.commands if c.name == "SET" or c.name in PLOT_COMMANDS))


@dataclass(frozen=True)
class ScriptedModelClient:
    """Deterministic generation/repair stand-in for benchmark runs.

    Repair succeeds with probability ``competence[fault_class]``; the draw is
    a pure function of (seed, case_id, attempt), so concurrent case-runs can
    share one client. HardGeom is never repaired regardless of competence.
    """

    seed: int = 0
    competence: dict[FaultClass, float] = field(default_factory=lambda: dict(DEFAULT_COMPETENCE))
    stops_after_failure: bool = True

    def generate_initial(self, task: TaskSpec) -> ApdlScript:
        return build_template(task, frozenset(task.fault_profile.injected_faults))

    def repair(
        self,
        script: ApdlScript,
        sig: FailureSignature,
        task: TaskSpec,
        enrichment: str | None = None,
        attempt: int = 1,
    ) -> ApdlScript:
        if sig.fault_class is FaultClass.HARD_GEOMETRY:
            return script
        draw = _seeded_unit(self.seed, task.case_id, attempt)
        if draw >= self.competence.get(sig.fault_class, 0.0):
            return script  # unsuccessful repair: same defect remains
        remaining = set(unresolved_faults(script, task))
        remaining.discard(sig.fault_class)
        remaining.discard(FaultClass.HARD_GEOMETRY)
        return build_template(task, remaining)

    def requests_stop(self, sig: FailureSignature, task: TaskSpec, attempt: int) -> bool:
        return self.stops_after_failure


@dataclass(frozen=True)
class GatewayModelClient:
    """Layer-3 client: prompts the external gateway and parses its output."""

    config: GatewayConfig

    def _complete(self, prompt: str) -> ApdlScript:
        text = external_complete(
            GenerationRequest(
                prompt=prompt,
                model=self.config.model_name,
                temperature=self.config.temperature,
            ),
            self.config,
        )
        return parse_script(text)

    def generate_initial(self, task: TaskSpec) -> ApdlScript:
        return self._complete(
            "Write a complete APDL script for the following task. Output "
            f"commands only, one per line.\n\nTask: {task.prompt}"
        )

    def repair(
        self,
        script: ApdlScript,
        sig: FailureSignature,
        task: TaskSpec,
        enrichment: str | None = None,
        attempt: int = 1,
    ) -> ApdlScript:
        from .apdl import render_script

        prompt = (
            "The APDL script below failed. Diagnose the error and output a "
            "corrected script, commands only, one per line.\n\n"
            f"Task: {task.prompt}\n\nScript:\n{render_script(script)}\n"
            f"Error: {sig.message}"
        )
        if enrichment:
            prompt += f"\n\nAdditional context:\n{enrichment}"
        return self._complete(prompt)

    def requests_stop(self, sig: FailureSignature, task: TaskSpec, attempt: int) -> bool:
        return False


@dataclass(frozen=True)
class EscalatingModelClient:
    """Local-first pair of clients: when the primary's output fails to
    parse, the request escalates to the secondary."""

    primary: ModelClient
    secondary: ModelClient

    def generate_initial(self, task: TaskSpec) -> ApdlScript:
        from .apdl import ParseError

        try:
            return self.primary.generate_initial(task)
        except ParseError:
            return self.secondary.generate_initial(task)

    def repair(
        self,
        script: ApdlScript,
        sig: FailureSignature,
        task: TaskSpec,
        enrichment: str | None = None,
        attempt: int = 1,
    ) -> ApdlScript:
        from .apdl import ParseError

        try:
            return self.primary.repair(script, sig, task, enrichment, attempt)
        except ParseError:
            return self.secondary.repair(script, sig, task, enrichment, attempt)

    def requests_stop(self, sig: FailureSignature, task: TaskSpec, attempt: int) -> bool:
        return self.primary.requests_stop(sig, task, attempt)
