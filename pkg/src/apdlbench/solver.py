"""Solver backends: the deterministic fault-injecting simulator, an external
command adapter, and the connector that picks among them.

The simulator gives rule patches and model repairs a genuine, checkable
effect. Each injected fault class has a fixed predicate over the script:

- MeshFail      resolved iff some ESIZE argument >= the task mesh threshold
                (2x the geometry's base element size) OR MSHKEY,0 is present
- ConvFail      resolved iff AUTOTS,ON and NSUBST both appear before the
                first SOLVE
- ElemTypeFail  resolved iff every ET names an element compatible with the
                task category
- MissingResults resolved iff every SET targets LAST or a step <= the number
                of SOLVE commands
- HardGeom      never resolved by any script content

Predicates are evaluated in that order; the first unresolved injected fault
produces the failure log. No physics is modelled: success means the scripted
workflow would have produced post-processing images.
"""

from __future__ import annotations

import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .apdl import ApdlScript
from .corpus import Category, TaskSpec
from .faults import (
    ERROR_SENTINEL,
    IMAGE_WRITTEN_PREFIX,
    SOLUTION_COMPLETE,
    ExitStatus,
    FaultClass,
    SolverLog,
)

PLOT_COMMANDS = frozenset({"PLNSOL", "PLDISP", "PLVECT", "PLESOL"})

ELEMENT_COMPATIBILITY = {
    Category.STATIC: frozenset({"SOLID185", "SOLID186", "BEAM188", "SHELL181"}),
    Category.MODAL: frozenset({"SOLID185", "SOLID186", "BEAM188", "SHELL181"}),
    Category.THERMAL: frozenset({"SOLID70", "SOLID90"}),
}


class BackendId(str, Enum):
    SIMULATED = "simulated"
    EXTERNAL_COMMAND = "external_command"
    FALLBACK = "fallback"


class InvalidScript(ValueError):
    """The backend was handed an empty script."""


@dataclass(frozen=True)
class SimOutcome:
    success: bool
    images: tuple[str, ...]
    log: SolverLog
    solve_steps: int


@dataclass(frozen=True)
class BackendConfig:
    preference: tuple[str, ...] = (BackendId.SIMULATED.value,)
    external_command: str | None = None
    workdir: Path | None = None


def mesh_threshold(task: TaskSpec) -> float:
    # One rule-driven doubling of the generated ESIZE is enough to cross it.
    return 2.0 * task.geometry.esize_mm


def solve_step_count(script: ApdlScript) -> int:
    return sum(1 for c in script.commands if c.name == "SOLVE")


def _float_arg(args: tuple[str, ...], index: int = 0) -> float | None:
    if len(args) <= index:
        return None
    try:
        return float(args[index])
    except ValueError:
        return None


def _mesh_resolved(script: ApdlScript, task: TaskSpec) -> bool:
    for cmd in script.find_all("MSHKEY"):
        if cmd.args and cmd.args[0] == "0":
            return True
    threshold = mesh_threshold(task)
    for cmd in script.find_all("ESIZE"):
        value = _float_arg(cmd.args)
        if value is not None and value >= threshold:
            return True
    return False


def _convergence_resolved(script: ApdlScript, task: TaskSpec) -> bool:
    first_solve = script.first_index("SOLVE")
    cutoff = len(script.commands) if first_solve is None else first_solve
    has_autots = any(
        c.name == "AUTOTS" and c.args and c.args[0].upper() == "ON"
        for c in script.commands[:cutoff]
    )
    has_nsubst = any(c.name == "NSUBST" for c in script.commands[:cutoff])
    return has_autots and has_nsubst


def _element_type_resolved(script: ApdlScript, task: TaskSpec) -> bool:
    compatible = ELEMENT_COMPATIBILITY[task.category]
    for cmd in script.find_all("ET"):
        if len(cmd.args) < 2 or cmd.args[1].upper() not in compatible:
            return False
    return True


def _missing_results_resolved(script: ApdlScript, task: TaskSpec) -> bool:
    steps = solve_step_count(script)
    for cmd in script.find_all("SET"):
        if not cmd.args:
            continue  # bare SET reads the first step
        target = cmd.args[0].upper()
        if target == "LAST":
            continue
        step = _float_arg(cmd.args)
        if step is None or step > steps:
            return False
    return True


_PREDICATES = (
    (FaultClass.MESH, _mesh_resolved),
    (FaultClass.CONVERGENCE, _convergence_resolved),
    (FaultClass.ELEMENT_TYPE, _element_type_resolved),
    (FaultClass.MISSING_RESULTS, _missing_results_resolved),
)


def unresolved_faults(script: ApdlScript, task: TaskSpec) -> list[FaultClass]:
    """Injected faults the script does not cure, in predicate order."""
    injected = set(task.fault_profile.injected_faults)
    unresolved = [f for f, ok in _PREDICATES if f in injected and not ok(script, task)]
    if FaultClass.HARD_GEOMETRY in injected:
        unresolved.append(FaultClass.HARD_GEOMETRY)
    return unresolved


def _first_bad_element(script: ApdlScript, task: TaskSpec) -> str:
    compatible = ELEMENT_COMPATIBILITY[task.category]
    for cmd in script.find_all("ET"):
        if len(cmd.args) < 2:
            return "UNDEFINED"
        if cmd.args[1].upper() not in compatible:
            return cmd.args[1].upper()
    return "UNDEFINED"


def _first_bad_set_step(script: ApdlScript, steps: int) -> str:
    for cmd in script.find_all("SET"):
        if not cmd.args:
            continue
        target = cmd.args[0].upper()
        if target == "LAST":
            continue
        step = _float_arg(cmd.args)
        if step is None or step > steps:
            return cmd.args[0]
    return "?"


def _failure_message(fault: FaultClass, script: ApdlScript, task: TaskSpec) -> str:
    if fault is FaultClass.MESH:
        esizes = [v for c in script.find_all("ESIZE") if (v := _float_arg(c.args)) is not None]
        observed = f"{min(esizes):g}" if esizes else "undefined"
        return (
            f"MESH FAILURE: element size too small "
            f"(ESIZE {observed} below threshold {mesh_threshold(task):g})"
        )
    if fault is FaultClass.CONVERGENCE:
        return "SOLUTION NOT CONVERGED: equilibrium iteration limit reached in load step 1"
    if fault is FaultClass.ELEMENT_TYPE:
        name = _first_bad_element(script, task)
        return f"ELEMENT TYPE {name} IS INVALID FOR {task.category.value.upper()} ANALYSIS"
    if fault is FaultClass.MISSING_RESULTS:
        step = _first_bad_set_step(script, solve_step_count(script))
        return f"NO RESULTS FOR LOAD STEP {step} (last available step {solve_step_count(script)})"
    if fault is FaultClass.HARD_GEOMETRY:
        return "GEOMETRY DECOMPOSITION FAILED: thin-wall feature could not be meshed"
    return "UNCLASSIFIED SOLVER FAULT"


@dataclass(frozen=True)
class SimulatedBackend:
    """Deterministic simulated MAPDL engine with fault injection."""

    workdir: Path | None = None
    backend_id: BackendId = BackendId.SIMULATED

    def execute(self, script: ApdlScript, task: TaskSpec, attempt: int = 1) -> SimOutcome:
        if not script.commands:
            raise InvalidScript("script has no commands")
        steps = solve_step_count(script)
        unresolved = unresolved_faults(script, task)
        if unresolved:
            message = _failure_message(unresolved[0], script, task)
            log = SolverLog(
                lines=("BEGIN SOLUTION", ERROR_SENTINEL + message),
                exit_status=ExitStatus.FAILURE,
            )
            return SimOutcome(success=False, images=(), log=log, solve_steps=steps)

        n_outputs = sum(1 for c in script.commands if c.name == "SET" or c.name in PLOT_COMMANDS)
        n_outputs = max(1, n_outputs)
        images = tuple(
            f"plot_{task.case_id}_{attempt}_{i}.png" for i in range(1, n_outputs + 1)
        )
        if self.workdir is not None:
            self.workdir.mkdir(parents=True, exist_ok=True)
            for name in images:
                (self.workdir / name).touch()
        lines = ("BEGIN SOLUTION", *(IMAGE_WRITTEN_PREFIX + p for p in images), SOLUTION_COMPLETE)
        return SimOutcome(
            success=True,
            images=images,
            log=SolverLog(lines=lines, exit_status=ExitStatus.SUCCESS),
            solve_steps=steps,
        )


@dataclass(frozen=True)
class FallbackBackend(SimulatedBackend):
    """Degraded-mode alias of the simulator (always available)."""

    backend_id: BackendId = BackendId.FALLBACK


@dataclass(frozen=True)
class ExternalCommandBackend:
    """Adapter that shells out to a configured solver executable.

    The executable is invoked with the rendered script path as its single
    argument; stdout/stderr become the solver log and a nonzero exit without
    a sentinel line is adapted into an Unknown-classified error. Exists for
    real-solver integration; never used by the benchmark.
    """

    command: str
    workdir: Path | None = None
    timeout_s: float = 120.0
    backend_id: BackendId = BackendId.EXTERNAL_COMMAND

    def execute(self, script: ApdlScript, task: TaskSpec, attempt: int = 1) -> SimOutcome:
        from .apdl import render_script

        if not script.commands:
            raise InvalidScript("script has no commands")
        workdir = self.workdir or Path(tempfile.mkdtemp(prefix="apdlbench-ext-"))
        workdir.mkdir(parents=True, exist_ok=True)
        script_path = workdir / f"case_{task.case_id}_{attempt}.inp"
        script_path.write_text(render_script(script), encoding="utf-8")
        proc = subprocess.run(
            [self.command, str(script_path)],
            capture_output=True,
            text=True,
            timeout=self.timeout_s,
        )
        lines = tuple((proc.stdout + proc.stderr).splitlines())
        if proc.returncode == 0:
            images = tuple(
                line[len(IMAGE_WRITTEN_PREFIX):]
                for line in lines
                if line.startswith(IMAGE_WRITTEN_PREFIX)
            )
            return SimOutcome(
                success=bool(images),
                images=images,
                log=SolverLog(
                    lines=lines,
                    exit_status=ExitStatus.SUCCESS if images else ExitStatus.FAILURE,
                ),
                solve_steps=solve_step_count(script),
            )
        if not any(line.startswith(ERROR_SENTINEL) for line in lines):
            lines = lines + (f"{ERROR_SENTINEL}EXTERNAL SOLVER EXITED WITH CODE {proc.returncode}",)
        return SimOutcome(
            success=False,
            images=(),
            log=SolverLog(lines=lines, exit_status=ExitStatus.FAILURE),
            solve_steps=solve_step_count(script),
        )


def _external_available(config: BackendConfig) -> bool:
    if not config.external_command:
        return False
    return bool(shutil.which(config.external_command)) or Path(config.external_command).exists()


def select_backend(config: BackendConfig):
    """First available backend in preference order; the simulator is the
    guaranteed default."""
    for name in config.preference:
        if name == BackendId.EXTERNAL_COMMAND.value and _external_available(config):
            return ExternalCommandBackend(command=config.external_command, workdir=config.workdir)
        if name == BackendId.SIMULATED.value:
            return SimulatedBackend(workdir=config.workdir)
        if name == BackendId.FALLBACK.value:
            return FallbackBackend(workdir=config.workdir)
    return SimulatedBackend(workdir=config.workdir)
