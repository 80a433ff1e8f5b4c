"""Solver log model and failure classification.

The log grammar is fixed and bit-exact: every error line begins with
``*** ERROR *** `` followed by a class phrase, success logs list produced
images as ``IMAGE WRITTEN: <path>`` and end with ``SOLUTION COMPLETE``.
Classification is first-error-wins: the first sentinel line determines the
signature for the whole log.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum


class FaultClass(str, Enum):
    MESH = "MeshFail"
    CONVERGENCE = "ConvFail"
    ELEMENT_TYPE = "ElemTypeFail"
    MISSING_RESULTS = "MissingResults"
    HARD_GEOMETRY = "HardGeom"
    UNKNOWN = "Unknown"


class ExitStatus(str, Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"


ERROR_SENTINEL = "*** ERROR *** "
SOLUTION_COMPLETE = "SOLUTION COMPLETE"
IMAGE_WRITTEN_PREFIX = "IMAGE WRITTEN: "

# Patterns apply to the text after the sentinel. They are mutually exclusive
# on any single line (cross-checked in tests).
CLASS_PATTERNS: tuple[tuple[FaultClass, re.Pattern[str]], ...] = (
    (FaultClass.MESH, re.compile(r"^MESH FAILURE")),
    (FaultClass.CONVERGENCE, re.compile(r"^SOLUTION NOT CONVERGED")),
    (FaultClass.ELEMENT_TYPE, re.compile(r"^ELEMENT TYPE (\S+) IS INVALID FOR")),
    (FaultClass.MISSING_RESULTS, re.compile(r"^NO RESULTS FOR LOAD STEP")),
    (FaultClass.HARD_GEOMETRY, re.compile(r"^GEOMETRY DECOMPOSITION FAILED")),
)


class NotAFailure(ValueError):
    """extract_failure was handed a successful log."""


@dataclass(frozen=True)
class SolverLog:
    lines: tuple[str, ...]
    exit_status: ExitStatus

    @property
    def text(self) -> str:
        return "\n".join(self.lines)


@dataclass(frozen=True)
class FailureSignature:
    fault_class: FaultClass
    message: str
    command_ref: int | None = None


def classify_error_line(line: str) -> FaultClass:
    """Classify one sentinel line; Unknown when no class phrase matches."""
    if not line.startswith(ERROR_SENTINEL):
        return FaultClass.UNKNOWN
    body = line[len(ERROR_SENTINEL):]
    for fault_class, pattern in CLASS_PATTERNS:
        if pattern.match(body):
            return fault_class
    return FaultClass.UNKNOWN


def invalid_element_name(message: str) -> str | None:
    """Element name from an ElemTypeFail message, if present."""
    m = CLASS_PATTERNS[2][1].match(message)
    return m.group(1) if m else None


def extract_failure(log: SolverLog) -> FailureSignature:
    """Signature of the first error line of a failed log.

    Raises NotAFailure for successful logs. A failed log with no matching
    class phrase yields an Unknown signature carrying the raw line.
    """
    if log.exit_status is ExitStatus.SUCCESS:
        raise NotAFailure("log has exit_status Success")
    for line in log.lines:
        if line.startswith(ERROR_SENTINEL):
            body = line[len(ERROR_SENTINEL):]
            return FailureSignature(
                fault_class=classify_error_line(line),
                message=body,
            )
    return FailureSignature(fault_class=FaultClass.UNKNOWN, message=log.text)
