import pytest

from apdlbench.faults import (
    CLASS_PATTERNS,
    ERROR_SENTINEL,
    ExitStatus,
    FaultClass,
    NotAFailure,
    SolverLog,
    classify_error_line,
    extract_failure,
    invalid_element_name,
)

FIXTURE_LINES = {
    FaultClass.MESH: "*** ERROR *** MESH FAILURE: element size too small (ESIZE 2 below threshold 4)",
    FaultClass.CONVERGENCE: "*** ERROR *** SOLUTION NOT CONVERGED: equilibrium iteration limit reached in load step 1",
    FaultClass.ELEMENT_TYPE: "*** ERROR *** ELEMENT TYPE SOLID185 IS INVALID FOR THERMAL ANALYSIS",
    FaultClass.MISSING_RESULTS: "*** ERROR *** NO RESULTS FOR LOAD STEP 3 (last available step 1)",
    FaultClass.HARD_GEOMETRY: "*** ERROR *** GEOMETRY DECOMPOSITION FAILED: thin-wall feature could not be meshed",
}


def _failure_log(*lines):
    return SolverLog(lines=tuple(lines), exit_status=ExitStatus.FAILURE)


@pytest.mark.parametrize("fault_class,line", sorted(FIXTURE_LINES.items()))
def test_each_class_phrase_classifies(fault_class, line):
    sig = extract_failure(_failure_log("BEGIN SOLUTION", line))
    assert sig.fault_class is fault_class
    assert sig.message == line[len(ERROR_SENTINEL):]


def test_unmatched_error_is_unknown():
    sig = extract_failure(_failure_log("*** ERROR *** flux capacitor"))
    assert sig.fault_class is FaultClass.UNKNOWN


def test_success_log_raises():
    log = SolverLog(lines=("SOLUTION COMPLETE",), exit_status=ExitStatus.SUCCESS)
    with pytest.raises(NotAFailure):
        extract_failure(log)


def test_first_error_wins():
    log = _failure_log(
        FIXTURE_LINES[FaultClass.CONVERGENCE],
        FIXTURE_LINES[FaultClass.MESH],
    )
    assert extract_failure(log).fault_class is FaultClass.CONVERGENCE


def test_failure_without_sentinel_line_is_unknown():
    sig = extract_failure(_failure_log("something exploded"))
    assert sig.fault_class is FaultClass.UNKNOWN


def test_patterns_mutually_exclusive_on_fixture_lines():
    # No fixture line may match more than one class pattern.
    for line in FIXTURE_LINES.values():
        body = line[len(ERROR_SENTINEL):]
        matches = [fc for fc, pattern in CLASS_PATTERNS if pattern.match(body)]
        assert len(matches) == 1


def test_classify_requires_sentinel_prefix():
    assert classify_error_line("MESH FAILURE: no sentinel") is FaultClass.UNKNOWN


def test_invalid_element_name_extraction():
    body = FIXTURE_LINES[FaultClass.ELEMENT_TYPE][len(ERROR_SENTINEL):]
    assert invalid_element_name(body) == "SOLID185"
    assert invalid_element_name("MESH FAILURE: nope") is None
