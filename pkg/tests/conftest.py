import time
from types import SimpleNamespace

import pytest

from apdlbench import gateway
from apdlbench.corpus import Category, FaultProfile, Geometry, TaskSpec, generate_default_corpus
from apdlbench.faults import FaultClass
from apdlbench.runner import BenchmarkPlan, run_plan


@pytest.fixture(autouse=True)
def _network_guard(request):
    """No test may touch the network; gateway tests use replay fixtures or
    monkeypatched transports (opt out with the allow_live_gateway marker)."""
    if request.node.get_closest_marker("allow_live_gateway"):
        yield
        return
    with gateway.network_guard():
        yield


@pytest.fixture(scope="session")
def default_corpus():
    return generate_default_corpus(42)


def make_task(
    case_id=1,
    category=Category.STATIC,
    injected=(),
    rule_resolvable=None,
    model_resolvable=None,
    hard=False,
    esize=2.0,
):
    injected = tuple(injected)
    if rule_resolvable is None:
        rule_resolvable = frozenset(f for f in injected if f is not FaultClass.HARD_GEOMETRY)
    if model_resolvable is None:
        model_resolvable = frozenset(f for f in injected if f is not FaultClass.HARD_GEOMETRY)
    return TaskSpec(
        case_id=case_id,
        category=category,
        prompt=f"test task {case_id}",
        geometry=Geometry(
            kind="plate",
            dims_mm=(5 * esize * 10, 5 * esize * 5, 5 * esize),
            load_magnitude=0.0 if category is Category.MODAL else 2000.0,
            load_unit="W/m2" if category is Category.THERMAL else "N",
            esize_mm=esize,
        ),
        fault_profile=FaultProfile(
            injected_faults=injected,
            rule_resolvable=frozenset(rule_resolvable),
            model_resolvable=frozenset(model_resolvable),
        ),
        hard=hard,
    )


@pytest.fixture
def mesh_task():
    return make_task(case_id=11, injected=(FaultClass.MESH,))


@pytest.fixture
def clean_task():
    return make_task(case_id=12)


@pytest.fixture
def hard_task():
    return make_task(
        case_id=8,
        injected=(FaultClass.HARD_GEOMETRY,),
        rule_resolvable=(),
        model_resolvable=(),
        hard=True,
    )


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory):
    """One full default benchmark (450 case-runs, parallelism 8), shared by
    every test that inspects benchmark output."""
    out = tmp_path_factory.mktemp("bench")
    started = time.perf_counter()
    result = run_plan(BenchmarkPlan(out_dir=out, parallelism=8))
    elapsed = time.perf_counter() - started
    assert result.complete
    return SimpleNamespace(out=out, result=result, elapsed=elapsed)
