"""apdlbench: a fault-tolerant APDL automation harness and a benchmark that
compares recovery strategies (no_recovery, rule_only, model_only) on a
deterministic fault-injecting simulated solver."""

from .apdl import ApdlCommand, ApdlScript, ParseError, parse_script, render_script
from .corpus import (
    Category,
    Corpus,
    FaultProfile,
    Geometry,
    MalformedCorpus,
    TaskSpec,
    generate_default_corpus,
    load_corpus,
    save_corpus,
)
from .faults import FailureSignature, FaultClass, SolverLog, extract_failure
from .orchestrator import CaseRunner, CaseRunRecord, run_case
from .recovery import Policy, StrategyConfig, budget_for, ladder_next, rule_patch
from .runner import BenchmarkPlan, run_plan
from .solver import BackendConfig, SimOutcome, SimulatedBackend, select_backend

__version__ = "0.1.0"
