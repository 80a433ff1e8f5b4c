"""Benchmark task corpus: generation, validation, persistence.

The default corpus has 50 tasks (35 static, 10 modal, 5 thermal). Cases 8,
21 and 35 are the hard ones: static tasks whose geometry defeats every
script-level repair (they inject HardGeom, resolvable by neither rules nor
the repair model). Of the remaining 47 tasks, 30% carry injected faults;
roughly 60% of those faulted tasks are curable by a single rule patch
(single fault), the rest carry two faults and thus exceed the rule
strategy's two-attempt budget while staying within the model strategy's
four.
"""

from __future__ import annotations

import json
import random
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .faults import FaultClass


class Category(str, Enum):
    STATIC = "static"
    MODAL = "modal"
    THERMAL = "thermal"


CORPUS_VERSION = 1
DEFAULT_SEED = 42
CATEGORY_COUNTS = {Category.STATIC: 35, Category.MODAL: 10, Category.THERMAL: 5}
HARD_CASE_IDS = (8, 21, 35)

# Fixture knobs for the default corpus (see module docstring).
_FAULTED_NONHARD = 14
_SINGLE_FAULT = 8
_DOUBLE_FAULT = _FAULTED_NONHARD - _SINGLE_FAULT

# Which fault classes each category can draw.
CATEGORY_FAULT_POOL = {
    Category.STATIC: (FaultClass.MESH, FaultClass.CONVERGENCE, FaultClass.MISSING_RESULTS),
    Category.MODAL: (FaultClass.MESH, FaultClass.MISSING_RESULTS),
    Category.THERMAL: (FaultClass.ELEMENT_TYPE, FaultClass.CONVERGENCE),
}

_SHAPES = {
    Category.STATIC: ("beam", "plate", "bracket", "cylinder", "assembly"),
    Category.MODAL: ("beam", "plate", "cylinder"),
    Category.THERMAL: ("plate", "cylinder", "block"),
}

_PROMPTS = {
    Category.STATIC: (
        "Run a linear static structural analysis of a steel {kind} "
        "({dims} mm) under a {load:.0f} N load. Mesh the model, solve, and "
        "produce a displacement contour plot."
    ),
    Category.MODAL: (
        "Run a modal analysis of a steel {kind} ({dims} mm) and extract the "
        "first six natural frequencies. Mesh the model, solve, and plot the "
        "fundamental mode shape."
    ),
    Category.THERMAL: (
        "Run a steady-state thermal analysis of a steel {kind} ({dims} mm) "
        "with a {load:.0f} W/m2 heat flux on one face. Mesh the model, "
        "solve, and produce a temperature contour plot."
    ),
}


class MalformedCorpus(ValueError):
    """Corpus file violates the schema or a structural invariant."""


class CorpusWarning(UserWarning):
    """Non-fatal corpus oddity (e.g. non-default category histogram)."""


@dataclass(frozen=True)
class Geometry:
    kind: str
    dims_mm: tuple[float, ...]
    load_magnitude: float
    load_unit: str
    esize_mm: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dims_mm": list(self.dims_mm),
            "load_magnitude": self.load_magnitude,
            "load_unit": self.load_unit,
            "esize_mm": self.esize_mm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Geometry":
        return cls(
            kind=d["kind"],
            dims_mm=tuple(float(v) for v in d["dims_mm"]),
            load_magnitude=float(d["load_magnitude"]),
            load_unit=d["load_unit"],
            esize_mm=float(d["esize_mm"]),
        )


@dataclass(frozen=True)
class FaultProfile:
    injected_faults: tuple[FaultClass, ...] = ()
    rule_resolvable: frozenset[FaultClass] = frozenset()
    model_resolvable: frozenset[FaultClass] = frozenset()

    def validate(self) -> None:
        injected = set(self.injected_faults)
        if not self.rule_resolvable <= injected:
            raise MalformedCorpus("rule_resolvable must be a subset of injected_faults")
        if not self.model_resolvable <= injected:
            raise MalformedCorpus("model_resolvable must be a subset of injected_faults")

    def to_dict(self) -> dict:
        return {
            "injected_faults": [f.value for f in self.injected_faults],
            "rule_resolvable": sorted(f.value for f in self.rule_resolvable),
            "model_resolvable": sorted(f.value for f in self.model_resolvable),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FaultProfile":
        return cls(
            injected_faults=tuple(FaultClass(v) for v in d["injected_faults"]),
            rule_resolvable=frozenset(FaultClass(v) for v in d["rule_resolvable"]),
            model_resolvable=frozenset(FaultClass(v) for v in d["model_resolvable"]),
        )


@dataclass(frozen=True)
class TaskSpec:
    case_id: int
    category: Category
    prompt: str
    geometry: Geometry
    fault_profile: FaultProfile
    hard: bool = False

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "category": self.category.value,
            "prompt": self.prompt,
            "geometry": self.geometry.to_dict(),
            "fault_profile": self.fault_profile.to_dict(),
            "hard": self.hard,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(
            case_id=int(d["case_id"]),
            category=Category(d["category"]),
            prompt=d["prompt"],
            geometry=Geometry.from_dict(d["geometry"]),
            fault_profile=FaultProfile.from_dict(d["fault_profile"]),
            hard=bool(d["hard"]),
        )


@dataclass(frozen=True)
class Corpus:
    seed: int
    tasks: tuple[TaskSpec, ...]
    corpus_version: int = CORPUS_VERSION

    def task(self, case_id: int) -> TaskSpec:
        for t in self.tasks:
            if t.case_id == case_id:
                return t
        raise KeyError(f"no task with case_id {case_id}")

    def histogram(self) -> dict[Category, int]:
        counts = {c: 0 for c in Category}
        for t in self.tasks:
            counts[t.category] += 1
        return counts


def _geometry_for(category: Category, hard: bool, rng: random.Random) -> Geometry:
    kind = rng.choice(_SHAPES[category])
    if hard:
        # Thin-wall geometry: the feature that makes script-level repair moot.
        dims = (
            float(rng.randrange(60, 140, 10)),
            float(rng.randrange(30, 70, 10)),
            round(rng.uniform(1.0, 2.0), 1),
        )
    else:
        dims = (
            float(rng.randrange(50, 250, 10)),
            float(rng.randrange(20, 100, 10)),
            float(rng.randrange(5, 40, 5)),
        )
    if category is Category.THERMAL:
        load, unit = float(rng.randrange(1000, 20000, 500)), "W/m2"
    elif category is Category.MODAL:
        load, unit = 0.0, "N"
    else:
        load, unit = float(rng.randrange(500, 5000, 100)), "N"
    esize = max(0.5, round(min(dims) / 5.0, 1))
    return Geometry(kind=kind, dims_mm=dims, load_magnitude=load, load_unit=unit, esize_mm=esize)


def _prompt_for(category: Category, geometry: Geometry, hard: bool) -> str:
    dims = "x".join(f"{v:g}" for v in geometry.dims_mm)
    text = _PROMPTS[category].format(kind=geometry.kind, dims=dims, load=geometry.load_magnitude)
    if hard:
        text += " The part has thin-wall features; preserve the nominal wall thickness."
    return text


def generate_default_corpus(seed: int = DEFAULT_SEED) -> Corpus:
    """Deterministic 50-task corpus; a pure function of the seed."""
    rng = random.Random(seed)

    non_hard = [i for i in range(1, 51) if i not in HARD_CASE_IDS]
    shuffled = list(non_hard)
    rng.shuffle(shuffled)
    n_static = CATEGORY_COUNTS[Category.STATIC] - len(HARD_CASE_IDS)
    n_modal = CATEGORY_COUNTS[Category.MODAL]
    categories: dict[int, Category] = {i: Category.STATIC for i in HARD_CASE_IDS}
    for pos, case_id in enumerate(shuffled):
        if pos < n_static:
            categories[case_id] = Category.STATIC
        elif pos < n_static + n_modal:
            categories[case_id] = Category.MODAL
        else:
            categories[case_id] = Category.THERMAL

    faulted = sorted(rng.sample(sorted(non_hard), _FAULTED_NONHARD))
    double_faulted = set(rng.sample(faulted, _DOUBLE_FAULT))

    tasks = []
    for case_id in range(1, 51):
        category = categories[case_id]
        hard = case_id in HARD_CASE_IDS
        geometry = _geometry_for(category, hard, rng)
        if hard:
            profile = FaultProfile(injected_faults=(FaultClass.HARD_GEOMETRY,))
        elif case_id in faulted:
            pool = CATEGORY_FAULT_POOL[category]
            if case_id in double_faulted:
                injected = tuple(rng.sample(pool, 2))
                profile = FaultProfile(
                    injected_faults=injected,
                    rule_resolvable=frozenset(),
                    model_resolvable=frozenset(injected),
                )
            else:
                injected = (rng.choice(pool),)
                profile = FaultProfile(
                    injected_faults=injected,
                    rule_resolvable=frozenset(injected),
                    model_resolvable=frozenset(injected),
                )
        else:
            profile = FaultProfile()
        tasks.append(
            TaskSpec(
                case_id=case_id,
                category=category,
                prompt=_prompt_for(category, geometry, hard),
                geometry=geometry,
                fault_profile=profile,
                hard=hard,
            )
        )
    return Corpus(seed=seed, tasks=tuple(tasks))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    doc = {
        "corpus_version": corpus.corpus_version,
        "seed": corpus.seed,
        "tasks": [t.to_dict() for t in corpus.tasks],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a corpus file; round-trips with save_corpus."""
    raw = Path(path).read_text(encoding="utf-8")
    if not raw.strip():
        raise MalformedCorpus(f"{path}: empty corpus file")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedCorpus(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "tasks" not in doc:
        raise MalformedCorpus(f"{path}: missing top-level 'tasks'")
    if doc.get("corpus_version") != CORPUS_VERSION:
        raise MalformedCorpus(f"{path}: unsupported corpus_version {doc.get('corpus_version')!r}")

    expected_keys = {"case_id", "category", "prompt", "geometry", "fault_profile", "hard"}
    tasks = []
    seen_ids: set[int] = set()
    for entry in doc["tasks"]:
        if not isinstance(entry, dict) or set(entry) != expected_keys:
            raise MalformedCorpus(f"{path}: task keys must be exactly {sorted(expected_keys)}")
        try:
            task = TaskSpec.from_dict(entry)
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedCorpus(f"{path}: bad task entry: {exc}") from exc
        if task.case_id in seen_ids:
            raise MalformedCorpus(f"{path}: duplicate case_id {task.case_id}")
        seen_ids.add(task.case_id)
        task.fault_profile.validate()
        tasks.append(task)

    corpus = Corpus(seed=int(doc.get("seed", 0)), tasks=tuple(tasks))
    if corpus.histogram() != CATEGORY_COUNTS:
        warnings.warn(
            f"{path}: category histogram {corpus.histogram()} differs from the default 35/10/5",
            CorpusWarning,
            stacklevel=2,
        )
    return corpus
