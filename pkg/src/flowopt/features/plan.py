"""Feature masks, representations and specialized extraction plans."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..ingest import Dataset, FlowRecord
from . import kernels
from .registry import FEATURE_INDEX, FEATURES, N_FEATURES, N_STEPS, STEP_NAMES, STEP_PARENTS

# Depth sentinel for "consume the whole connection".
UNBOUNDED = None


@dataclass(frozen=True, order=True)
class FeatureMask:
    """A subset of the feature registry stored as an integer bit set (bit i = feature id i)."""

    bits: int = 0

    def __post_init__(self):
        if self.bits < 0 or self.bits >> N_FEATURES:
            raise ValueError("mask has bits outside the feature registry")

    @classmethod
    def from_ids(cls, ids: Iterable[int]) -> "FeatureMask":
        bits = 0
        for i in ids:
            if not 0 <= i < N_FEATURES:
                raise ValueError(f"feature id {i} out of range")
            bits |= 1 << i
        return cls(bits)

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "FeatureMask":
        return cls.from_ids(FEATURE_INDEX[n] for n in names)

    @classmethod
    def full(cls) -> "FeatureMask":
        return cls((1 << N_FEATURES) - 1)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(i for i in range(N_FEATURES) if self.bits >> i & 1)

    @property
    def names(self) -> list[str]:
        return [FEATURES[i].name for i in self.ids]

    def popcount(self) -> int:
        return bin(self.bits).count("1")

    def __len__(self) -> int:
        return self.popcount()

    def __contains__(self, fid: int) -> bool:
        return bool(self.bits >> fid & 1)

    def issubset(self, other: "FeatureMask") -> bool:
        return self.bits & ~other.bits == 0

    def __or__(self, other: "FeatureMask") -> "FeatureMask":
        return FeatureMask(self.bits | other.bits)

    def __and__(self, other: "FeatureMask") -> "FeatureMask":
        return FeatureMask(self.bits & other.bits)


@dataclass(frozen=True)
class Representation:
    mask: FeatureMask
    depth: int | None

    def __post_init__(self):
        if self.depth is not None and self.depth < 1:
            raise ValueError(f"depth must be >= 1 or UNBOUNDED, got {self.depth}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.mask.bits, 0 if self.depth is None else self.depth)

    def describe(self) -> str:
        depth = "all" if self.depth is None else str(self.depth)
        return f"({'+'.join(self.mask.names)}, n={depth})"


def depth_limit(depth: int | None) -> int:
    return np.iinfo(np.int64).max if depth is None else int(depth)


@dataclass(frozen=True)
class ExtractionPlan:
    """Deduplicated step list plus the ordered feature finalizers for one representation."""

    steps: tuple[int, ...]
    finalizers: tuple[int, ...]
    depth: int | None
    enabled: np.ndarray = field(repr=False, compare=False)
    columns: np.ndarray = field(repr=False, compare=False)

    @property
    def step_names(self) -> list[str]:
        return [STEP_NAMES[s] for s in self.steps]

    @property
    def mask(self) -> FeatureMask:
        return FeatureMask.from_ids(self.finalizers)


def compile_plan(rep: Representation) -> ExtractionPlan:
    if rep.mask.popcount() == 0:
        raise ValueError("cannot build a plan for an empty feature mask")
    needed: set[int] = set()
    for fid in rep.mask.ids:
        needed |= FEATURES[fid].step_deps
    steps = tuple(sorted(needed))  # ids are already topologically ordered
    assert all(p in needed for s in steps for p in STEP_PARENTS[s])
    enabled = np.zeros(N_STEPS, dtype=np.bool_)
    enabled[list(steps)] = True
    columns = np.array(rep.mask.ids, dtype=np.int64)
    enabled.setflags(write=False)
    columns.setflags(write=False)
    return ExtractionPlan(steps, rep.mask.ids, rep.depth, enabled, columns)


class Extractor:
    """Reusable scratch buffers around the extraction kernel."""

    def __init__(self, plan: ExtractionPlan, packed):
        self.plan = plan
        self.packed = packed
        lim = depth_limit(plan.depth)
        cap = max(1, min(lim, packed.max_len))
        self.limit = lim
        self.out = np.zeros((packed.n_flows, len(plan.columns)), dtype=np.float64)
        self.inspected = np.zeros(packed.n_flows, dtype=np.int64)
        self.scratch = np.zeros((8, cap), dtype=np.int64)

    def run(self) -> np.ndarray:
        p = self.packed
        kernels.extract_flows(
            p.offsets, p.ts, p.dir, p.frame_len, p.headers, self.plan.enabled,
            self.plan.columns, self.limit, self.out, self.inspected, self.scratch,
        )
        return self.out


def extract(plan: ExtractionPlan, flow: FlowRecord) -> np.ndarray:
    ds = Dataset((flow,), task="regression")
    return Extractor(plan, ds.packed).run()[0].copy()


def extract_dataset(plan: ExtractionPlan, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix (row i = flow i) and label vector."""
    X = Extractor(plan, dataset.packed).run().copy()
    y = dataset.labels if dataset.labeled else np.array([None] * len(dataset), dtype=object)
    return X, y


def extract_counted(plan: ExtractionPlan, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`extract_dataset` but also returns packets inspected per flow."""
    ex = Extractor(plan, dataset.packed)
    X = ex.run().copy()
    return X, ex.inspected.copy()
