"""Score-ranked pruning policies over an error buffer.

All policies rank ascending by accumulated removal error (ties broken by id)
and drop a prefix of that ranking: a fixed fraction, or the longest prefix
whose cumulative score stays within a budget. The iterative driver re-scores
between cycles because one-shot scores ignore interactions between removed
Gaussians (each score assumes the rest of the scene stays).
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .camera import ViewSet
from .model import GaussianScene, subset
from .quant import ErrorBuffer, QuantConstants, quantify_scene


@dataclass(frozen=True)
class PruneConfig:
    """Validated pruning request: exactly one of ratio or budget."""

    ratio: float | None = None
    budget: float | None = None
    cycles: int = 1

    def __post_init__(self):
        if (self.ratio is None) == (self.budget is None):
            raise ValueError("specify exactly one of ratio or budget")
        if self.ratio is not None and not 0.0 < self.ratio < 1.0:
            raise ValueError(f"ratio must be in (0, 1), got {self.ratio}")
        if self.budget is not None and self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget}")
        if self.cycles < 1:
            raise ValueError(f"cycles must be >= 1, got {self.cycles}")
        if self.ratio is not None and self.cycles != 1:
            raise ValueError("cycles apply to budget pruning only")


@dataclass
class CycleStats:
    """Bookkeeping of one pruning cycle, in original-scene ids."""

    removed_ids: list[int]
    removed_score_sum: float
    n_before: int
    n_after: int
    quantify_seconds: float | None = None


@dataclass
class PruneReport:
    """Full record of a pruning run."""

    policy: str
    parameter: float
    cycles: list[CycleStats] = field(default_factory=list)

    @property
    def removed_ids_total(self) -> list[int]:
        out: list[int] = []
        for c in self.cycles:
            out.extend(c.removed_ids)
        return out

    @property
    def removed_score_total(self) -> float:
        return float(sum(c.removed_score_sum for c in self.cycles))

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "parameter": self.parameter,
            "n_cycles": len(self.cycles),
            "removed_total": len(self.removed_ids_total),
            "removed_score_total": self.removed_score_total,
            "cycles": [asdict(c) for c in self.cycles],
        }

    def to_json(self, path) -> None:
        with open(str(path), "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def rank(buffer: ErrorBuffer) -> np.ndarray:
    """Ids sorted ascending by (score, id). Deterministic under ties."""
    ids = np.arange(len(buffer), dtype=np.int64)
    return np.lexsort((ids, buffer.delta_se)).astype(np.int64)


def _removal_prefix_by_budget(buffer: ErrorBuffer, budget: float) -> np.ndarray:
    order = rank(buffer)
    cum = np.cumsum(buffer.delta_se[order])
    n_remove = int(np.searchsorted(cum, budget, side="right"))
    n_remove = min(n_remove, len(buffer) - 1)  # always keep at least one
    return order[:n_remove]


def prune_ratio(
    scene: GaussianScene, buffer: ErrorBuffer, ratio: float
) -> tuple[GaussianScene, PruneReport]:
    """Drop the lowest-scored floor(ratio * M) Gaussians."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if len(buffer) != len(scene):
        raise ValueError("buffer and scene sizes differ")
    m = len(scene)
    n_remove = int(np.floor(ratio * m))
    order = rank(buffer)
    removed = order[:n_remove]
    keep = np.setdiff1d(np.arange(m, dtype=np.int64), removed)
    if keep.size == 0:
        raise ValueError("ratio prune would remove every Gaussian")
    pruned, _ = subset(scene, keep)
    report = PruneReport(
        policy="ratio",
        parameter=ratio,
        cycles=[
            CycleStats(
                removed_ids=[int(i) for i in removed],
                removed_score_sum=float(buffer.delta_se[removed].sum()),
                n_before=m,
                n_after=int(keep.size),
            )
        ],
    )
    return pruned, report


def prune_budget(
    scene: GaussianScene, buffer: ErrorBuffer, budget: float
) -> tuple[GaussianScene, PruneReport]:
    """Drop the longest ascending-rank prefix with cumulative score <= budget.

    A zero budget still removes zero-scored Gaussians. At least one Gaussian
    always survives.
    """
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    if len(buffer) != len(scene):
        raise ValueError("buffer and scene sizes differ")
    m = len(scene)
    removed = _removal_prefix_by_budget(buffer, budget)
    keep = np.setdiff1d(np.arange(m, dtype=np.int64), removed)
    pruned, _ = subset(scene, keep)
    report = PruneReport(
        policy="budget",
        parameter=budget,
        cycles=[
            CycleStats(
                removed_ids=[int(i) for i in removed],
                removed_score_sum=float(buffer.delta_se[removed].sum()),
                n_before=m,
                n_after=int(keep.size),
            )
        ],
    )
    return pruned, report


def iterative_prune(
    scene: GaussianScene,
    views: ViewSet,
    budget: float,
    cycles: int,
    consts: QuantConstants = QuantConstants(),
    background=(0.0, 0.0, 0.0),
    *,
    dtype=np.float32,
    sh_degree: int = 3,
    threads: int = 1,
) -> tuple[GaussianScene, PruneReport]:
    """Budget pruning spread over re-quantified cycles.

    The total budget is split evenly; each cycle re-runs quantification on
    the surviving scene before removing its share. Removed ids are reported
    in the original scene's id space, so cycle removals are disjoint and
    their union is the total removed set.
    """
    if cycles < 1:
        raise ValueError(f"cycles must be >= 1, got {cycles}")
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")

    report = PruneReport(policy="budget", parameter=budget)
    current = scene
    original_ids = np.arange(len(scene), dtype=np.int64)
    share = budget / cycles

    for _ in range(cycles):
        t0 = time.perf_counter()
        buf = quantify_scene(
            current, views, consts, background, dtype=dtype, sh_degree=sh_degree, threads=threads
        )
        dt = time.perf_counter() - t0
        removed_cur = _removal_prefix_by_budget(buf, share)
        keep_cur = np.setdiff1d(np.arange(len(current), dtype=np.int64), removed_cur)
        report.cycles.append(
            CycleStats(
                removed_ids=sorted(int(original_ids[i]) for i in removed_cur),
                removed_score_sum=float(buf.delta_se[removed_cur].sum()),
                n_before=len(current),
                n_after=int(keep_cur.size),
                quantify_seconds=dt,
            )
        )
        if removed_cur.size == 0:
            continue
        current, _ = subset(current, keep_cur)
        original_ids = original_ids[keep_cur]

    return current, report
