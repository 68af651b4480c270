"""Pareto screening and single-point selection on scaled objectives.

Points live in (scaled throughput, scaled speed) space with the ideal at
(1, 1). A point is Pareto-efficient iff no other point is >= in both
coordinates and different; exact duplicates of an efficient point are all
efficient. Selection minimises a weighted L^p distance to the ideal,

    d = ( (w * |dQ|)^p + ((1 - w) * |dV|)^p )^(1/p),

with p = inf meaning the max of the two weighted terms, restricted to the
Pareto set. Ties break towards higher scaled throughput, then higher scaled
speed, then lexicographic scenario id, so selection is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .objectives import ObjectiveValues

IDEAL = (1.0, 1.0)


@dataclass(frozen=True)
class Orientation:
    """A (weight, norm) pair expressing what the operator favours."""

    w: float
    p: float   # >= 1, math.inf allowed

    def __post_init__(self):
        if not (0.0 <= self.w <= 1.0):
            raise ConfigError(f"w must be in [0, 1], got {self.w}")
        if not (self.p >= 1.0):
            raise ConfigError(f"p must be >= 1, got {self.p}")

    @property
    def label(self) -> str:
        p = "inf" if math.isinf(self.p) else f"{self.p:g}"
        return f"w={self.w:g},p={p}"


@dataclass
class EvaluatedScenario:
    scenario_id: str
    objectives: ObjectiveValues
    pareto: bool = False
    flags: tuple[str, ...] = ()

    @property
    def point(self) -> tuple[float, float]:
        return (self.objectives.scaled_throughput, self.objectives.scaled_speed)


def pareto_front(points) -> np.ndarray:
    """Boolean mask of Pareto-efficient rows of an (n, 2) array (maximise both).

    Sort by first coordinate descending; within equal-first groups only the
    best second coordinate survives, and across groups a point must strictly
    beat every better-first point's second coordinate.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ConfigError(f"expected (n, 2) points, got {pts.shape}")
    n = len(pts)
    mask = np.zeros(n, dtype=bool)
    if n == 0:
        return mask
    order = np.lexsort((-pts[:, 1], -pts[:, 0]))
    best_tail = -np.inf   # best second coord among strictly greater first coords
    i = 0
    while i < n:
        j = i
        q = pts[order[i], 0]
        while j < n and pts[order[j], 0] == q:
            j += 1
        group = order[i:j]
        group_best = pts[group, 1].max()
        for g in group:
            mask[g] = pts[g, 1] == group_best and pts[g, 1] > best_tail
        best_tail = max(best_tail, group_best)
        i = j
    return mask


def generalized_distance(values, ideals, weights, p: float) -> float:
    """Weighted L^p distance between an objective vector and its ideals."""
    v = np.asarray(values, dtype=np.float64)
    ideal = np.asarray(ideals, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if not (v.shape == ideal.shape == w.shape):
        raise ConfigError("values, ideals and weights must align")
    terms = w * np.abs(ideal - v)
    if math.isinf(p):
        return float(terms.max())
    return float((terms ** p).sum() ** (1.0 / p))


def distance(point, orientation: Orientation, ideal=IDEAL) -> float:
    return generalized_distance(point, ideal, (orientation.w, 1.0 - orientation.w),
                                orientation.p)


def select_optimal(evaluated, orientation: Orientation) -> EvaluatedScenario:
    """Closest Pareto point to the ideal under the orientation's distance."""
    front = [e for e in evaluated if e.pareto]
    if not front:
        raise ConfigError("no Pareto-efficient scenario to select from")
    return min(front, key=lambda e: (distance(e.point, orientation),
                                     -e.point[0], -e.point[1], e.scenario_id))


def weight_sweep(evaluated, p: float, weights) -> dict[float, str]:
    """Selected scenario id per weight; exposes preference monotonicity."""
    return {float(w): select_optimal(evaluated, Orientation(float(w), p)).scenario_id
            for w in weights}


def flag_front(evaluated: list[EvaluatedScenario]) -> list[EvaluatedScenario]:
    """Set the ``pareto`` flags in place from the scenarios' points."""
    if not evaluated:
        return evaluated
    mask = pareto_front([e.point for e in evaluated])
    for e, m in zip(evaluated, mask):
        e.pareto = bool(m)
    return evaluated
