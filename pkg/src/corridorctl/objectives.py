"""Flow and space-mean speed from space-time vehicle accounting.

Throughput over a region is total distance travelled divided by the region's
cell-step area; mean speed is total distance over total time. Both come from
the same tallies, so they stay consistent and additive: tallies over a
partition of a region sum exactly to the whole-region tally. To make that
additivity exact in floating point, time is accumulated in integer ticks
(a common multiple of all observed speeds divides each per-cell transit time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corridor import CorridorConfig
from .errors import ConfigError, EmptyRegion, NoOccupancy


@dataclass
class EdieTally:
    """Distance/time totals over a region (cell span x step span x lanes)."""

    cell_span: tuple[float, float]
    step_span: tuple[float, float]
    lanes: tuple[int, ...]
    total_distance_cells: float = 0.0
    time_ticks: int = 0
    ticks_per_step: int = 1

    @property
    def total_time_steps(self) -> float:
        return self.time_ticks / self.ticks_per_step

    @property
    def area(self) -> float:
        return ((self.cell_span[1] - self.cell_span[0])
                * (self.step_span[1] - self.step_span[0]))

    def add(self, other: "EdieTally") -> "EdieTally":
        """Combine tallies over disjoint sub-regions; totals add exactly."""
        tps = math.lcm(self.ticks_per_step, other.ticks_per_step)
        c0 = min(self.cell_span[0], other.cell_span[0])
        c1 = max(self.cell_span[1], other.cell_span[1])
        t0 = min(self.step_span[0], other.step_span[0])
        t1 = max(self.step_span[1], other.step_span[1])
        return EdieTally(
            cell_span=(c0, c1),
            step_span=(t0, t1),
            lanes=tuple(sorted(set(self.lanes) | set(other.lanes))),
            total_distance_cells=self.total_distance_cells + other.total_distance_cells,
            time_ticks=self.time_ticks * (tps // self.ticks_per_step)
            + other.time_ticks * (tps // other.ticks_per_step),
            ticks_per_step=tps,
        )


def tally_from_log(
    log,
    cell_span: tuple[int, int],
    step_span: tuple[int, int],
    lanes: tuple[int, ...] | None = None,
    ring_length: int | None = None,
) -> EdieTally:
    """Tally a trajectory log over a region with whole-cell/whole-step bounds.

    Uniform motion within a step makes the space overlap exact; a vehicle at
    speed v spends 1/v step per cell, so time accrues in integer ticks.
    """
    c0, c1 = cell_span
    t0, t1 = step_span
    if c1 <= c0 or t1 <= t0:
        raise EmptyRegion(f"region {cell_span} x {step_span} has no area")
    steps = np.asarray(log.steps)
    cells = np.asarray(log.cells, dtype=np.int64)
    speeds = np.asarray(log.speeds, dtype=np.int64)
    lane_arr = np.asarray(log.lanes)
    keep = (steps >= t0) & (steps < t1)
    if lanes is not None:
        keep &= np.isin(lane_arr, lanes)
    cells, speeds = cells[keep], speeds[keep]
    if lanes is None:
        lanes = tuple(sorted(set(int(l) for l in np.unique(lane_arr)))) if lane_arr.size else ()

    vmax = int(speeds.max()) if speeds.size else 1
    tps = math.lcm(*range(1, max(vmax, 1) + 1))

    segs = [(cells, cells + speeds, speeds)]
    if ring_length is not None:
        # split wrapped paths at the seam
        xa, xb, v = segs[0]
        over = xb > ring_length
        segs = [(xa, np.minimum(xb, ring_length), v)]
        if over.any():
            segs.append((np.zeros(over.sum(), dtype=np.int64), xb[over] - ring_length, v[over]))

    dist = 0.0
    ticks = 0
    for xa, xb, v in segs:
        lo = np.maximum(xa, c0)
        hi = np.minimum(xb, c1)
        overlap = np.maximum(hi - lo, 0)
        moving = v > 0
        dist += float(overlap[moving].sum())
        # ticks: overlap cells * (tps / v) each
        if moving.any():
            ticks += int((overlap[moving] * (tps // v[moving])).sum())
        stopped = (~moving) & (xa >= c0) & (xa < c1)
        ticks += int(stopped.sum()) * tps
    return EdieTally(
        cell_span=(float(c0), float(c1)),
        step_span=(float(t0), float(t1)),
        lanes=tuple(lanes),
        total_distance_cells=dist,
        time_ticks=ticks,
        ticks_per_step=tps,
    )


def edie_throughput(tally: EdieTally, cfg: CorridorConfig) -> float:
    """Flow in veh/min over the tally's region, lanes summed."""
    if tally.area <= 0:
        raise EmptyRegion(f"region {tally.cell_span} x {tally.step_span} has no area")
    per_step = tally.total_distance_cells / tally.area
    return per_step * 60.0 / cfg.step_s


def edie_mean_speed(tally: EdieTally, cfg: CorridorConfig) -> float:
    """Space-mean speed in km/h over the tally's region."""
    if tally.time_ticks <= 0:
        raise NoOccupancy("no vehicle time in region; mean speed undefined")
    return tally.total_distance_cells / tally.total_time_steps * cfg.kmh_per_cell


@dataclass(frozen=True)
class ObjectiveValues:
    throughput_veh_min: float
    mean_speed_kmh: float
    scaled_throughput: float
    scaled_speed: float

    @classmethod
    def from_raw(cls, throughput: float, mean_speed: float,
                 standards: tuple[float, float]) -> "ObjectiveValues":
        sq, sv = scale((throughput, mean_speed), standards)
        return cls(throughput, mean_speed, sq, sv)


def scale(values: tuple[float, float], standards: tuple[float, float]) -> tuple[float, float]:
    """Divide (throughput, speed) by positive reference standards.

    Unity means 'meets the standard'; no clamping, values may exceed 1.
    """
    q_std, v_std = standards
    if q_std <= 0 or v_std <= 0:
        raise ConfigError(f"standards must be positive, got {standards}")
    return values[0] / q_std, values[1] / v_std
