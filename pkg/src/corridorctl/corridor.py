"""Static corridor description: geometry, lanes, discretisation, unit bridges.

Unit conventions used throughout the package:

* space is discretised into cells of ``cell_length_m`` (default 10 m); cell 0
  is the upstream end and indices grow downstream,
* time advances in steps of ``step_s`` (default 1.8 s),
* vehicle speeds are integer cells/step; with the defaults one cell/step is
  exactly 20 km/h, so 80 km/h = 4 cells/step and 100 km/h = 5 cells/step,
* lane 0 is the slow lane, the highest index is the passing lane.

Every km/h speed limit must be an exact positive multiple of the cell unit;
anything else raises instead of silently rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NonIntegralSpeed, OutOfCorridor

CONFIG_VERSION = 1

_INT_TOL = 1e-9


@dataclass(frozen=True)
class SpeedUnit:
    """Bridge between integer cell speeds and km/h."""

    kmh_per_cell: float

    def to_kmh(self, cells: float) -> float:
        return cells * self.kmh_per_cell

    def to_cells(self, kmh: float) -> float:
        return kmh / self.kmh_per_cell


@dataclass(frozen=True)
class CorridorConfig:
    length_km: float = 8.0
    n_lanes: int = 2
    cell_length_m: float = 10.0
    step_s: float = 1.8
    base_limit_kmh: tuple[float, ...] = (80.0, 100.0)
    bottleneck_km: float = 7.1
    bottleneck_length_cells: int = 3
    bottleneck_limit_kmh: float = 20.0
    vsl_zone_km: tuple[float, float] | None = None
    segment_length_m: float = 500.0
    patch_duration_s: float = 60.0

    def __post_init__(self):
        if self.n_lanes < 1:
            raise ConfigError(f"n_lanes must be >= 1, got {self.n_lanes}")
        if self.length_km <= 0 or self.cell_length_m <= 0 or self.step_s <= 0:
            raise ConfigError("length, cell size and step must be positive")
        n_cells = self.length_km * 1000.0 / self.cell_length_m
        if abs(n_cells - round(n_cells)) > _INT_TOL:
            raise ConfigError(
                f"corridor length {self.length_km} km is not a whole number of "
                f"{self.cell_length_m} m cells"
            )
        n_seg = self.length_km * 1000.0 / self.segment_length_m
        if abs(n_seg - round(n_seg)) > _INT_TOL:
            raise ConfigError(
                f"corridor length {self.length_km} km is not a whole number of "
                f"{self.segment_length_m} m segments"
            )
        if len(self.base_limit_kmh) != self.n_lanes:
            raise ConfigError(
                f"need one base limit per lane: {len(self.base_limit_kmh)} != {self.n_lanes}"
            )
        for v in (*self.base_limit_kmh, self.bottleneck_limit_kmh):
            kmh_to_cells(v, self)  # raises NonIntegralSpeed / ConfigError
        if not (0.0 <= self.bottleneck_km <= self.length_km):
            raise ConfigError(f"bottleneck at {self.bottleneck_km} km outside corridor")
        if self.vsl_zone_km is None:
            object.__setattr__(self, "vsl_zone_km", (0.0, self.bottleneck_km))
        z0, z1 = self.vsl_zone_km
        if not (0.0 <= z0 <= z1 <= self.length_km):
            raise ConfigError(f"vsl zone {self.vsl_zone_km} outside corridor")

    # -- derived geometry ---------------------------------------------------

    @property
    def n_cells(self) -> int:
        return int(round(self.length_km * 1000.0 / self.cell_length_m))

    @property
    def n_segments(self) -> int:
        return int(round(self.length_km * 1000.0 / self.segment_length_m))

    @property
    def cells_per_segment(self) -> int:
        return int(round(self.segment_length_m / self.cell_length_m))

    @property
    def kmh_per_cell(self) -> float:
        # cell_length_m / step_s in m/s, times 3.6
        return self.cell_length_m / self.step_s * 3.6

    @property
    def speed_unit(self) -> SpeedUnit:
        return SpeedUnit(self.kmh_per_cell)

    @property
    def steps_per_minute(self) -> float:
        return 60.0 / self.step_s

    @property
    def bottleneck_cells(self) -> tuple[int, int]:
        """Half-open cell span [start, stop) of the bottleneck."""
        start = km_to_cell(self.bottleneck_km, self) if self.bottleneck_km < self.length_km \
            else self.n_cells
        stop = min(start + self.bottleneck_length_cells, self.n_cells)
        return start, stop

    @property
    def vsl_zone_cells(self) -> tuple[int, int]:
        z0, z1 = self.vsl_zone_km
        c0 = km_to_cell(z0, self) if z0 < self.length_km else self.n_cells
        c1 = km_to_cell(z1, self) if z1 < self.length_km else self.n_cells
        return c0, c1

    def minutes_to_steps(self, minutes: float) -> int:
        return int(round(minutes * 60.0 / self.step_s))

    # -- serialisation ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "length_km": self.length_km,
            "n_lanes": self.n_lanes,
            "cell_length_m": self.cell_length_m,
            "step_s": self.step_s,
            "base_limit_kmh": list(self.base_limit_kmh),
            "bottleneck_km": self.bottleneck_km,
            "bottleneck_length_cells": self.bottleneck_length_cells,
            "bottleneck_limit_kmh": self.bottleneck_limit_kmh,
            "vsl_zone_km": list(self.vsl_zone_km),
            "segment_length_m": self.segment_length_m,
            "patch_duration_s": self.patch_duration_s,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CorridorConfig":
        if doc.get("version") != CONFIG_VERSION:
            raise ConfigError(f"unsupported corridor config version {doc.get('version')!r}")
        return cls(
            length_km=doc["length_km"],
            n_lanes=doc["n_lanes"],
            cell_length_m=doc["cell_length_m"],
            step_s=doc["step_s"],
            base_limit_kmh=tuple(doc["base_limit_kmh"]),
            bottleneck_km=doc["bottleneck_km"],
            bottleneck_length_cells=doc["bottleneck_length_cells"],
            bottleneck_limit_kmh=doc["bottleneck_limit_kmh"],
            vsl_zone_km=tuple(doc["vsl_zone_km"]),
            segment_length_m=doc["segment_length_m"],
            patch_duration_s=doc["patch_duration_s"],
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CorridorConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def kmh_to_cells(kmh: float, cfg: CorridorConfig) -> int:
    """Exact conversion km/h -> cells/step; raises if not a whole multiple."""
    cells = kmh / cfg.kmh_per_cell
    if cells <= 0 or abs(cells - round(cells)) > _INT_TOL:
        raise NonIntegralSpeed(
            f"{kmh} km/h is not a positive whole multiple of "
            f"{cfg.kmh_per_cell:g} km/h per cell"
        )
    return int(round(cells))


def kmh_to_cells_nearest(kmh: float, cfg: CorridorConfig) -> int:
    """Nearest integer cells/step for a free-form speed, floored at 0.

    Half-even rounding, matching the vehicle-count convention.
    """
    return max(0, int(round(kmh / cfg.kmh_per_cell)))


def km_to_cell(km: float, cfg: CorridorConfig) -> int:
    """Cell index containing kilometre position ``km`` (upstream edge = 0)."""
    if not (0.0 <= km < cfg.length_km):
        raise OutOfCorridor(f"{km} km outside [0, {cfg.length_km}) km")
    return int(km * 1000.0 // cfg.cell_length_m)


def cell_to_km(cell: int, cfg: CorridorConfig) -> float:
    """Kilometre position of a cell's upstream edge."""
    if not (0 <= cell < cfg.n_cells):
        raise OutOfCorridor(f"cell {cell} outside [0, {cfg.n_cells})")
    return cell * cfg.cell_length_m / 1000.0


def base_limit_grid(cfg: CorridorConfig) -> np.ndarray:
    """Per-(lane, cell) speed limits in cells/step with the bottleneck applied.

    The bottleneck is a fixed span of cells whose reduced limit overrides
    (by minimum) whatever else is in force there.
    """
    grid = np.empty((cfg.n_lanes, cfg.n_cells), dtype=np.int64)
    for lane, limit in enumerate(cfg.base_limit_kmh):
        grid[lane, :] = kmh_to_cells(limit, cfg)
    b0, b1 = cfg.bottleneck_cells
    if b1 > b0:
        grid[:, b0:b1] = np.minimum(grid[:, b0:b1], kmh_to_cells(cfg.bottleneck_limit_kmh, cfg))
    return grid


DEFAULT_CORRIDOR = CorridorConfig()
