"""Speed-density calibration from roadside counter records.

Counters report per-minute flow and space-mean speed; density follows as
flow * 60 / speed. Calibration bins samples along the density axis (10 veh/km
wide), takes the median speed per bin as a knot at the bin centre, repairs the
knot sequence to be monotone with a weighted isotonic fit, and interpolates
piecewise-linearly in between. Outside the knot span the curve clamps.

Counters never observe a standing jam (zero flow drops the sample), so the
congested tail can optionally be anchored at a known jam density; without it
every speed below the slowest knot would invert to the same density.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.isotonic import IsotonicRegression

from .errors import DegenerateBin, InsufficientData, RangeError, SchemaError

DEFAULT_BIN_WIDTH = 10.0   # veh/km
DEFAULT_MIN_BIN_COUNT = 5
JAM_SPEED_KMH = 3.0        # nominal crawl speed at the jam anchor

_STRICT_EPS = 1e-9

COUNTER_COLUMNS = ["minute_iso8601", "station_km", "flow_veh_per_min", "speed_kmh"]


@dataclass(frozen=True)
class CounterSample:
    minute: datetime
    station_km: float
    flow_veh_min: float
    speed_kmh: float

    @property
    def density_veh_km(self) -> float:
        if not (self.speed_kmh > 0):
            raise RangeError(f"density needs speed > 0, got {self.speed_kmh}")
        return self.flow_veh_min * 60.0 / self.speed_kmh


def read_counter_csv(path) -> list[CounterSample]:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(df.columns) != COUNTER_COLUMNS:
        raise SchemaError(f"{path}: expected columns {COUNTER_COLUMNS}, got {list(df.columns)}")
    out = []
    for row in df.itertuples(index=False):
        speed = float(row.speed_kmh) if row.speed_kmh != "" else float("nan")
        out.append(CounterSample(
            minute=datetime.fromisoformat(row.minute_iso8601),
            station_km=float(row.station_km),
            flow_veh_min=float(row.flow_veh_per_min),
            speed_kmh=speed,
        ))
    return out


def write_counter_csv(samples: list[CounterSample], path) -> None:
    pd.DataFrame({
        "minute_iso8601": [s.minute.isoformat() for s in samples],
        "station_km": [f"{s.station_km:g}" for s in samples],
        "flow_veh_per_min": [f"{s.flow_veh_min:.3f}" for s in samples],
        "speed_kmh": ["" if not np.isfinite(s.speed_kmh) else f"{s.speed_kmh:.2f}"
                      for s in samples],
    }).to_csv(path, index=False)


@dataclass(frozen=True)
class FundamentalDiagram:
    """Fitted speed-density curve: knots at bin centres, strictly decreasing."""

    knot_density: tuple[float, ...]
    knot_speed: tuple[float, ...]
    bin_width: float
    v_free_kmh: float
    q_max_veh_min: float

    def __post_init__(self):
        k = np.asarray(self.knot_density)
        v = np.asarray(self.knot_speed)
        if len(k) != len(v) or len(k) < 2:
            raise InsufficientData(f"need >= 2 knots, got {len(k)}")
        if not (np.diff(k) > 0).all():
            raise InsufficientData("knot densities must be strictly increasing")
        if not (np.diff(v) < 0).all():
            raise InsufficientData("knot speeds must be strictly decreasing")

    def speed_at_density(self, density):
        return np.interp(density, self.knot_density, self.knot_speed)

    def to_json(self) -> dict:
        return {
            "knot_density": list(self.knot_density),
            "knot_speed": list(self.knot_speed),
            "bin_width": self.bin_width,
            "v_free_kmh": self.v_free_kmh,
            "q_max_veh_min": self.q_max_veh_min,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FundamentalDiagram":
        return cls(
            knot_density=tuple(doc["knot_density"]),
            knot_speed=tuple(doc["knot_speed"]),
            bin_width=doc["bin_width"],
            v_free_kmh=doc["v_free_kmh"],
            q_max_veh_min=doc["q_max_veh_min"],
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FundamentalDiagram":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _usable_pairs(samples) -> tuple[np.ndarray, np.ndarray]:
    dens, spd = [], []
    for s in samples:
        if np.isfinite(s.speed_kmh) and s.speed_kmh > 0 and s.flow_veh_min > 0:
            dens.append(s.density_veh_km)
            spd.append(s.speed_kmh)
    return np.asarray(dens), np.asarray(spd)


def fit_fd(samples, bin_width: float = DEFAULT_BIN_WIDTH,
           min_bin_count: int = DEFAULT_MIN_BIN_COUNT,
           jam_density_veh_km: float | None = None) -> FundamentalDiagram:
    """Calibrate a diagram from counter samples (or any (density, speed) source).

    Bins thinner than ``min_bin_count`` are pooled into the nearest remaining
    bin for median stability; pooling stops rather than collapse the curve
    below two knots. ``jam_density_veh_km`` appends a terminal knot at that
    density and a nominal crawl speed, so the congested branch stays
    invertible below the slowest observed bin.
    """
    dens, spd = _usable_pairs(samples)
    if dens.size == 0:
        raise InsufficientData("no usable samples (need flow > 0 and speed > 0)")
    if np.unique(dens).size == 1:
        raise DegenerateBin(f"all samples at density {dens[0]:.3f} veh/km")
    idx = np.floor(dens / bin_width).astype(np.int64)
    bins: dict[int, list[int]] = {}
    for row, b in enumerate(idx):
        bins.setdefault(int(b), []).append(row)
    if len(bins) < 2:
        raise InsufficientData(f"samples span only {len(bins)} density bin")

    # pool thin bins into their nearest neighbour, thinnest first
    while len(bins) > 2:
        thin = sorted((len(rows), b) for b, rows in bins.items())
        count, b = thin[0]
        if count >= min_bin_count:
            break
        others = [o for o in bins if o != b]
        nearest = min(others, key=lambda o: (abs(o - b), o))
        bins[nearest].extend(bins.pop(b))

    centres = np.array(sorted(bins), dtype=np.float64)
    knots_k = (centres + 0.5) * bin_width
    knots_v = np.array([np.median(spd[bins[int(c)]]) for c in centres])
    weights = np.array([len(bins[int(c)]) for c in centres], dtype=np.float64)

    # monotone repair: weighted isotonic (decreasing), then break flats so the
    # curve stays strictly invertible
    knots_v = IsotonicRegression(increasing=False).fit(
        knots_k, knots_v, sample_weight=weights
    ).predict(knots_k)
    eps = max(1.0, float(knots_v[0])) * _STRICT_EPS
    for i in range(1, len(knots_v)):
        knots_v[i] = min(knots_v[i], knots_v[i - 1] - eps)

    if jam_density_veh_km is not None and jam_density_veh_km > knots_k[-1]:
        knots_k = np.append(knots_k, jam_density_veh_km)
        knots_v = np.append(knots_v, min(JAM_SPEED_KMH, knots_v[-1] - eps))

    v_free = float(knots_v[0])
    return FundamentalDiagram(
        knot_density=tuple(float(k) for k in knots_k),
        knot_speed=tuple(float(v) for v in knots_v),
        bin_width=bin_width,
        v_free_kmh=v_free,
        q_max_veh_min=_q_max(knots_k, knots_v),
    )


def _q_max(knots_k: np.ndarray, knots_v: np.ndarray) -> float:
    """Max of density*speed/60 over the piecewise-linear curve, per segment.

    On each segment speed is linear in density, so flow is quadratic; the
    maximum sits at a knot or at the interior vertex.
    """
    best = 0.0
    for k0, k1, v0, v1 in zip(knots_k[:-1], knots_k[1:], knots_v[:-1], knots_v[1:]):
        slope = (v1 - v0) / (k1 - k0)
        intercept = v0 - slope * k0
        candidates = [k0, k1]
        if slope < 0:
            vertex = -intercept / (2.0 * slope)
            if k0 < vertex < k1:
                candidates.append(vertex)
        for k in candidates:
            best = max(best, k * (intercept + slope * k) / 60.0)
    return float(best)


def density_from_speed(fd: FundamentalDiagram, speed_kmh) -> np.ndarray | float:
    """Invert the curve; clamps to the knot span outside it."""
    speed = np.asarray(speed_kmh, dtype=np.float64)
    if (speed <= 0).any():
        raise RangeError("density_from_speed needs speed > 0")
    v_desc = np.asarray(fd.knot_speed)
    k_asc = np.asarray(fd.knot_density)
    out = np.interp(speed, v_desc[::-1], k_asc[::-1])
    return float(out) if np.isscalar(speed_kmh) else out


def flow_from_speed(fd: FundamentalDiagram, speed_kmh) -> np.ndarray | float:
    """Flow in veh/min implied by a speed through the calibrated curve."""
    k = density_from_speed(fd, speed_kmh)
    out = np.asarray(k) * np.asarray(speed_kmh, dtype=np.float64) / 60.0
    return float(out) if np.isscalar(speed_kmh) else out


class FundamentalDiagramModel(BaseEstimator):
    """Estimator-style wrapper so calibration composes with sklearn tooling.

    ``fit`` accepts counter samples; the fitted curve lands in ``diagram_``.
    """

    def __init__(self, bin_width: float = DEFAULT_BIN_WIDTH,
                 min_bin_count: int = DEFAULT_MIN_BIN_COUNT):
        self.bin_width = bin_width
        self.min_bin_count = min_bin_count

    def fit(self, samples, y=None):
        self.diagram_ = fit_fd(samples, self.bin_width, self.min_bin_count)
        return self

    def predict_density(self, speed_kmh):
        self._check_fitted()
        return density_from_speed(self.diagram_, speed_kmh)

    def predict_flow(self, speed_kmh):
        self._check_fitted()
        return flow_from_speed(self.diagram_, speed_kmh)

    def _check_fitted(self):
        if not hasattr(self, "diagram_"):
            raise InsufficientData("model is not fitted; call fit() first")
