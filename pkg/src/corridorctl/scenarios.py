"""Candidate control scenarios: variable speed limits and inflow shaping.

Four VSL profiles cover the corridor's control zone: no control (80/100),
passing-lane reduction (80/80), all-lanes reduction (60/80) and the stronger
all-lanes variant that also closes the lane gap (60/60). Inflow control bends
a predicted demand baseline with a ramp and a curvature term,
``Q(t) = max(0, baseline(t) + a*t + b*t**2)`` in veh/min with t in minutes,
over a fixed 13 x 7 grid of (a, b) down to (-0.3, -0.03). The combined
catalog crosses every VSL profile with every inflow pattern and keeps the
four uncontrolled-inflow profiles as anchors: 4 x 91 + 4 = 368 entries.

The demand baseline averages a short-term linear extrapolation of the last
30 minutes with a long-term seasonal forecast fitted on at least 14 days of
per-minute history; without usable history the short-term branch stands alone
and the prediction is flagged.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .corridor import CorridorConfig, base_limit_grid, kmh_to_cells
from .errors import ConfigError, InsufficientHistory

A_STEP = -0.025   # veh/min per minute
A_COUNT = 13
B_STEP = -0.005   # veh/min per minute^2
B_COUNT = 7

SHORT_TERM_MINUTES = 30
LONG_TERM_MIN_MINUTES = 14 * 24 * 60


@dataclass(frozen=True)
class VslProfile:
    id: str
    limits_kmh: tuple[float, ...]   # per lane, slow -> passing


@dataclass(frozen=True)
class InflowScenario:
    a: float
    b: float
    series_veh_min: tuple[float, ...]   # controlled demand, minute t from now


@dataclass(frozen=True)
class ControlScenario:
    id: str
    vsl: VslProfile
    inflow: InflowScenario | None       # None = uncontrolled baseline demand

    def to_json(self) -> dict:
        doc = {"id": self.id, "vsl_id": self.vsl.id,
               "limits_kmh": list(self.vsl.limits_kmh)}
        if self.inflow is not None:
            doc["a"] = self.inflow.a
            doc["b"] = self.inflow.b
            doc["inflow_veh_min"] = [round(q, 6) for q in self.inflow.series_veh_min]
        return doc


def vsl_catalog(cfg: CorridorConfig) -> list[VslProfile]:
    if cfg.n_lanes != 2:
        raise ConfigError("the VSL catalog is defined for two-lane corridors")
    profiles = [
        VslProfile("NoControl", tuple(cfg.base_limit_kmh)),
        VslProfile("PlVsl", (cfg.base_limit_kmh[0], cfg.base_limit_kmh[0])),
        VslProfile("AlsVsl", (cfg.base_limit_kmh[0] - 20.0, cfg.base_limit_kmh[1] - 20.0)),
        VslProfile("AlsVsl2", (cfg.base_limit_kmh[0] - 20.0, cfg.base_limit_kmh[0] - 20.0)),
    ]
    for p in profiles:
        for v in p.limits_kmh:
            kmh_to_cells(v, cfg)    # raises NonIntegralSpeed when malformed
    return profiles


def limit_grid(cfg: CorridorConfig, profile: VslProfile) -> np.ndarray:
    """Per-(lane, cell) limits with a profile active in the control zone.

    The bottleneck's reduced limit survives any overlap by minimum.
    """
    grid = base_limit_grid(cfg)
    z0, z1 = cfg.vsl_zone_cells
    for lane, limit in enumerate(profile.limits_kmh):
        grid[lane, z0:z1] = kmh_to_cells(limit, cfg)
    b0, b1 = cfg.bottleneck_cells
    if b1 > b0:
        grid[:, b0:b1] = np.minimum(grid[:, b0:b1],
                                    kmh_to_cells(cfg.bottleneck_limit_kmh, cfg))
    return grid


@dataclass(frozen=True)
class InflowPrediction:
    baseline_veh_min: tuple[float, ...]
    used_long_term: bool
    flags: tuple[str, ...] = ()


def predict_inflow(recent_veh_min, horizon_min: int,
                   long_history_veh_min=None) -> InflowPrediction:
    """Demand baseline for the next ``horizon_min`` minutes.

    ``recent_veh_min`` must cover at least the last 30 minutes (ending now).
    The long-term branch fits a (1,1,1) seasonal-free ARIMA on per-minute
    history spanning >= 14 days; when absent or failing, the short-term
    extrapolation stands alone and the result is flagged.
    """
    recent = np.asarray(recent_veh_min, dtype=np.float64)
    if recent.size < SHORT_TERM_MINUTES:
        raise InsufficientHistory(
            f"need {SHORT_TERM_MINUTES} recent minutes, got {recent.size}")
    tail = recent[-SHORT_TERM_MINUTES:]
    x = np.arange(-SHORT_TERM_MINUTES + 1, 1, dtype=np.float64)
    slope, intercept = np.polyfit(x, tail, 1)
    t = np.arange(horizon_min, dtype=np.float64)
    short = intercept + slope * t

    flags: list[str] = []
    long_fc = None
    if long_history_veh_min is None:
        flags.append("short_term_only:no_long_history")
    else:
        history = np.asarray(long_history_veh_min, dtype=np.float64)
        if history.size < LONG_TERM_MIN_MINUTES:
            flags.append("short_term_only:long_history_below_14_days")
        else:
            long_fc = _arima_forecast(history, horizon_min)
            if long_fc is None:
                flags.append("short_term_only:long_term_fit_failed")

    if long_fc is None:
        baseline = short
    else:
        baseline = (short + long_fc) / 2.0
    baseline = np.maximum(baseline, 0.0)
    return InflowPrediction(tuple(float(q) for q in baseline),
                            used_long_term=long_fc is not None,
                            flags=tuple(flags))


def _arima_forecast(history: np.ndarray, horizon: int) -> np.ndarray | None:
    from statsmodels.tsa.arima.model import ARIMA
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = ARIMA(history, order=(1, 1, 1)).fit()
            fc = np.asarray(fit.forecast(steps=horizon), dtype=np.float64)
        if not np.isfinite(fc).all():
            return None
        return fc
    except Exception:
        return None


def inflow_grid(baseline_veh_min) -> list[InflowScenario]:
    """All 91 shaped-demand patterns over the fixed (a, b) grid."""
    baseline = np.asarray(baseline_veh_min, dtype=np.float64)
    t = np.arange(baseline.size, dtype=np.float64)
    out = []
    for j in range(A_COUNT):
        a = float(np.round(A_STEP * j, 3))
        for k in range(B_COUNT):
            b = float(np.round(B_STEP * k, 3))
            series = np.maximum(baseline + a * t + b * t * t, 0.0)
            out.append(InflowScenario(a, b, tuple(float(q) for q in series)))
    return out


def build_catalog(cfg: CorridorConfig, vsl_only: bool,
                  baseline_veh_min=None) -> list[ControlScenario]:
    """Assemble the candidate set.

    ``vsl_only`` keeps the four VSL profiles with uncontrolled demand; the
    combined mode crosses them with the 91 inflow patterns and keeps the four
    uncontrolled anchors for reference.
    """
    profiles = vsl_catalog(cfg)
    anchors = [ControlScenario(p.id, p, None) for p in profiles]
    if vsl_only:
        return anchors
    if baseline_veh_min is None:
        raise ConfigError("combined catalog needs a demand baseline")
    scenarios = list(anchors)
    for p in profiles:
        for inflow in inflow_grid(baseline_veh_min):
            sid = f"{p.id}[a={inflow.a:.3f},b={inflow.b:.3f}]"
            scenarios.append(ControlScenario(sid, p, inflow))
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ConfigError("scenario ids are not unique")
    return scenarios
