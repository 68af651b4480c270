"""Behaviour-parameter estimation by particle filtering on speed fields.

Each particle is a candidate parameter set. Per five-minute window every
particle replays the window from one shared initial state reconstructed from
the latest observed speeds, all with the same window seed, so simulated
fields differ only through the parameters. Weights multiply a Gaussian
likelihood of the observed-vs-simulated speed residuals (mean-squared form),
and systematic resampling with a small parameter jitter kicks in when the
effective sample size drops below half the ensemble.

The point estimate is the maximum-weight particle; ties go to the lowest
index so the estimate is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import _rng
from .corridor import CorridorConfig, base_limit_grid, kmh_to_cells_nearest
from .errors import BadRange, CollapseError, NoOverlap, OverCapacity
from .fundamental import FundamentalDiagram, density_from_speed
from .simulate import BehaviorParams, MicroState, SimRun, run
from .speed_field import MeanSpeedField

DEFAULT_PRIOR_RANGES: dict[str, tuple[float, float]] = {
    "p_keep": (0.5, 1.0),
    "q_anticipate": (0.0, 1.0),
    "r_slow": (0.0, 0.5),
}
DEFAULT_SIGMA_KMH = 10.0
DEFAULT_N_PARTICLES = 256
DEFAULT_WINDOW_MIN = 5
RESAMPLE_FRACTION = 0.5
JITTER_FRACTION = 0.02


@dataclass
class Particle:
    params: BehaviorParams
    weight: float
    last_sim_field: MeanSpeedField | None = None


def sample_prior(n: int, ranges: dict[str, tuple[float, float]] | None,
                 rng: np.random.Generator) -> list[Particle]:
    """Uniform ensemble over the prior box; weights start equal."""
    if n < 2:
        raise BadRange(f"need at least 2 particles, got {n}")
    ranges = dict(DEFAULT_PRIOR_RANGES if ranges is None else ranges)
    for name, (lo, hi) in ranges.items():
        if not (lo <= hi):
            raise BadRange(f"inverted range for {name}: ({lo}, {hi})")
    particles = []
    for _ in range(n):
        draw = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in ranges.items()}
        particles.append(Particle(BehaviorParams(**draw), 1.0 / n))
    return particles


def likelihood(observed: MeanSpeedField, simulated: MeanSpeedField,
               sigma_kmh: float = DEFAULT_SIGMA_KMH) -> float:
    """exp(-mean squared residual / (2 sigma^2)) over jointly observed patches."""
    if sigma_kmh <= 0:
        raise BadRange(f"sigma must be positive, got {sigma_kmh}")
    if observed.values.shape != simulated.values.shape:
        raise NoOverlap(
            f"field shapes differ: {observed.values.shape} vs {simulated.values.shape}")
    both = np.isfinite(observed.values) & np.isfinite(simulated.values)
    n = int(both.sum())
    if n == 0:
        raise NoOverlap("no patch observed in both fields")
    resid = observed.values[both] - simulated.values[both]
    return float(np.exp(-float((resid ** 2).sum()) / (2.0 * sigma_kmh ** 2 * n)))


def filter_step(particles: list[Particle], observed_window: MeanSpeedField,
                shared_initial: MicroState, demand_veh_min: np.ndarray,
                cfg: CorridorConfig, limits: np.ndarray, window_seed: int,
                rng: np.random.Generator,
                sigma_kmh: float = DEFAULT_SIGMA_KMH,
                ranges: dict[str, tuple[float, float]] | None = None,
                resample_fraction: float = RESAMPLE_FRACTION,
                jitter_fraction: float = JITTER_FRACTION) -> tuple[list[Particle], dict]:
    """One update: simulate the window per particle, reweight, maybe resample.

    Returns the new ensemble and diagnostics (ess, resampled, likelihoods).
    """
    ranges = dict(DEFAULT_PRIOR_RANGES if ranges is None else ranges)
    horizon = cfg.minutes_to_steps(observed_window.n_minutes)
    likes = np.empty(len(particles))
    for i, part in enumerate(particles):
        out = run(SimRun(
            cfg=cfg, params=part.params, limits=limits, horizon_steps=horizon,
            demand_veh_min=demand_veh_min, initial=shared_initial,
            seed=window_seed, record_log=False,
        ))
        part.last_sim_field = out.field
        likes[i] = likelihood(observed_window, out.field, sigma_kmh)
    weights = np.array([p.weight for p in particles]) * likes
    total = weights.sum()
    if total <= 0.0 or not np.isfinite(total):
        raise CollapseError("all particle likelihoods underflowed")
    weights /= total
    ess = 1.0 / float((weights ** 2).sum())
    resampled = ess < resample_fraction * len(particles)
    if resampled:
        particles = _systematic_resample(particles, weights, ranges, rng,
                                         jitter_fraction)
    else:
        for p, w in zip(particles, weights):
            p.weight = float(w)
    diag = {"ess": ess, "resampled": resampled,
            "max_likelihood": float(likes.max()), "min_likelihood": float(likes.min())}
    return particles, diag


def _systematic_resample(particles, weights, ranges, rng, jitter_fraction):
    n = len(particles)
    positions = (rng.uniform() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    picks = np.searchsorted(cumulative, positions)
    fresh = []
    for k in picks:
        src = particles[int(k)].params
        kw = src.to_json()
        for name, (lo, hi) in ranges.items():
            width = hi - lo
            jitter = rng.normal(0.0, jitter_fraction * width) if width > 0 else 0.0
            kw[name] = float(np.clip(kw[name] + jitter, lo, hi))
        fresh.append(Particle(BehaviorParams(**kw), 1.0 / n,
                              particles[int(k)].last_sim_field))
    return fresh


def estimate_map(particles: list[Particle]) -> BehaviorParams:
    """Params of the maximum-weight particle; ties go to the lowest index."""
    if not particles:
        raise BadRange("empty ensemble")
    weights = np.array([p.weight for p in particles])
    return particles[int(np.argmax(weights))].params


def posterior_histograms(particles: list[Particle],
                         ranges: dict[str, tuple[float, float]] | None = None,
                         bins: int = 20) -> dict:
    ranges = dict(DEFAULT_PRIOR_RANGES if ranges is None else ranges)
    weights = np.array([p.weight for p in particles])
    out = {}
    for name, (lo, hi) in ranges.items():
        vals = np.array([getattr(p.params, name) for p in particles])
        hist, edges = np.histogram(vals, bins=bins, range=(lo, hi), weights=weights)
        out[name] = {"edges": [float(e) for e in edges],
                     "mass": [float(h) for h in hist]}
    return out


def reconstruct_microstate(segment_speeds_kmh, fd: FundamentalDiagram,
                           cfg: CorridorConfig,
                           usage_split: tuple[float, ...] | None = None,
                           limits: np.ndarray | None = None) -> MicroState:
    """Place vehicles consistent with per-segment mean speeds.

    Speed maps to a per-lane density through the calibrated diagram; counts
    round half-even per segment, split across lanes (even by default, exact
    total preserved by largest remainder), placed equidistantly, speeds set to
    the nearest whole cells/step clamped by the local limit. A cell collision
    shifts the vehicle upstream to the next free cell.
    """
    speeds = np.asarray(segment_speeds_kmh, dtype=np.float64)
    if speeds.size != cfg.n_segments:
        raise BadRange(f"need {cfg.n_segments} segment speeds, got {speeds.size}")
    if not np.isfinite(speeds).any():
        raise BadRange("no usable segment speed to reconstruct from")
    # missing segments inherit the nearest observed one (ties upstream)
    filled = speeds.copy()
    known = np.flatnonzero(np.isfinite(speeds))
    for s in np.flatnonzero(~np.isfinite(speeds)):
        filled[s] = speeds[known[np.argmin(np.abs(known - s))]]

    if usage_split is None:
        usage_split = tuple(1.0 / cfg.n_lanes for _ in range(cfg.n_lanes))
    if len(usage_split) != cfg.n_lanes or abs(sum(usage_split) - 1.0) > 1e-9:
        raise BadRange(f"usage split must have {cfg.n_lanes} shares summing to 1")
    if limits is None:
        limits = base_limit_grid(cfg)

    seg_cells = cfg.cells_per_segment
    seg_km = cfg.segment_length_m / 1000.0
    occupied = np.zeros((cfg.n_lanes, cfg.n_cells), dtype=bool)
    vehicles = []
    vid = 0
    for s in range(cfg.n_segments):
        v_kmh = float(filled[s])
        k = density_from_speed(fd, max(v_kmh, 1e-6))
        total = round(k * seg_km * cfg.n_lanes)   # half-even
        if total == 0:
            continue
        shares = [total * f for f in usage_split]
        counts = [int(x) for x in shares]
        leftover = total - sum(counts)
        by_remainder = sorted(range(cfg.n_lanes),
                              key=lambda l: (-(shares[l] - counts[l]), l))
        for l in by_remainder[:leftover]:
            counts[l] += 1
        base = s * seg_cells
        for lane, count in enumerate(counts):
            if count == 0:
                continue
            if count > seg_cells:
                raise OverCapacity(
                    f"segment {s} lane {lane} needs {count} vehicles in {seg_cells} cells")
            spacing = seg_cells / count
            for i in range(count):
                cell = base + int((i + 0.5) * spacing)
                while cell >= 0 and occupied[lane, min(cell, cfg.n_cells - 1)]:
                    cell -= 1   # shift upstream to the next free cell
                if cell < 0:
                    raise OverCapacity(
                        f"no free cell upstream of segment {s} lane {lane}")
                occupied[lane, cell] = True
                v_cells = min(kmh_to_cells_nearest(v_kmh, cfg), int(limits[lane, cell]))
                vehicles.append((vid, lane, cell, v_cells))
                vid += 1
    return MicroState.from_vehicles(vehicles, time=0)


@dataclass
class AssimilationResult:
    map_params: BehaviorParams
    initial_state: MicroState
    posterior: dict
    ess_series: tuple[float, ...]
    mpe_series: tuple[float, ...]
    flags: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "map_params": self.map_params.to_json(),
            "n_vehicles_reconstructed": self.initial_state.n_vehicles,
            "posterior": self.posterior,
            "ess_series": [round(e, 3) for e in self.ess_series],
            "mpe_series": [round(m, 3) for m in self.mpe_series],
            "flags": list(self.flags),
        }


class ParticleFilterAssimilator(BaseEstimator):
    """Estimator-style front end: ``fit`` consumes an observed field plus the
    matching demand series and exposes ``map_params_`` and ``result_``."""

    def __init__(self, n_particles: int = DEFAULT_N_PARTICLES,
                 sigma_kmh: float = DEFAULT_SIGMA_KMH,
                 window_min: int = DEFAULT_WINDOW_MIN,
                 prior_ranges: dict | None = None,
                 resample_fraction: float = RESAMPLE_FRACTION,
                 jitter_fraction: float = JITTER_FRACTION,
                 seed: int = 0):
        self.n_particles = n_particles
        self.sigma_kmh = sigma_kmh
        self.window_min = window_min
        self.prior_ranges = prior_ranges
        self.resample_fraction = resample_fraction
        self.jitter_fraction = jitter_fraction
        self.seed = seed

    def fit(self, observed: MeanSpeedField, demand_veh_min, cfg: CorridorConfig,
            fd: FundamentalDiagram, limits: np.ndarray | None = None):
        if observed.n_minutes < self.window_min:
            raise BadRange(
                f"observed field spans {observed.n_minutes} min < one "
                f"{self.window_min}-min window")
        demand = np.asarray(demand_veh_min, dtype=np.float64)
        if limits is None:
            limits = base_limit_grid(cfg)
        rng = np.random.default_rng(self.seed)
        particles = sample_prior(self.n_particles, self.prior_ranges, rng)
        ess_series: list[float] = []
        mpe_series: list[float] = []
        flags: list[str] = []
        n_windows = observed.n_minutes // self.window_min
        for widx in range(n_windows):
            m0 = widx * self.window_min
            m1 = m0 + self.window_min
            window = observed.window(m0, m1)
            anchor = observed.values[max(m0 - 1, 0)]
            state = reconstruct_microstate(anchor, fd, cfg, limits=limits)
            window_demand = np.full(self.window_min,
                                    float(demand[-1]) if demand.size else 0.0)
            avail = demand[m0:m1]
            window_demand[:avail.size] = avail
            seed = _rng.derive_seed(self.seed, "window", widx)
            try:
                particles, diag = filter_step(
                    particles, window, state, window_demand, cfg, limits, seed,
                    rng, self.sigma_kmh, self.prior_ranges,
                    self.resample_fraction, self.jitter_fraction)
            except NoOverlap:
                flags.append(f"window_{widx}:no_overlap_skipped")
                continue
            ess_series.append(diag["ess"])
            if diag["resampled"]:
                flags.append(f"window_{widx}:resampled")
            mpe_series.append(self._window_mpe(
                window, estimate_map(particles), particles))
        self.particles_ = particles
        self.map_params_ = estimate_map(particles)
        final_anchor = observed.values[observed.n_minutes - 1]
        self.result_ = AssimilationResult(
            map_params=self.map_params_,
            initial_state=reconstruct_microstate(final_anchor, fd, cfg, limits=limits),
            posterior=posterior_histograms(particles, self.prior_ranges),
            ess_series=tuple(ess_series),
            mpe_series=tuple(mpe_series),
            flags=tuple(flags),
        )
        return self

    def _window_mpe(self, window: MeanSpeedField, map_params: BehaviorParams,
                    particles: list[Particle]) -> float:
        """Mean absolute percentage error of the window field simulated by the
        particle closest to the MAP (range-normalized distance)."""
        ranges = dict(DEFAULT_PRIOR_RANGES if self.prior_ranges is None
                      else self.prior_ranges)
        best, best_d = None, float("inf")
        for p in particles:
            if p.last_sim_field is None:
                continue
            d = sum(((getattr(p.params, k) - getattr(map_params, k))
                     / (hi - lo)) ** 2 for k, (lo, hi) in ranges.items())
            if d < best_d:
                best, best_d = p, d
        if best is None:
            return float("nan")
        sim = best.last_sim_field
        both = (np.isfinite(window.values) & np.isfinite(sim.values)
                & (window.values > 0))
        if not both.any():
            return float("nan")
        err = np.abs(sim.values[both] - window.values[both]) / window.values[both]
        return float(err.mean() * 100.0)
