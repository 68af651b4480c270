"""End-to-end recommendation cycles and their persisted records.

One cycle, triggered every few minutes against the data observed so far:

1. assimilate the trailing windows of the speed field to estimate behaviour
   parameters and reconstruct the current vehicle placement,
2. predict the demand baseline and assemble the scenario catalog,
3. simulate every scenario over the horizon, a fixed number of seeds each,
   and average Edie throughput / mean speed over the evaluation window,
4. scale by the operating standards, flag the Pareto front, and pick one
   scenario per configured orientation.

Records are plain JSON; everything that feeds the selection is reproducible
from the stored digests and seeds, and wall-clock timings sit outside the
deterministic part. Replaying a stream runs cycles on a fixed cadence and
tags each record with minutes relative to the first congestion onset.
"""

from __future__ import annotations

import hashlib
import json
import time as time_mod
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from . import _rng
from .assimilation import ParticleFilterAssimilator
from .corridor import CorridorConfig
from .errors import ConfigError, EngineError, InsufficientHistory, NoOccupancy
from .fundamental import CounterSample, FundamentalDiagram, fit_fd
from .objectives import ObjectiveValues, edie_mean_speed, edie_throughput, tally_from_log
from .pareto import EvaluatedScenario, Orientation, distance, flag_front, select_optimal
from .scenarios import build_catalog, limit_grid, predict_inflow
from .simulate import SimRun, run
from .speed_field import MeanSpeedField, detect_congestion

DEFAULT_STANDARDS = (44.14, 90.0)   # veh/min, km/h
DEFAULT_ORIENTATIONS = ((0.7, 1.0), (0.3, 1.0), (0.5, 2.0))


@dataclass(frozen=True)
class AssimilationSettings:
    n_particles: int = 256
    sigma_kmh: float = 10.0
    window_min: int = 5
    n_windows: int = 2          # trailing windows consulted per cycle
    prior_ranges: tuple | None = None

    def ranges_dict(self) -> dict | None:
        if self.prior_ranges is None:
            return None
        return {name: (lo, hi) for name, lo, hi in self.prior_ranges}


@dataclass(frozen=True)
class PipelineConfig:
    corridor: CorridorConfig = field(default_factory=CorridorConfig)
    assimilation: AssimilationSettings = field(default_factory=AssimilationSettings)
    catalog_mode: str = "vsl_only"          # or "combined"
    orientations: tuple = DEFAULT_ORIENTATIONS
    horizon_min: int = 30
    objective_window_min: tuple[int, int] = (20, 30)
    cadence_min: int = 5
    seeds_per_scenario: int = 5
    standards: tuple[float, float] = DEFAULT_STANDARDS
    base_seed: int = 0
    inflow_station_km: float | None = None  # default: the most upstream station

    def __post_init__(self):
        if self.catalog_mode not in ("vsl_only", "combined"):
            raise ConfigError(f"unknown catalog mode {self.catalog_mode!r}")
        w0, w1 = self.objective_window_min
        if not (0 <= w0 < w1 <= self.horizon_min):
            raise ConfigError(
                f"objective window {self.objective_window_min} outside horizon")
        if self.cadence_min < 1 or self.seeds_per_scenario < 1:
            raise ConfigError("cadence and seeds must be >= 1")
        for w, p in self.orientations:
            Orientation(w, p)   # validates

    def to_json(self) -> dict:
        return {
            "corridor": self.corridor.to_json(),
            "assimilation": {
                "n_particles": self.assimilation.n_particles,
                "sigma_kmh": self.assimilation.sigma_kmh,
                "window_min": self.assimilation.window_min,
                "n_windows": self.assimilation.n_windows,
                "prior_ranges": self.assimilation.prior_ranges,
            },
            "catalog_mode": self.catalog_mode,
            "orientations": [list(o) for o in self.orientations],
            "horizon_min": self.horizon_min,
            "objective_window_min": list(self.objective_window_min),
            "cadence_min": self.cadence_min,
            "seeds_per_scenario": self.seeds_per_scenario,
            "standards": list(self.standards),
            "base_seed": self.base_seed,
            "inflow_station_km": self.inflow_station_km,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        asm = doc.get("assimilation", {})
        prior = asm.get("prior_ranges")
        return cls(
            corridor=CorridorConfig.from_json(doc["corridor"])
            if "corridor" in doc else CorridorConfig(),
            assimilation=AssimilationSettings(
                n_particles=asm.get("n_particles", 256),
                sigma_kmh=asm.get("sigma_kmh", 10.0),
                window_min=asm.get("window_min", 5),
                n_windows=asm.get("n_windows", 2),
                prior_ranges=tuple(tuple(r) for r in prior) if prior else None,
            ),
            catalog_mode=doc.get("catalog_mode", "vsl_only"),
            orientations=tuple(tuple(o) for o in doc.get(
                "orientations", DEFAULT_ORIENTATIONS)),
            horizon_min=doc.get("horizon_min", 30),
            objective_window_min=tuple(doc.get("objective_window_min", (20, 30))),
            cadence_min=doc.get("cadence_min", 5),
            seeds_per_scenario=doc.get("seeds_per_scenario", 5),
            standards=tuple(doc.get("standards", DEFAULT_STANDARDS)),
            base_seed=doc.get("base_seed", 0),
            inflow_station_km=doc.get("inflow_station_km"),
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def inflow_series_from_counters(counters: list[CounterSample], t0: datetime,
                                n_minutes: int,
                                station_km: float | None = None) -> np.ndarray:
    """Per-minute demand at the entry reference station; absent minutes -> 0."""
    if not counters:
        return np.zeros(n_minutes)
    if station_km is None:
        station_km = min(s.station_km for s in counters)
    out = np.zeros(n_minutes)
    for s in counters:
        if s.station_km != station_km:
            continue
        m = int(round((s.minute - t0).total_seconds() / 60.0))
        if 0 <= m < n_minutes:
            out[m] = s.flow_veh_min
    return out


def calibrate_fd_from_counters(counters: list[CounterSample],
                               cfg: CorridorConfig) -> FundamentalDiagram:
    """Fit the speed-density curve on per-lane-normalised counter records.

    Counters report lanes-summed flow; the reconstruction formulas interpret
    diagram density per lane, so flows are divided by the lane count first.
    The jam anchor comes from geometry: one vehicle per cell and lane.
    """
    per_lane = [
        CounterSample(s.minute, s.station_km, s.flow_veh_min / cfg.n_lanes, s.speed_kmh)
        for s in counters
    ]
    return fit_fd(per_lane, jam_density_veh_km=1000.0 / cfg.cell_length_m)


@dataclass
class RunRecord:
    run_id: str
    issued_at: str
    now_minute: int
    mode: str
    delta_t_min: int | None
    inputs_digest: str
    config: dict
    assimilation: dict
    scenarios: list[dict]
    selections: list[dict]
    fields: dict
    flags: list[str]
    timing_s: float

    def selection_json(self) -> str:
        """Canonical bytes of everything the selection decided; no timings."""
        payload = {
            "run_id": self.run_id,
            "inputs_digest": self.inputs_digest,
            "selections": self.selections,
            "front": sorted(s["id"] for s in self.scenarios if s["pareto"]),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "issued_at": self.issued_at,
            "now_minute": self.now_minute,
            "mode": self.mode,
            "delta_t_min": self.delta_t_min,
            "inputs_digest": self.inputs_digest,
            "config": self.config,
            "assimilation": self.assimilation,
            "scenarios": self.scenarios,
            "selections": self.selections,
            "fields": self.fields,
            "flags": self.flags,
            "timing_s": self.timing_s,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RunRecord":
        return cls(**{k: doc[k] for k in (
            "run_id", "issued_at", "now_minute", "mode", "delta_t_min",
            "inputs_digest", "config", "assimilation", "scenarios",
            "selections", "fields", "flags", "timing_s")})


def run_cycle(cfg: PipelineConfig, observed: MeanSpeedField,
              counters: list[CounterSample], now_minute: int | None = None,
              fd: FundamentalDiagram | None = None,
              long_history=None,
              delta_t_min: int | None = None) -> RunRecord:
    """One full recommendation cycle against data up to ``now_minute``."""
    started = time_mod.perf_counter()
    corridor = cfg.corridor
    if now_minute is None:
        now_minute = observed.n_minutes
    if not (1 <= now_minute <= observed.n_minutes):
        raise ConfigError(f"now_minute {now_minute} outside observed field")
    flags: list[str] = []

    if fd is None:
        fd = calibrate_fd_from_counters(counters, corridor)
        flags.append("fd_calibrated_in_cycle")

    # --- assimilation over the trailing windows --------------------------
    asm = cfg.assimilation
    span = min(asm.n_windows * asm.window_min, (now_minute // asm.window_min)
               * asm.window_min)
    if span < asm.window_min:
        raise InsufficientHistory(
            f"need at least {asm.window_min} observed minutes, got {now_minute}")
    trailing = observed.window(now_minute - span, now_minute)
    demand_actual = inflow_series_from_counters(
        counters, observed.t0, observed.n_minutes, cfg.inflow_station_km)
    assimilator = ParticleFilterAssimilator(
        n_particles=asm.n_particles, sigma_kmh=asm.sigma_kmh,
        window_min=asm.window_min, prior_ranges=asm.ranges_dict(),
        seed=_rng.derive_seed(cfg.base_seed, "assimilation", now_minute),
    )
    assimilator.fit(trailing, demand_actual[now_minute - span:now_minute],
                    corridor, fd)
    result = assimilator.result_
    behaviour = assimilator.map_params_
    initial_state = result.initial_state

    # --- demand baseline and catalog -------------------------------------
    recent = demand_actual[:now_minute]
    try:
        prediction = predict_inflow(recent, cfg.horizon_min, long_history)
        baseline = np.asarray(prediction.baseline_veh_min)
        flags.extend(prediction.flags)
    except InsufficientHistory:
        # early in the stream: hold the recent average flat over the horizon
        level = float(recent[-min(len(recent), 10):].mean()) if len(recent) else 0.0
        baseline = np.full(cfg.horizon_min, level)
        flags.append("baseline_persistence_fallback")
    catalog = build_catalog(corridor, cfg.catalog_mode == "vsl_only", baseline)

    # --- scenario evaluation ----------------------------------------------
    horizon_steps = corridor.minutes_to_steps(cfg.horizon_min)
    w0, w1 = cfg.objective_window_min
    step_span = (int(np.ceil(w0 * corridor.steps_per_minute)),
                 corridor.minutes_to_steps(w1))
    cell_span = (0, corridor.n_cells)
    rows: list[dict] = []
    evaluated: list[EvaluatedScenario] = []
    fields: dict[str, dict] = {"observed": observed.window(max(0, now_minute - span),
                                                           now_minute).to_json()}
    for scenario in catalog:
        limits = limit_grid(corridor, scenario.vsl)
        demand = np.asarray(scenario.inflow.series_veh_min) if scenario.inflow \
            else baseline
        q_sum = v_sum = 0.0
        field_sum = None
        field_cnt = None
        row_flags = []
        for k in range(cfg.seeds_per_scenario):
            out = run(SimRun(
                cfg=corridor, params=behaviour, limits=limits,
                horizon_steps=horizon_steps, demand_veh_min=demand,
                initial=initial_state,
                seed=_rng.derive_seed(cfg.base_seed, "scenario", scenario.id, k),
                scenario_id=scenario.id,
            ))
            tally = tally_from_log(out.log, cell_span, step_span)
            q_sum += edie_throughput(tally, corridor)
            try:
                v_sum += edie_mean_speed(tally, corridor)
            except NoOccupancy:
                row_flags.append(f"seed_{k}:empty_window")
            vals = out.field.values
            if field_sum is None:
                field_sum = np.zeros_like(vals)
                field_cnt = np.zeros_like(vals)
            finite = np.isfinite(vals)
            field_sum[finite] += vals[finite]
            field_cnt += finite
        n = cfg.seeds_per_scenario
        objectives = ObjectiveValues.from_raw(q_sum / n, v_sum / n, cfg.standards)
        evaluated.append(EvaluatedScenario(scenario.id, objectives,
                                           flags=tuple(row_flags)))
        with np.errstate(invalid="ignore"):
            mean_field = np.where(field_cnt > 0, field_sum / np.maximum(field_cnt, 1),
                                  np.nan)
        fields[scenario.id] = MeanSpeedField(
            observed.minute_at(now_minute), mean_field).to_json()
        rows.append(scenario.to_json())

    flag_front(evaluated)
    by_id = {e.scenario_id: e for e in evaluated}
    nc = by_id.get("NoControl")
    for row, ev in zip(rows, evaluated):
        row.update({
            "throughput_veh_min": ev.objectives.throughput_veh_min,
            "mean_speed_kmh": ev.objectives.mean_speed_kmh,
            "scaled_throughput": ev.objectives.scaled_throughput,
            "scaled_speed": ev.objectives.scaled_speed,
            "pareto": ev.pareto,
            "flags": list(ev.flags),
        })
        if nc is not None and nc.objectives.throughput_veh_min > 0:
            row["throughput_improvement"] = (
                ev.objectives.throughput_veh_min / nc.objectives.throughput_veh_min - 1.0)
        if nc is not None and nc.objectives.mean_speed_kmh > 0:
            row["speed_improvement"] = (
                ev.objectives.mean_speed_kmh / nc.objectives.mean_speed_kmh - 1.0)

    selections = []
    for w, p in cfg.orientations:
        orientation = Orientation(w, p)
        chosen = select_optimal(evaluated, orientation)
        selections.append({
            "w": w,
            "p": "inf" if np.isinf(p) else p,
            "scenario_id": chosen.scenario_id,
            "distance": distance(chosen.point, orientation),
            "point": list(chosen.point),
        })

    digest_src = json.dumps({
        "config": cfg.to_json(),
        "observed_t0": observed.t0.isoformat(),
        "now_minute": now_minute,
        "observed": observed.to_json()["values"],
        "n_counters": len(counters),
    }, sort_keys=True)
    inputs_digest = hashlib.sha256(digest_src.encode()).hexdigest()
    record = RunRecord(
        run_id=inputs_digest[:16],
        issued_at=observed.minute_at(now_minute).isoformat(),
        now_minute=now_minute,
        mode=cfg.catalog_mode,
        delta_t_min=delta_t_min,
        inputs_digest=inputs_digest,
        config=cfg.to_json(),
        assimilation=result.to_json(),
        scenarios=rows,
        selections=selections,
        fields=fields,
        flags=flags,
        timing_s=round(time_mod.perf_counter() - started, 3),
    )
    return record


def schedule(cfg: PipelineConfig, observed: MeanSpeedField,
             counters: list[CounterSample],
             fd: FundamentalDiagram | None = None,
             long_history=None):
    """Replay cycles on the cadence over an observation stream.

    Yields one record per trigger (minutes cadence, 2*cadence, ...); cycles
    run strictly in order, so an overrunning cycle delays but never drops the
    next. Records carry minutes relative to the first congestion onset.
    """
    events = detect_congestion(observed)
    onset = events[0].onset_minute if events else None
    if fd is None:
        fd = calibrate_fd_from_counters(counters, cfg.corridor)
    minute = cfg.cadence_min
    while minute <= observed.n_minutes:
        delta = minute - onset if onset is not None else None
        yield run_cycle(cfg, observed, counters, now_minute=minute, fd=fd,
                        long_history=long_history, delta_t_min=delta)
        minute += cfg.cadence_min


class RunStore:
    """Directory of run records, one JSON file per run."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def save(self, record: RunRecord) -> Path:
        path = self.root / f"{record.run_id}.json"
        with open(path, "w") as fh:
            json.dump(record.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        return path

    def list(self) -> list[dict]:
        out = []
        for path in sorted(self.root.glob("*.json")):
            try:
                doc = json.loads(path.read_text())
                out.append({
                    "run_id": doc["run_id"],
                    "issued_at": doc["issued_at"],
                    "now_minute": doc["now_minute"],
                    "mode": doc["mode"],
                    "delta_t_min": doc["delta_t_min"],
                    "n_scenarios": len(doc["scenarios"]),
                })
            except (json.JSONDecodeError, KeyError):
                continue
        out.sort(key=lambda d: (d["issued_at"], d["run_id"]))
        return out

    def get(self, run_id: str) -> RunRecord:
        path = self.root / f"{run_id}.json"
        if not path.exists():
            raise EngineError(f"no run {run_id!r}")
        return RunRecord.from_json(json.loads(path.read_text()))
