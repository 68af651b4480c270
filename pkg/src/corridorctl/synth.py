"""Deterministic synthetic datasets for development, replay demos and tests.

A truth run of the simulator with known behaviour parameters produces the
observed speed field, per-station counter records, and a manifest of the
ground truth. The default demand profile ramps from 20 to 45 veh/min over an
hour, which overloads the tollgate-style bottleneck and provokes congestion;
a flat light profile stays free-flowing. Identical specs and seeds yield
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from . import _rng
from .corridor import CorridorConfig, base_limit_grid
from .errors import SynthSpecError
from .fundamental import CounterSample, write_counter_csv
from .objectives import edie_mean_speed, edie_throughput, tally_from_log
from .simulate import BehaviorParams, MicroState, SimRun, run
from .speed_field import MeanSpeedField, detect_congestion, write_speed_csv

DEFAULT_T0 = datetime(2025, 6, 1, 6, 0)


@dataclass(frozen=True)
class SynthSpec:
    duration_min: int = 60
    demand_start_veh_min: float = 20.0
    demand_end_veh_min: float = 45.0
    truth: BehaviorParams = field(default_factory=BehaviorParams)
    seed: int = 7
    corridor: CorridorConfig = field(default_factory=CorridorConfig)
    t0: datetime = DEFAULT_T0
    station_spacing_km: float = 1.0
    long_history_days: int = 0

    def __post_init__(self):
        if self.duration_min < 1:
            raise SynthSpecError(f"duration must be >= 1 min, got {self.duration_min}")
        if self.demand_start_veh_min < 0 or self.demand_end_veh_min < 0:
            raise SynthSpecError("demand must be non-negative")
        if self.station_spacing_km <= 0 or self.station_spacing_km > self.corridor.length_km:
            raise SynthSpecError(f"bad station spacing {self.station_spacing_km} km")

    @property
    def demand_series(self) -> np.ndarray:
        t = np.arange(self.duration_min, dtype=np.float64)
        if self.duration_min == 1:
            return np.array([self.demand_start_veh_min])
        frac = t / (self.duration_min - 1)
        return self.demand_start_veh_min + frac * (self.demand_end_veh_min
                                                   - self.demand_start_veh_min)

    @property
    def station_positions_km(self) -> list[float]:
        """Counter stations at half-spacing offsets: 0.5, 1.5, ... by default."""
        out = []
        pos = self.station_spacing_km / 2.0
        while pos < self.corridor.length_km:
            out.append(round(pos, 3))
            pos += self.station_spacing_km
        return out


@dataclass
class SynthDataset:
    spec: SynthSpec
    observed: MeanSpeedField
    counters: list[CounterSample]
    speeds_csv: Path
    counters_csv: Path
    manifest_json: Path
    long_history_csv: Path | None


def generate_synthetic_dataset(spec: SynthSpec, out_dir) -> SynthDataset:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = spec.corridor
    limits = base_limit_grid(cfg)
    sim = SimRun(
        cfg=cfg,
        params=spec.truth,
        limits=limits,
        horizon_steps=cfg.minutes_to_steps(spec.duration_min),
        demand_veh_min=spec.demand_series,
        initial=MicroState.empty(),
        seed=_rng.derive_seed(spec.seed, "truth"),
    )
    out = run(sim, t0=spec.t0)
    observed = out.field

    counters = _counter_records(out.log, spec, cfg)

    speeds_csv = out_dir / "speeds.csv"
    counters_csv = out_dir / "counters.csv"
    write_speed_csv(observed, speeds_csv)
    write_counter_csv(counters, counters_csv)

    long_csv = None
    if spec.long_history_days > 0:
        long_csv = out_dir / "inflow_history.csv"
        _write_long_history(spec, long_csv)

    events = detect_congestion(observed)
    manifest = {
        "truth_params": spec.truth.to_json(),
        "seed": spec.seed,
        "t0": spec.t0.isoformat(),
        "duration_min": spec.duration_min,
        "demand_start_veh_min": spec.demand_start_veh_min,
        "demand_end_veh_min": spec.demand_end_veh_min,
        "corridor": cfg.to_json(),
        "congestion_onset_minute": events[0].onset_minute if events else None,
        "exited_vehicles": out.exited,
        "inserted_vehicles": out.inserted,
        "files": {
            "speeds": _digest(speeds_csv),
            "counters": _digest(counters_csv),
            **({"inflow_history": _digest(long_csv)} if long_csv else {}),
        },
    }
    manifest_json = out_dir / "manifest.json"
    with open(manifest_json, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return SynthDataset(spec, observed, counters, speeds_csv, counters_csv,
                        manifest_json, long_csv)


def _counter_records(log, spec: SynthSpec, cfg: CorridorConfig) -> list[CounterSample]:
    """Per-minute station records from short tallies around each station.

    Flow is lanes-summed over a 500 m window centred on the station; rows with
    no occupancy report zero flow and a missing speed.
    """
    half_cells = max(1, int(round(250.0 / cfg.cell_length_m)))
    spm = cfg.steps_per_minute
    records = []
    for minute in range(spec.duration_min):
        t0s = int(round(minute * spm))
        t1s = int(round((minute + 1) * spm))
        for km in spec.station_positions_km:
            centre = int(km * 1000.0 // cfg.cell_length_m)
            c0 = max(0, centre - half_cells)
            c1 = min(cfg.n_cells, centre + half_cells)
            tally = tally_from_log(log, (c0, c1), (t0s, t1s))
            flow = edie_throughput(tally, cfg)
            if tally.time_ticks > 0:
                speed = edie_mean_speed(tally, cfg)
            else:
                speed = float("nan")
            records.append(CounterSample(
                minute=spec.t0 + timedelta(minutes=minute),
                station_km=km,
                flow_veh_min=flow,
                speed_kmh=speed,
            ))
    return records


def _write_long_history(spec: SynthSpec, path: Path) -> None:
    """Per-minute inflow with a plausible daily shape, 14+ days, deterministic."""
    n = spec.long_history_days * 24 * 60
    minute = np.arange(n)
    tod = (minute % 1440) / 1440.0
    base = 18.0 + 14.0 * np.exp(-((tod - 0.33) ** 2) / 0.004) \
        + 10.0 * np.exp(-((tod - 0.74) ** 2) / 0.006)
    u = _rng.substream_uniform(_rng.derive_seed(spec.seed, "history"), 0, minute)
    series = np.maximum(base + (u - 0.5) * 2.0, 0.0)
    start = spec.t0 - timedelta(minutes=n)
    with open(path, "w") as fh:
        fh.write("minute_iso8601,inflow_veh_per_min\n")
        for m in range(n):
            fh.write(f"{(start + timedelta(minutes=m)).isoformat()},{series[m]:.3f}\n")


def read_long_history(path) -> np.ndarray:
    import pandas as pd
    df = pd.read_csv(path)
    if list(df.columns) != ["minute_iso8601", "inflow_veh_per_min"]:
        raise SynthSpecError(f"{path}: unexpected columns {list(df.columns)}")
    return df["inflow_veh_per_min"].to_numpy(dtype=np.float64)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()
