"""Command-line front end.

Every command that consumes observations takes a dataset directory holding
``speeds.csv`` and ``counters.csv`` (plus optional ``fd.json`` and
``inflow_history.csv``), as produced by ``corridorctl synth``. A pipeline
config JSON applies to all commands via ``--config``; omitted values fall
back to defaults.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .api import DEFAULT_LISTEN, create_app, parse_listen
from .assimilation import ParticleFilterAssimilator
from .errors import EngineError
from .fundamental import FundamentalDiagram, read_counter_csv
from .pipeline import (PipelineConfig, RunStore, calibrate_fd_from_counters,
                       inflow_series_from_counters, run_cycle, schedule)
from .speed_field import ingest_speed_csv
from .synth import SynthSpec, generate_synthetic_dataset, read_long_history
from . import _rng


def _pipeline_config(path: str | None) -> PipelineConfig:
    return PipelineConfig.load(path) if path else PipelineConfig()


def _load_dataset(dataset: str, cfg: PipelineConfig):
    d = Path(dataset)
    observed = ingest_speed_csv(d / "speeds.csv", cfg.corridor)
    counters = read_counter_csv(d / "counters.csv")
    fd = FundamentalDiagram.load(d / "fd.json") if (d / "fd.json").exists() else None
    history = read_long_history(d / "inflow_history.csv") \
        if (d / "inflow_history.csv").exists() else None
    return observed, counters, fd, history


@click.group()
def main():
    """Corridor control: calibrate, assimilate, simulate, recommend."""


@main.command("synth")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--duration-min", default=60, show_default=True)
@click.option("--demand-start", default=20.0, show_default=True,
              help="Entry demand at t0, veh/min over all lanes.")
@click.option("--demand-end", default=45.0, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--p-keep", default=0.9, show_default=True)
@click.option("--q-anticipate", default=0.5, show_default=True)
@click.option("--r-slow", default=0.2, show_default=True)
@click.option("--long-history-days", default=0, show_default=True,
              help="Also emit a per-minute entry-flow history this many days long.")
def synth_cmd(out, duration_min, demand_start, demand_end, seed,
              p_keep, q_anticipate, r_slow, long_history_days):
    """Generate a synthetic observation set with a known ground truth."""
    from .simulate import BehaviorParams
    spec = SynthSpec(
        duration_min=duration_min,
        demand_start_veh_min=demand_start,
        demand_end_veh_min=demand_end,
        truth=BehaviorParams(p_keep=p_keep, q_anticipate=q_anticipate,
                             r_slow=r_slow),
        seed=seed,
        long_history_days=long_history_days,
    )
    ds = generate_synthetic_dataset(spec, out)
    click.echo(f"wrote {ds.speeds_csv}")
    click.echo(f"wrote {ds.counters_csv}")
    if ds.long_history_csv:
        click.echo(f"wrote {ds.long_history_csv}")
    click.echo(f"wrote {ds.manifest_json}")


@main.command("calibrate-fd")
@click.option("--counters", "counters_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
def calibrate_fd_cmd(counters_path, out, config_path):
    """Fit the speed-density curve from counter records."""
    cfg = _pipeline_config(config_path)
    samples = read_counter_csv(counters_path)
    fd = calibrate_fd_from_counters(samples, cfg.corridor)
    fd.save(out)
    click.echo(f"{len(fd.knot_density)} knots, "
               f"v_free {fd.v_free_kmh:.1f} km/h, "
               f"q_max {fd.q_max_veh_min:.2f} veh/min (per lane)")
    click.echo(f"wrote {out}")


@main.command("assimilate")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--now", "now_minute", type=int, default=None,
              help="Minute index to assimilate up to; default: end of data.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def assimilate_cmd(dataset, config_path, now_minute, out):
    """Estimate behaviour parameters from the observed speed field."""
    cfg = _pipeline_config(config_path)
    observed, counters, fd, _ = _load_dataset(dataset, cfg)
    if fd is None:
        fd = calibrate_fd_from_counters(counters, cfg.corridor)
    now_minute = now_minute or observed.n_minutes
    asm = cfg.assimilation
    demand = inflow_series_from_counters(counters, observed.t0,
                                         observed.n_minutes,
                                         cfg.inflow_station_km)
    assimilator = ParticleFilterAssimilator(
        n_particles=asm.n_particles, sigma_kmh=asm.sigma_kmh,
        window_min=asm.window_min, prior_ranges=asm.ranges_dict(),
        seed=_rng.derive_seed(cfg.base_seed, "assimilation", now_minute))
    assimilator.fit(observed.window(0, now_minute), demand[:now_minute],
                    cfg.corridor, fd)
    doc = assimilator.result_.to_json()
    click.echo(json.dumps(doc, indent=1, sort_keys=True))
    if out:
        Path(out).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        click.echo(f"wrote {out}", err=True)


@main.command("recommend")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--now", "now_minute", type=int, default=None)
@click.option("--mode", type=click.Choice(["vsl_only", "combined"]), default=None)
@click.option("--runs", "runs_dir", type=click.Path(file_okay=False), default=None,
              help="Persist the full run record here.")
def recommend_cmd(dataset, config_path, now_minute, mode, runs_dir):
    """Run one recommendation cycle; print the canonical selection JSON."""
    from dataclasses import replace
    cfg = _pipeline_config(config_path)
    if mode:
        cfg = replace(cfg, catalog_mode=mode)
    observed, counters, fd, history = _load_dataset(dataset, cfg)
    record = run_cycle(cfg, observed, counters, now_minute=now_minute, fd=fd,
                       long_history=history)
    if runs_dir:
        path = RunStore(runs_dir).save(record)
        click.echo(f"wrote {path}", err=True)
    click.echo(record.selection_json())


@main.command("replay")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--runs", "runs_dir", type=click.Path(file_okay=False), default=None)
def replay_cmd(dataset, config_path, runs_dir):
    """Run scheduled cycles over the whole dataset, one per cadence tick."""
    cfg = _pipeline_config(config_path)
    observed, counters, fd, history = _load_dataset(dataset, cfg)
    store = RunStore(runs_dir) if runs_dir else None
    count = 0
    for record in schedule(cfg, observed, counters, fd=fd,
                           long_history=history):
        if store:
            store.save(record)
        picks = ", ".join(f"({s['w']},{s['p']})->{s['scenario_id']}"
                          for s in record.selections)
        dt = f"{record.delta_t_min:+d}" if record.delta_t_min is not None else "n/a"
        click.echo(f"minute {record.now_minute:3d}  dt {dt:>4} min  "
                   f"{record.run_id}  {picks}")
        count += 1
    click.echo(f"{count} cycles")


@main.command("serve")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--runs", "runs_dir", required=True, type=click.Path(file_okay=False))
def serve_cmd(dataset, config_path, runs_dir):
    """Serve the HTTP API; listen address comes from CORRIDORCTL_LISTEN."""
    import uvicorn
    host, port = parse_listen(os.environ.get("CORRIDORCTL_LISTEN", DEFAULT_LISTEN))
    cfg = _pipeline_config(config_path)
    app = create_app(dataset, runs_dir, config=cfg)
    uvicorn.run(app, host=host, port=port, log_level="info")


def entry():
    try:
        main(standalone_mode=True)
    except EngineError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    entry()
