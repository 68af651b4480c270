"""HTTP access to run records and on-demand recommendation cycles.

The service owns one observation set (speed field + counters), one pipeline
config and one run store. Cycle triggers are serialised through a lock so
concurrent POSTs queue instead of corrupting the store; everything else is
read-only. The listen address is taken from ``CORRIDORCTL_LISTEN`` only,
never from a config file.
"""

from __future__ import annotations

import math
import threading
from dataclasses import replace
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel

from .errors import EngineError
from .fundamental import FundamentalDiagram, read_counter_csv
from .objectives import ObjectiveValues
from .pareto import EvaluatedScenario, Orientation, distance, select_optimal
from .pipeline import PipelineConfig, RunStore, run_cycle
from .speed_field import ingest_speed_csv

DEFAULT_LISTEN = "127.0.0.1:8732"


def parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit():
        raise EngineError(f"listen address must be host:port, got {value!r}")
    return host, int(port)


class CycleRequest(BaseModel):
    now_minute: int | None = None
    mode: str | None = None             # catalog mode override
    seeds_per_scenario: int | None = None
    base_seed: int | None = None


def _parse_p(raw: str) -> float:
    if raw.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(raw)
    except ValueError:
        raise HTTPException(422, f"p must be a number or 'inf', got {raw!r}")


def _evaluated_from_record(doc: dict) -> list[EvaluatedScenario]:
    out = []
    for row in doc["scenarios"]:
        out.append(EvaluatedScenario(
            row["id"],
            ObjectiveValues(
                throughput_veh_min=row["throughput_veh_min"],
                mean_speed_kmh=row["mean_speed_kmh"],
                scaled_throughput=row["scaled_throughput"],
                scaled_speed=row["scaled_speed"],
            ),
            pareto=row["pareto"],
        ))
    return out


def create_app(dataset_dir, runs_dir, config: PipelineConfig | None = None,
               fd: FundamentalDiagram | None = None) -> FastAPI:
    dataset_dir = Path(dataset_dir)
    config = config or PipelineConfig()
    store = RunStore(runs_dir)
    observed = ingest_speed_csv(dataset_dir / "speeds.csv", config.corridor)
    counters = read_counter_csv(dataset_dir / "counters.csv")
    if fd is None and (dataset_dir / "fd.json").exists():
        fd = FundamentalDiagram.load(dataset_dir / "fd.json")

    app = FastAPI(title="corridorctl")
    cycle_lock = threading.Lock()

    def _record_doc(run_id: str) -> dict:
        try:
            return store.get(run_id).to_json()
        except EngineError:
            raise HTTPException(404, f"no run {run_id!r}")

    @app.get("/health")
    def health():
        return {"status": "ok", "n_minutes": observed.n_minutes,
                "n_runs": len(store.list())}

    @app.post("/runs", status_code=201)
    def trigger(req: CycleRequest):
        overrides = {}
        if req.mode is not None:
            overrides["catalog_mode"] = req.mode
        if req.seeds_per_scenario is not None:
            overrides["seeds_per_scenario"] = req.seeds_per_scenario
        if req.base_seed is not None:
            overrides["base_seed"] = req.base_seed
        with cycle_lock:   # queued, never dropped
            try:
                cfg = replace(config, **overrides) if overrides else config
                record = run_cycle(cfg, observed, counters,
                                   now_minute=req.now_minute, fd=fd)
            except EngineError as exc:
                raise HTTPException(422, str(exc))
            store.save(record)
        return record.to_json()

    @app.get("/runs")
    def list_runs():
        return {"runs": store.list()}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        return _record_doc(run_id)

    @app.get("/runs/{run_id}/pareto")
    def get_pareto(run_id: str):
        doc = _record_doc(run_id)
        points = [{
            "id": row["id"],
            "scaled_throughput": row["scaled_throughput"],
            "scaled_speed": row["scaled_speed"],
            "throughput_veh_min": row["throughput_veh_min"],
            "mean_speed_kmh": row["mean_speed_kmh"],
            "pareto": row["pareto"],
        } for row in doc["scenarios"]]
        return {"run_id": run_id, "points": points,
                "selections": doc["selections"]}

    @app.get("/runs/{run_id}/recommendation")
    def get_recommendation(run_id: str, w: float = Query(ge=0.0, le=1.0),
                           p: str = Query("1")):
        doc = _record_doc(run_id)
        orientation = Orientation(w, _parse_p(p))
        chosen = select_optimal(_evaluated_from_record(doc), orientation)
        row = next(r for r in doc["scenarios"] if r["id"] == chosen.scenario_id)
        return {
            "run_id": run_id,
            "w": orientation.w,
            "p": "inf" if math.isinf(orientation.p) else orientation.p,
            "scenario_id": chosen.scenario_id,
            "distance": distance(chosen.point, orientation),
            "scenario": row,
        }

    @app.get("/runs/{run_id}/speedfield")
    def get_speedfield(run_id: str, scenario: str = "observed"):
        doc = _record_doc(run_id)
        if scenario not in doc["fields"]:
            raise HTTPException(404, f"no field for scenario {scenario!r}")
        return {"run_id": run_id, "scenario": scenario,
                "field": doc["fields"][scenario]}

    return app
