"""Freeway corridor decision support: a stochastic cellular-automaton twin,
particle-filter parameter assimilation, scenario fan-out and Pareto-based
control selection, plus CLI and HTTP front ends."""

from .assimilation import (AssimilationResult, ParticleFilterAssimilator,
                           reconstruct_microstate)
from .corridor import DEFAULT_CORRIDOR, CorridorConfig
from .errors import EngineError
from .fundamental import (CounterSample, FundamentalDiagram,
                          FundamentalDiagramModel, fit_fd, read_counter_csv,
                          write_counter_csv)
from .objectives import (EdieTally, ObjectiveValues, edie_mean_speed,
                         edie_throughput, tally_from_log)
from .pareto import (EvaluatedScenario, Orientation, distance, flag_front,
                     pareto_front, select_optimal)
from .pipeline import (PipelineConfig, RunRecord, RunStore, run_cycle,
                       schedule)
from .scenarios import (ControlScenario, build_catalog, limit_grid,
                        predict_inflow, vsl_catalog)
from .simulate import (BehaviorParams, MicroState, SimRun, run, simulate_ring,
                       step)
from .speed_field import (CongestionEvent, MeanSpeedField,
                          aggregate_sim_to_field, detect_congestion,
                          ingest_speed_csv, write_speed_csv)
from .synth import SynthSpec, generate_synthetic_dataset

__version__ = "0.1.0"

__all__ = [
    "AssimilationResult", "BehaviorParams", "CongestionEvent",
    "ControlScenario", "CorridorConfig", "CounterSample", "DEFAULT_CORRIDOR",
    "EdieTally", "EngineError", "EvaluatedScenario", "FundamentalDiagram",
    "FundamentalDiagramModel", "MeanSpeedField", "MicroState",
    "ObjectiveValues", "Orientation", "ParticleFilterAssimilator",
    "PipelineConfig", "RunRecord", "RunStore", "SimRun", "SynthSpec",
    "aggregate_sim_to_field", "build_catalog", "detect_congestion",
    "distance", "edie_mean_speed", "edie_throughput", "fit_fd", "flag_front",
    "generate_synthetic_dataset", "ingest_speed_csv", "limit_grid",
    "pareto_front", "predict_inflow", "read_counter_csv",
    "reconstruct_microstate", "run", "run_cycle", "schedule",
    "select_optimal", "simulate_ring", "step", "tally_from_log",
    "vsl_catalog", "write_counter_csv", "write_speed_csv",
]
