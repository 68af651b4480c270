import numpy as np
import pytest

from corridorctl.corridor import CorridorConfig
from corridorctl.pipeline import AssimilationSettings, PipelineConfig
from corridorctl.simulate import BehaviorParams
from corridorctl.synth import SynthSpec, generate_synthetic_dataset


@pytest.fixture(scope="session")
def tiny_corridor() -> CorridorConfig:
    """1 km, two lanes; small enough that a 30-min sim takes well under a second."""
    return CorridorConfig(length_km=1.0, n_lanes=2, base_limit_kmh=(80.0, 100.0),
                          bottleneck_km=0.75, bottleneck_limit_kmh=40.0)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_corridor, tmp_path_factory):
    spec = SynthSpec(duration_min=12, demand_start_veh_min=16.0,
                     demand_end_veh_min=22.0,
                     truth=BehaviorParams(p_keep=0.8, q_anticipate=0.5, r_slow=0.2),
                     seed=11, corridor=tiny_corridor, station_spacing_km=0.25)
    out = tmp_path_factory.mktemp("tiny_dataset")
    ds = generate_synthetic_dataset(spec, out)
    return spec, ds, out


@pytest.fixture(scope="session")
def tiny_pipeline_config(tiny_corridor) -> PipelineConfig:
    """Cut every knob that trades fidelity for speed; structure stays intact."""
    return PipelineConfig(
        corridor=tiny_corridor,
        assimilation=AssimilationSettings(n_particles=8, window_min=5, n_windows=1),
        horizon_min=6,
        objective_window_min=(3, 6),
        seeds_per_scenario=1,
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
