"""Distance/time tallies and the flow / mean-speed readouts."""

import numpy as np
import pytest

from corridorctl.corridor import CorridorConfig, base_limit_grid
from corridorctl.errors import EmptyRegion, NoOccupancy, ConfigError
from corridorctl.objectives import (EdieTally, ObjectiveValues, edie_mean_speed,
                                    edie_throughput, scale, tally_from_log)
from corridorctl.simulate import (BehaviorParams, MicroState, TrajectoryLog,
                                  simulate_ring)

CFG = CorridorConfig()


def one_vehicle_log(cell0: int, speed: int, n_steps: int) -> TrajectoryLog:
    steps = np.arange(n_steps, dtype=np.int64)
    return TrajectoryLog(steps=steps,
                         ids=np.zeros(n_steps, dtype=np.int64),
                         lanes=np.zeros(n_steps, dtype=np.int64),
                         cells=cell0 + speed * steps,
                         speeds=np.full(n_steps, speed, dtype=np.int64))


def test_single_vehicle_closed_form_exact():
    """Constant 4 cells/step for 50 steps, region fully containing the path."""
    log = one_vehicle_log(0, 4, 50)
    tally = tally_from_log(log, (0, 800), (0, 50))
    assert tally.total_distance_cells == 200.0
    assert tally.total_time_steps == 50.0
    # flow = distance / area, converted to veh/min
    expected_q = 200.0 / (800 * 50) * (60.0 / CFG.step_s)
    assert abs(edie_throughput(tally, CFG) - expected_q) < 1e-12
    assert abs(edie_mean_speed(tally, CFG) - 80.0) < 1e-9


def test_partial_overlap_splits_by_uniform_motion():
    # one step from cell 98 at speed 4: 2 cells inside [0,100), 2 inside [100,..)
    log = one_vehicle_log(98, 4, 1)
    left = tally_from_log(log, (0, 100), (0, 1))
    right = tally_from_log(log, (100, 800), (0, 1))
    assert left.total_distance_cells == 2.0
    assert right.total_distance_cells == 2.0
    assert left.total_time_steps == 0.5
    assert right.total_time_steps == 0.5


def test_stopped_vehicle_accrues_time_only():
    n = 30
    log = TrajectoryLog(steps=np.arange(n, dtype=np.int64),
                        ids=np.zeros(n, dtype=np.int64),
                        lanes=np.zeros(n, dtype=np.int64),
                        cells=np.full(n, 42, dtype=np.int64),
                        speeds=np.zeros(n, dtype=np.int64))
    tally = tally_from_log(log, (0, 100), (0, n))
    assert tally.total_distance_cells == 0.0
    assert tally.total_time_steps == float(n)
    assert edie_throughput(tally, CFG) == 0.0
    assert edie_mean_speed(tally, CFG) == 0.0


def test_ring_wrap_splits_at_seam():
    log = one_vehicle_log(798, 4, 1)     # path [798, 802) on an 800-cell ring
    whole = tally_from_log(log, (0, 800), (0, 1), ring_length=800)
    assert whole.total_distance_cells == 4.0
    assert whole.total_time_steps == 1.0
    head = tally_from_log(log, (0, 10), (0, 1), ring_length=800)
    assert head.total_distance_cells == 2.0


def test_additivity_is_exact_on_a_real_ring_log():
    cfg = CorridorConfig()
    limits = base_limit_grid(cfg)
    rng = np.random.default_rng(5)
    cells = np.sort(rng.choice(cfg.n_cells, size=120, replace=False))
    init = MicroState(
        lanes=np.zeros(120, dtype=np.int64), cells=cells.astype(np.int64),
        speeds=rng.integers(0, 5, size=120).astype(np.int64),
        ids=np.arange(120, dtype=np.int64), time=0)
    _, log = simulate_ring(init, BehaviorParams(), limits, 60, seed=3)

    whole = tally_from_log(log, (0, 800), (0, 60), ring_length=800)
    parts = [tally_from_log(log, span, (t0, t1), ring_length=800)
             for span in ((0, 123), (123, 800))
             for (t0, t1) in ((0, 17), (17, 60))]
    total = parts[0]
    for p in parts[1:]:
        total = total.add(p)
    assert total.total_distance_cells == whole.total_distance_cells
    assert total.time_ticks == whole.time_ticks
    assert total.ticks_per_step == whole.ticks_per_step
    assert total.cell_span == whole.cell_span and total.step_span == whole.step_span


def test_lane_filter():
    n = 10
    log = TrajectoryLog(steps=np.tile(np.arange(n, dtype=np.int64), 2),
                        ids=np.repeat(np.arange(2, dtype=np.int64), n),
                        lanes=np.repeat(np.array([0, 1], dtype=np.int64), n),
                        cells=np.concatenate([4 * np.arange(n), 3 * np.arange(n)]).astype(np.int64),
                        speeds=np.repeat(np.array([4, 3], dtype=np.int64), n))
    both = tally_from_log(log, (0, 800), (0, n))
    lane0 = tally_from_log(log, (0, 800), (0, n), lanes=(0,))
    lane1 = tally_from_log(log, (0, 800), (0, n), lanes=(1,))
    assert lane0.total_distance_cells == 40.0
    assert lane1.total_distance_cells == 30.0
    assert both.total_distance_cells == 70.0
    assert lane0.lanes == (0,) and both.lanes == (0, 1)


def test_empty_region_and_no_occupancy_raise():
    log = one_vehicle_log(0, 4, 5)
    with pytest.raises(EmptyRegion):
        tally_from_log(log, (10, 10), (0, 5))
    empty = tally_from_log(log, (700, 800), (0, 5))    # never reached
    with pytest.raises(NoOccupancy):
        edie_mean_speed(empty, CFG)


def test_scale_and_objective_values():
    sq, sv = scale((44.14, 45.0), (44.14, 90.0))
    assert sq == pytest.approx(1.0)
    assert sv == pytest.approx(0.5)
    vals = ObjectiveValues.from_raw(22.07, 90.0, (44.14, 90.0))
    assert vals.scaled_throughput == pytest.approx(0.5)
    assert vals.scaled_speed == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        scale((1.0, 1.0), (0.0, 90.0))
