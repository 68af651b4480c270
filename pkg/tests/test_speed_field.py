"""Field construction, aggregation from traces, congestion detection."""

from datetime import datetime, timedelta

import numpy as np
import pytest

from corridorctl.corridor import CorridorConfig
from corridorctl.errors import RangeError, SchemaError
from corridorctl.simulate import TrajectoryLog
from corridorctl.speed_field import (CONGESTION_THRESHOLD_KMH, MeanSpeedField,
                                     aggregate_sim_to_field, detect_congestion,
                                     ingest_speed_csv, write_speed_csv)

T0 = datetime(2024, 3, 1, 7, 0)


def const_speed_log(cell0: int, speed: int, n_steps: int) -> TrajectoryLog:
    steps = np.arange(n_steps, dtype=np.int64)
    return TrajectoryLog(steps=steps,
                         ids=np.zeros(n_steps, dtype=np.int64),
                         lanes=np.zeros(n_steps, dtype=np.int64),
                         cells=cell0 + speed * steps,
                         speeds=np.full(n_steps, speed, dtype=np.int64))


def test_field_validation():
    with pytest.raises(SchemaError):
        MeanSpeedField(T0, np.zeros(5))
    with pytest.raises(RangeError):
        MeanSpeedField(T0, np.array([[200.0]]))
    with pytest.raises(RangeError):
        MeanSpeedField(T0, np.array([[-1.0]]))
    f = MeanSpeedField(T0, np.full((3, 2), np.nan))
    assert f.n_minutes == 3 and f.n_segments == 2


def test_window_slicing():
    f = MeanSpeedField(T0, np.arange(12, dtype=float).reshape(6, 2))
    w = f.window(2, 5)
    assert w.n_minutes == 3
    assert w.t0 == T0 + timedelta(minutes=2)
    np.testing.assert_array_equal(w.values, f.values[2:5])
    with pytest.raises(SchemaError):
        f.window(4, 4)
    with pytest.raises(SchemaError):
        f.window(0, 7)


def test_aggregate_constant_speed_is_exact():
    """One vehicle at 4 cells/step: every touched patch reads exactly 80 km/h."""
    cfg = CorridorConfig()
    log = const_speed_log(0, 4, 100)    # 100 steps = 3 minutes, reaches cell 400
    field = aggregate_sim_to_field(log, cfg, 3, T0)
    assert field.values.shape == (3, 16)
    touched = np.isfinite(field.values)
    assert touched.any()
    assert np.all(np.abs(field.values[touched] - 80.0) < 1e-9)
    # untouched: segments beyond cell 400 never visited
    assert np.isnan(field.values[:, 9:]).all()


def test_aggregate_stopped_vehicle_reads_zero():
    cfg = CorridorConfig()
    n = 40
    log = TrajectoryLog(steps=np.arange(n, dtype=np.int64),
                        ids=np.zeros(n, dtype=np.int64),
                        lanes=np.zeros(n, dtype=np.int64),
                        cells=np.full(n, 123, dtype=np.int64),
                        speeds=np.zeros(n, dtype=np.int64))
    field = aggregate_sim_to_field(log, cfg, 2, T0)
    seg = 123 // cfg.cells_per_segment
    assert field.values[0, seg] == 0.0
    assert field.values[1, seg] == 0.0
    other = np.ones((2, 16), dtype=bool)
    other[:, seg] = False
    assert np.isnan(field.values[other]).all()


def test_aggregate_row_count_rounds_to_nearest_minute():
    """A 5-min horizon is 167 steps = 300.6 s; the trailing sliver is dropped."""
    cfg = CorridorConfig()
    log = const_speed_log(0, 1, 167)
    field = aggregate_sim_to_field(log, cfg, max(1, round(167 * cfg.step_s / 60.0)), T0)
    assert field.values.shape[0] == 5


def test_aggregate_splits_time_across_minute_boundary():
    """Step 33 straddles minutes 0/1 (33.33 steps per minute); totals conserve."""
    cfg = CorridorConfig()
    log = const_speed_log(0, 2, 40)
    field = aggregate_sim_to_field(log, cfg, 2, T0)
    vals = field.values[np.isfinite(field.values)]
    assert np.all(np.abs(vals - 40.0) < 1e-9)


def test_csv_round_trip(tmp_path):
    cfg = CorridorConfig(length_km=1.0, n_lanes=1, base_limit_kmh=(80.0,),
                         bottleneck_km=0.75, bottleneck_limit_kmh=40.0)
    values = np.array([[70.0, np.nan], [55.5, 30.25]])
    field = MeanSpeedField(T0, values)
    path = tmp_path / "speeds.csv"
    write_speed_csv(field, path)
    back = ingest_speed_csv(path, cfg)
    assert back.t0 == field.t0
    np.testing.assert_allclose(back.values, values)


def test_detect_congestion_needs_15_consecutive_minutes():
    values = np.full((40, 2), 70.0)
    values[10:24, 1] = 35.0                 # 14 minutes: one short
    assert detect_congestion(MeanSpeedField(T0, values)) == []

    values[10:25, 1] = 35.0                 # exactly 15
    events = detect_congestion(MeanSpeedField(T0, values))
    assert len(events) == 1
    ev = events[0]
    assert ev.onset_minute == 24            # the minute persistence is met
    assert ev.onset_time == T0 + timedelta(minutes=24)
    assert ev.cleared_minute == 25
    assert ev.segment_range == (1, 1)


def test_detect_congestion_missing_minute_breaks_the_run():
    values = np.full((40, 2), 70.0)
    values[10:30, 0] = 35.0
    values[17, 0] = np.nan                  # 7 + 12 below, neither reaches 15
    assert detect_congestion(MeanSpeedField(T0, values)) == []


def test_detect_congestion_boundary_speed_not_congested():
    values = np.full((30, 2), 70.0)
    values[5:29, 0] = CONGESTION_THRESHOLD_KMH      # at threshold, not below
    assert detect_congestion(MeanSpeedField(T0, values)) == []


def test_detect_congestion_open_event():
    values = np.full((20, 2), 70.0)
    values[4:, 0] = 20.0                    # below from minute 4, never clears
    events = detect_congestion(MeanSpeedField(T0, values))
    assert len(events) == 1
    assert events[0].onset_minute == 4 + 15 - 1
    assert events[0].cleared_minute is None
