"""Geometry, unit bridges, and config validation."""

import numpy as np
import pytest

from corridorctl.corridor import (CorridorConfig, base_limit_grid, cell_to_km,
                                  km_to_cell, kmh_to_cells, kmh_to_cells_nearest)
from corridorctl.errors import ConfigError, NonIntegralSpeed, OutOfCorridor


def test_default_unit_bridge():
    cfg = CorridorConfig()
    assert cfg.kmh_per_cell == pytest.approx(20.0)
    assert kmh_to_cells(80.0, cfg) == 4
    assert kmh_to_cells(100.0, cfg) == 5
    assert kmh_to_cells(20.0, cfg) == 1
    assert cfg.speed_unit.to_kmh(4) == pytest.approx(80.0)


def test_non_integral_speed_rejected():
    cfg = CorridorConfig()
    with pytest.raises(NonIntegralSpeed):
        kmh_to_cells(50.0, cfg)
    with pytest.raises(ConfigError):
        kmh_to_cells(0.0, cfg)
    with pytest.raises(ConfigError):
        CorridorConfig(base_limit_kmh=(80.0, 90.0))


def test_nearest_rounding_helper():
    cfg = CorridorConfig()
    assert kmh_to_cells_nearest(50.0, cfg) == 2   # half rounds to even
    assert kmh_to_cells_nearest(70.0, cfg) == 4
    assert kmh_to_cells_nearest(49.0, cfg) == 2
    assert kmh_to_cells_nearest(5.0, cfg) == 0
    assert kmh_to_cells_nearest(-3.0, cfg) == 0   # clamped, never negative


def test_cell_counts_and_segments():
    cfg = CorridorConfig()
    assert cfg.n_cells == 800
    assert cfg.n_segments == 16
    assert cfg.cells_per_segment == 50
    assert cfg.steps_per_minute == pytest.approx(60.0 / 1.8)
    assert cfg.minutes_to_steps(3) == 100
    assert cfg.minutes_to_steps(5) == 167   # rounds up, never loses coverage


def test_space_mapping_round_trip():
    cfg = CorridorConfig()
    assert km_to_cell(0.0, cfg) == 0
    assert km_to_cell(7.1, cfg) == 710
    assert cell_to_km(710, cfg) == pytest.approx(7.1)
    with pytest.raises(OutOfCorridor):
        km_to_cell(9.0, cfg)


def test_bottleneck_and_vsl_zone_default():
    cfg = CorridorConfig()
    b0, b1 = cfg.bottleneck_cells
    assert (b0, b1) == (710, 713)
    z0, z1 = cfg.vsl_zone_cells
    assert (z0, z1) == (0, 710)     # defaults to everything upstream


def test_base_limit_grid_shape_and_values():
    cfg = CorridorConfig()
    grid = base_limit_grid(cfg)
    assert grid.shape == (2, 800)
    assert grid.dtype == np.int64
    assert set(np.unique(grid[0])) == {1, 4}
    assert set(np.unique(grid[1])) == {1, 5}
    b0, b1 = cfg.bottleneck_cells
    assert (grid[:, b0:b1] == 1).all()
    assert (grid[0, :b0] == 4).all()


def test_lane_count_validation():
    with pytest.raises(ConfigError):
        CorridorConfig(n_lanes=0, base_limit_kmh=())
    with pytest.raises(ConfigError):
        CorridorConfig(length_km=1.003)


def test_json_round_trip(tmp_path):
    cfg = CorridorConfig(length_km=2.0, n_lanes=1, base_limit_kmh=(80.0,),
                         bottleneck_km=1.5, bottleneck_limit_kmh=40.0)
    path = tmp_path / "cfg.json"
    cfg.save(path)
    loaded = CorridorConfig.load(path)
    assert loaded == cfg
    assert CorridorConfig.from_json(cfg.to_json()) == cfg
