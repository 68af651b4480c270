"""Speed-density calibration on constructed counter records with known curves."""

from datetime import datetime

import numpy as np
import pytest

from corridorctl.errors import (DegenerateBin, InsufficientData, RangeError,
                                SchemaError)
from corridorctl.fundamental import (CounterSample, FundamentalDiagram,
                                     FundamentalDiagramModel, density_from_speed,
                                     fit_fd, flow_from_speed, read_counter_csv,
                                     write_counter_csv)

T0 = datetime(2025, 6, 1, 6, 0)


def samples_at(pairs) -> list[CounterSample]:
    """One counter record per (density, speed): flow chosen to invert exactly."""
    return [CounterSample(T0, 0.0, k * v / 60.0, v) for k, v in pairs]


def linear_curve_samples() -> list[CounterSample]:
    # five samples per bin, medians exactly on v = 80 - 2k at bin centres
    pairs = []
    for centre, v in ((5, 70.0), (15, 50.0), (25, 30.0)):
        pairs += [(centre + d, v) for d in (-2, -1, 0, 1, 2)]
    return samples_at(pairs)


def test_fit_places_knots_at_bin_centres():
    fd = fit_fd(linear_curve_samples())
    assert fd.knot_density == (5.0, 15.0, 25.0)
    np.testing.assert_allclose(fd.knot_speed, (70.0, 50.0, 30.0), atol=1e-9)
    assert fd.v_free_kmh == fd.knot_speed[0]


def test_capacity_sits_at_the_interior_vertex():
    # v = 80 - 2k on [15, 25]: flow k*v/60 peaks at k = 20 -> 40/3 veh/min
    fd = fit_fd(linear_curve_samples())
    assert abs(fd.q_max_veh_min - 40.0 / 3.0) < 1e-9


def test_median_shrugs_off_an_outlier():
    fd = fit_fd(linear_curve_samples() + samples_at([(14, 90.0)]))
    np.testing.assert_allclose(fd.knot_speed, (70.0, 50.0, 30.0), atol=1e-9)


def test_thin_bins_pool_into_the_nearest():
    pairs = ([(5 + d, 70.0) for d in (-2, -1, 0, 1, 2)]
             + [(15, 55.0), (16, 55.0)]
             + [(25 + d, 30.0) for d in (-2, -1, 0, 1, 2)])
    fd = fit_fd(samples_at(pairs))
    assert fd.knot_density == (5.0, 25.0)
    np.testing.assert_allclose(fd.knot_speed, (70.0, 30.0), atol=1e-9)


def test_pooling_never_collapses_below_two_bins():
    fd = fit_fd(samples_at([(5, 70.0), (25, 30.0)]))
    assert fd.knot_density == (5.0, 25.0)


def test_isotonic_repair_preserves_weighted_level():
    pairs = ([(5 + d, 60.0) for d in (-2, -1, 0, 1, 2)]
             + [(15 + d, 65.0) for d in (-2, -1, 0, 1, 2)]
             + [(25 + d, 30.0) for d in (-2, -1, 0, 1, 2)])
    fd = fit_fd(samples_at(pairs))
    np.testing.assert_allclose(fd.knot_speed[:2], (62.5, 62.5), atol=1e-6)
    assert fd.knot_speed[0] > fd.knot_speed[1] > fd.knot_speed[2]


def test_jam_anchor_extends_the_congested_branch():
    fd = fit_fd(linear_curve_samples(), jam_density_veh_km=100.0)
    assert fd.knot_density[-1] == 100.0
    assert abs(fd.knot_speed[-1] - 3.0) < 1e-6
    # inversion below the slowest observed bin lands between the two knots
    expect = 25.0 + 75.0 * (30.0 - 5.0) / (30.0 - 3.0)
    assert abs(density_from_speed(fd, 5.0) - expect) < 1e-9

    plain = fit_fd(linear_curve_samples(), jam_density_veh_km=20.0)
    assert plain.knot_density[-1] == 25.0     # anchor inside the span: ignored


def test_inversion_roundtrip_and_clamps():
    fd = fit_fd(linear_curve_samples())
    assert abs(density_from_speed(fd, 50.0) - 15.0) < 1e-9
    assert abs(flow_from_speed(fd, 50.0) - 12.5) < 1e-9
    assert abs(fd.speed_at_density(10.0) - 60.0) < 1e-9
    assert density_from_speed(fd, 200.0) == 5.0
    assert density_from_speed(fd, 1.0) == 25.0
    with pytest.raises(RangeError):
        density_from_speed(fd, 0.0)
    out = density_from_speed(fd, np.array([50.0, 30.0]))
    np.testing.assert_allclose(out, [15.0, 25.0], atol=1e-9)


def test_fit_rejects_degenerate_inputs():
    with pytest.raises(InsufficientData):
        fit_fd([CounterSample(T0, 0.0, 0.0, float("nan"))])
    with pytest.raises(DegenerateBin):
        fit_fd(samples_at([(10, 50.0), (10, 50.0)]))
    with pytest.raises(InsufficientData):
        fit_fd(samples_at([(3, 70.0), (4, 69.0), (5, 68.0)]))   # one bin


def test_diagram_validation():
    with pytest.raises(InsufficientData):
        FundamentalDiagram((5.0,), (70.0,), 10.0, 70.0, 1.0)
    with pytest.raises(InsufficientData):
        FundamentalDiagram((5.0, 15.0), (50.0, 50.0), 10.0, 50.0, 1.0)
    with pytest.raises(InsufficientData):
        FundamentalDiagram((15.0, 5.0), (30.0, 50.0), 10.0, 50.0, 1.0)


def test_density_property_needs_positive_speed():
    with pytest.raises(RangeError):
        CounterSample(T0, 0.0, 10.0, 0.0).density_veh_km


def test_counter_csv_roundtrip(tmp_path):
    rows = [CounterSample(T0, 1.5, 12.25, 68.37),
            CounterSample(T0, 1.5, 0.0, float("nan"))]
    path = tmp_path / "counters.csv"
    write_counter_csv(rows, path)
    back = read_counter_csv(path)
    assert back[0].minute == T0 and back[0].station_km == 1.5
    assert abs(back[0].flow_veh_min - 12.25) < 1e-9
    assert abs(back[0].speed_kmh - 68.37) < 1e-9
    assert np.isnan(back[1].speed_kmh)

    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        read_counter_csv(bad)


def test_diagram_json_roundtrip(tmp_path):
    fd = fit_fd(linear_curve_samples(), jam_density_veh_km=100.0)
    path = tmp_path / "fd.json"
    fd.save(path)
    assert FundamentalDiagram.load(path) == fd


def test_estimator_wrapper():
    model = FundamentalDiagramModel().fit(linear_curve_samples())
    assert abs(model.predict_density(50.0) - 15.0) < 1e-9
    assert abs(model.predict_flow(50.0) - 12.5) < 1e-9
    with pytest.raises(InsufficientData):
        FundamentalDiagramModel().predict_density(50.0)
