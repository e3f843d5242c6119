"""
Tests for ssdo_te.traffic module.
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for testing
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from ssdo_te.errors import DegenerateWeights, InputError
from ssdo_te.topology import UNBOUNDED, Topology, complete_dcn_topology
from ssdo_te.traffic import (
    DemandMatrix,
    DemandSeries,
    demand_series_from_gravity,
    demands_to_csv,
    gravity_demands,
    load_demands,
    load_series,
    manual_demands,
    perturb_series,
    series_to_json,
    validate_against,
)


def test_demand_matrix_rejects_diagonal():
    """Test that self-demand is rejected."""
    with pytest.raises(InputError, match="diagonal"):
        DemandMatrix(np.eye(3))


def test_demand_matrix_rejects_negative():
    """Test that negative demands are rejected."""
    demand = np.zeros((2, 2))
    demand[0, 1] = -1.0
    with pytest.raises(InputError):
        DemandMatrix(demand)


def test_demanded_pairs_sorted():
    """Test that demanded pairs come out in ascending (s, d) order."""
    demand = np.zeros((3, 3))
    demand[2, 0] = 1.0
    demand[0, 2] = 2.0
    demand[1, 0] = 0.5
    assert DemandMatrix(demand).demanded_pairs() == [(0, 2), (1, 0), (2, 0)]


def test_gravity_uniform_on_complete_graph():
    """Test that K_3 with uniform capacity spreads 6 units evenly."""
    dm = gravity_demands(complete_dcn_topology(3, 1.0), 6.0)
    expected = np.ones((3, 3)) - np.eye(3)
    np.testing.assert_allclose(dm.demand, expected)


def test_gravity_proportional_to_weights():
    """Test D_ij proportional to w_i * w_j."""
    cap = np.zeros((3, 3))
    cap[0, 1] = cap[1, 0] = 4.0
    cap[1, 2] = cap[2, 1] = 1.0
    topo = Topology(("A", "B", "C"), cap)
    dm = gravity_demands(topo, 100.0)
    # weights: A = 8, B = 10, C = 2
    assert dm.demand[0, 1] / dm.demand[0, 2] == pytest.approx(10.0 / 2.0)
    assert dm.total == pytest.approx(100.0)


def test_gravity_unbounded_edges_use_large_weight():
    """Test that unbounded edges contribute the configured weight."""
    cap = np.array([[0.0, UNBOUNDED], [1.0, 0.0]])
    dm = gravity_demands(Topology(("A", "B"), cap), 2.0, unbounded_weight=1.0)
    np.testing.assert_allclose(dm.demand, [[0.0, 1.0], [1.0, 0.0]])


def test_gravity_degenerate_weights():
    """Test that an edgeless topology cannot produce a gravity matrix."""
    with pytest.raises(DegenerateWeights):
        gravity_demands(Topology(("A", "B"), np.zeros((2, 2))), 1.0)


def test_gravity_rejects_bad_volume():
    """Test that total volume must be positive."""
    with pytest.raises(InputError):
        gravity_demands(complete_dcn_topology(3, 1.0), 0.0)


def test_gravity_noise_is_seeded_and_keeps_total():
    """Test that noisy gravity is reproducible and still sums to the volume."""
    topo = complete_dcn_topology(5, 1.0)
    first = gravity_demands(topo, 50.0, seed=4, noise=0.3)
    second = gravity_demands(topo, 50.0, seed=4, noise=0.3)
    other = gravity_demands(topo, 50.0, seed=5, noise=0.3)
    np.testing.assert_array_equal(first.demand, second.demand)
    assert not np.array_equal(first.demand, other.demand)
    assert first.total == pytest.approx(50.0)


def test_demand_series_from_gravity():
    """Test series length and per-snapshot totals."""
    series = demand_series_from_gravity(complete_dcn_topology(4, 1.0), 10.0, 6, seed=1)
    assert len(series) == 6
    assert series.stacked().shape == (6, 4, 4)
    for snapshot in series.snapshots:
        assert snapshot.total == pytest.approx(10.0)


def test_perturb_variance_matches_scale():
    """Test that base 1000 alternating by 1 with scale 2 gives noise variance ~2."""
    n = 40
    base = np.full((n, n), 1000.0)
    np.fill_diagonal(base, 0.0)
    high = base + 1.0
    np.fill_diagonal(high, 0.0)
    series = DemandSeries((DemandMatrix(base), DemandMatrix(high)))

    perturbed = perturb_series(series, scale=2.0, seed=0)
    noise = perturbed.stacked() - series.stacked()
    off = ~np.eye(n, dtype=bool)
    values = noise[:, off].ravel()
    assert abs(values.mean()) < 0.1
    assert values.var() == pytest.approx(2.0, rel=0.1)


def test_perturb_ramp_uses_mean_square_of_changes():
    """Test that a steady ramp (zero spread of changes) still gets noise of 2**2 * scale."""
    steps = 400
    snapshots = []
    for t in range(steps):
        demand = np.zeros((2, 2))
        demand[0, 1] = 100.0 + 2.0 * t
        snapshots.append(DemandMatrix(demand))
    series = DemandSeries(tuple(snapshots))
    assert np.var(np.diff(series.stacked()[:, 0, 1])) == pytest.approx(0.0, abs=1e-12)

    noise = perturb_series(series, scale=3.0, seed=1).stacked()[:, 0, 1] - series.stacked()[:, 0, 1]
    assert noise.var() == pytest.approx(4.0 * 3.0, rel=0.2)
    assert not perturb_series(series, scale=3.0, seed=1).stacked()[:, 1, 0].any()


def test_perturb_constant_series_unchanged():
    """Test that a constant series has nothing to scale."""
    dm = gravity_demands(complete_dcn_topology(4, 1.0), 12.0)
    series = DemandSeries((dm, dm, dm))
    perturbed = perturb_series(series, scale=20.0, seed=3)
    np.testing.assert_array_equal(perturbed.stacked(), series.stacked())


def test_perturb_clamps_at_zero():
    """Test that perturbed demands stay nonnegative with zero diagonal."""
    low = np.zeros((3, 3))
    high = np.zeros((3, 3))
    high[0, 1] = 5.0
    series = DemandSeries((DemandMatrix(low), DemandMatrix(high)))
    perturbed = perturb_series(series, scale=20.0, seed=7).stacked()
    assert (perturbed >= 0).all()
    assert not perturbed[:, [0, 1, 2], [0, 1, 2]].any()


def test_perturb_is_seeded():
    """Test that the same seed reproduces the same perturbation."""
    topo = complete_dcn_topology(4, 1.0)
    series = demand_series_from_gravity(topo, 10.0, 3, seed=2)
    first = perturb_series(series, 5.0, seed=9).stacked()
    second = perturb_series(series, 5.0, seed=9).stacked()
    np.testing.assert_array_equal(first, second)


def test_perturb_rejects_bad_arguments():
    """Test that short series and nonpositive scales are rejected."""
    dm = DemandMatrix.zeros(2)
    with pytest.raises(InputError):
        perturb_series(DemandSeries((dm,)), 2.0)
    with pytest.raises(InputError):
        perturb_series(DemandSeries((dm, dm)), 0.0)


def test_manual_fig2():
    """Test the three-node fixture demands."""
    dm = manual_demands("fig2", complete_dcn_topology(3, 2.0))
    assert dm.demand[0, 1] == 2.0
    assert dm.demand[0, 2] == 1.0
    assert dm.demand[1, 2] == 1.0
    assert dm.total == 4.0


def test_manual_unknown_name():
    """Test that unknown fixtures are rejected."""
    with pytest.raises(InputError, match="unknown"):
        manual_demands("nope", complete_dcn_topology(3, 1.0))


def test_demand_csv_roundtrip(tmp_path):
    """Test that CSV output reloads bit-for-bit."""
    dm = gravity_demands(complete_dcn_topology(4, 1.0), 7.0, seed=1, noise=0.2)
    path = tmp_path / "demands.csv"
    path.write_text(demands_to_csv(dm))
    np.testing.assert_array_equal(load_demands(str(path)).demand, dm.demand)


def test_load_demands_json(tmp_path):
    """Test the JSON demand format."""
    path = tmp_path / "demands.json"
    path.write_text(json.dumps({"demand": [[0, 1.5], [2, 0]]}))
    assert load_demands(str(path)).demand[1, 0] == 2.0


def test_load_demands_bad_row_reports_line(tmp_path):
    """Test that a non-numeric cell names the CSV line."""
    path = tmp_path / "demands.csv"
    path.write_text("0,1\nx,0\n")
    with pytest.raises(InputError) as excinfo:
        load_demands(str(path))
    assert excinfo.value.line == 2
    assert "demands.csv:2:" in str(excinfo.value)


def test_load_demands_file_not_found():
    """Test that a missing demand file raises FileNotFoundError."""
    with pytest.raises(FileNotFoundError):
        load_demands("nonexistent.csv")


def test_series_json_roundtrip(tmp_path):
    """Test that a written series loads back with its interval label."""
    series = demand_series_from_gravity(complete_dcn_topology(3, 1.0), 3.0, 2, seed=0)
    path = tmp_path / "series.json"
    path.write_text(series_to_json(series))
    loaded = load_series(str(path))
    assert loaded.interval == "1s"
    np.testing.assert_array_equal(loaded.stacked(), series.stacked())


def test_validate_against_size_mismatch():
    """Test that demand and topology dimensions must agree."""
    with pytest.raises(InputError):
        validate_against(DemandMatrix.zeros(4), complete_dcn_topology(3, 1.0))
