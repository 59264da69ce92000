import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ribbon.mesh import TriMesh
from ribbon.solver import Trajectory
from ribbon.synth import make_plate_pair
from ribbon.thickness import (boundary_filter, build_report, column_lengths, endpoint_correction,
                              freesurfer_distance, histogram, pool_reports, thickness_stats)

from conftest import icosphere
from oracles import brute_freesurfer


def _straight_traj(inner: TriMesh, offsets: np.ndarray, T: int = 4) -> Trajectory:
    """Columns moving uniformly by ``offsets`` (per vertex) over ``T`` steps."""
    s = np.linspace(0.0, 1.0, T + 1)[:, None, None]
    states = inner.vertices[None] + s * offsets[None]
    return Trajectory(states, np.zeros((T,) + inner.vertices.shape), inner.faces)


def test_column_length_of_straight_and_bent_columns():
    pair = make_plate_pair(4, 3.0, 1.0)
    n = pair.inner.n_vertices
    traj = _straight_traj(pair.inner, np.tile([0.0, 0.0, 2.0], (n, 1)))
    np.testing.assert_allclose(column_lengths(traj), 2.0, rtol=1e-14)
    # an L-shaped column: up 1 then sideways 1
    states = np.zeros((3, 1, 3))
    states[1, 0] = [0, 0, 1]
    states[2, 0] = [1, 0, 1]
    bent = Trajectory(states, np.zeros((2, 1, 3)), np.zeros((0, 3), dtype=np.int64))
    assert column_lengths(bent)[0] == pytest.approx(2.0)


def test_column_length_zero_for_static_trajectory():
    pair = make_plate_pair(3, 2.0, 1.0)
    traj = _straight_traj(pair.inner, np.zeros((pair.inner.n_vertices, 3)))
    assert np.all(column_lengths(traj) == 0.0)


@given(st.integers(0, 2**31 - 1))
def test_freesurfer_matches_exhaustive_loop(seed):
    rng = np.random.default_rng(seed)
    n_in, n_out = rng.integers(3, 31, size=2)
    inner = TriMesh(rng.normal(size=(n_in, 3)), np.zeros((0, 3), dtype=np.int64))
    outer = TriMesh(rng.normal(size=(n_out, 3)) + [0, 0, 1], np.zeros((0, 3), dtype=np.int64))
    np.testing.assert_array_equal(freesurfer_distance(inner, outer), brute_freesurfer(inner, outer))


def test_freesurfer_identical_surfaces_is_zero():
    s = icosphere(1)
    assert np.all(freesurfer_distance(s, s) == 0.0)


def test_freesurfer_concentric_spheres():
    a, b = icosphere(2, 1.0), icosphere(2, 1.5)
    np.testing.assert_allclose(freesurfer_distance(a, b), 0.5, atol=1e-12)


def test_endpoint_correction_extends_short_columns():
    # columns stop at z=1.9 below an outer plate at z=2: correction recovers 2.0
    pair = make_plate_pair(10, 10.0, 2.0)
    n = pair.inner.n_vertices
    traj = _straight_traj(pair.inner, np.tile([0.0, 0.0, 1.9], (n, 1)))
    corrected, fallback = endpoint_correction(traj, pair.outer)
    assert not fallback.any()
    np.testing.assert_allclose(corrected, 2.0, atol=1e-12)


def test_endpoint_correction_pulls_back_overshoot():
    pair = make_plate_pair(6, 5.0, 2.0)
    n = pair.inner.n_vertices
    traj = _straight_traj(pair.inner, np.tile([0.0, 0.0, 2.3], (n, 1)))
    corrected, fallback = endpoint_correction(traj, pair.outer)
    assert not fallback.any()
    np.testing.assert_allclose(corrected, 2.0, atol=1e-12)


def test_endpoint_correction_parallel_direction_falls_back():
    pair = make_plate_pair(6, 5.0, 2.0)
    n = pair.inner.n_vertices
    traj = Trajectory(
        np.stack([pair.inner.vertices, pair.inner.vertices + [0, 0, 1.0], pair.inner.vertices + [0.5, 0, 1.0]]),
        np.zeros((2, n, 3)), pair.inner.faces)
    corrected, fallback = endpoint_correction(traj, pair.outer)
    assert fallback.all()
    np.testing.assert_allclose(corrected, column_lengths(traj))


def test_endpoint_correction_window_limits():
    # a tiny last step cannot be extended across a gap of many step lengths
    pair = make_plate_pair(4, 3.0, 2.0)
    n = pair.inner.n_vertices
    states = np.stack([pair.inner.vertices, pair.inner.vertices + [0, 0, 1.0], pair.inner.vertices + [0, 0, 1.1]])
    traj = Trajectory(states, np.zeros((2, n, 3)), pair.inner.faces)
    _, fallback = endpoint_correction(traj, pair.outer)
    assert fallback.all()


def test_boundary_filter_plate_interior():
    pair = make_plate_pair(10, 10.0, 2.0)
    assert boundary_filter(pair.inner, 1).sum() == 64
    assert boundary_filter(pair.inner, 2).sum() == 36
    assert boundary_filter(pair.inner, 0).all()


def test_boundary_filter_closed_mesh_keeps_everything():
    s = icosphere(1)
    assert boundary_filter(s, 3).all()


def test_boundary_filter_warns_when_empty():
    pair = make_plate_pair(4, 3.0, 1.0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        mask = boundary_filter(pair.inner, 5)
    assert not mask.any()
    assert any("excludes every vertex" in str(x.message) for x in w)


def test_boundary_filter_rejects_negative_rings():
    with pytest.raises(ValueError):
        boundary_filter(make_plate_pair(3, 2.0, 1.0).inner, -1)


def test_stats_respect_mask():
    rep = thickness_stats(np.array([1.0, 2.0, 3.0, 4.0]), np.array([True, False, True, False]), bins=4, upper=4.0)
    assert rep.summary["count"] == 2
    assert rep.summary["mean"] == 2.0
    np.testing.assert_array_equal(rep.included, [1.0, 3.0])
    assert rep.hist_counts.sum() == 2


def test_stats_empty_mask_raises():
    with pytest.raises(ValueError, match="empty"):
        thickness_stats(np.ones(3), np.zeros(3, dtype=bool))


def test_stats_reject_negative_lengths():
    with pytest.raises(ValueError):
        thickness_stats(np.array([1.0, -0.1]))


def test_histogram_clips_into_last_bin():
    edges, counts = histogram(np.array([0.5, 1.5, 10.0]), bins=2, upper=2.0)
    np.testing.assert_array_equal(edges, [0.0, 1.0, 2.0])
    np.testing.assert_array_equal(counts, [1, 2])


def test_pooling_concatenates_included_values():
    a = thickness_stats(np.array([1.0, 2.0]), np.array([True, False]))
    b = thickness_stats(np.array([3.0, 5.0]), np.array([True, True]))
    pooled = pool_reports([a, b], bins=5, upper=5.0)
    assert pooled.summary["count"] == 3
    assert pooled.summary["mean"] == pytest.approx(3.0)


def test_build_report_on_exact_columns():
    pair = make_plate_pair(10, 10.0, 2.0)
    n = pair.inner.n_vertices
    traj = _straight_traj(pair.inner, np.tile([0.0, 0.0, 2.0], (n, 1)))
    rep = build_report(traj, pair.outer)
    assert rep.summary["count"] == 64
    np.testing.assert_allclose(rep.included, 2.0, atol=1e-12)
    np.testing.assert_allclose(rep.baseline, 2.0, atol=1e-12)
    assert rep.extra["fallback_count"] == 0
