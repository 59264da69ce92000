import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_grid_mesh, random_rotation
from oracles import naive_inner
from ribbon.mesh import TriMesh, face_areas
from ribbon.synth import make_plate_pair
from ribbon.varifold import VarifoldSpec, VarifoldTarget, varifold_distance, varifold_gradient, varifold_inner

def random_small_mesh(rng) -> TriMesh:
    # at most a 3 x 3 vertex grid, hence at most 8 faces
    nx, ny = rng.integers(2, 4), rng.integers(2, 4)
    m = random_grid_mesh(rng, int(nx), int(ny), scale=rng.uniform(0.5, 2.0))
    return m.with_vertices(m.vertices + rng.normal(size=3))


def test_single_triangle_self_inner(unit_triangle):
    spec = VarifoldSpec.gaussian(1e4)
    a = face_areas(unit_triangle)[0]
    assert varifold_inner(spec, unit_triangle, unit_triangle) == pytest.approx(2 * a * a, rel=1e-8)


def test_parallel_triangles_closed_form(unit_triangle):
    spec = VarifoldSpec.gaussian(0.8)
    d = 1.3
    B = unit_triangle.with_vertices(unit_triangle.vertices + [0, 0, d])
    expect = 2 * 0.25 * np.exp(-d * d / (2 * 0.64))
    assert varifold_inner(spec, unit_triangle, B) == pytest.approx(expect, rel=1e-14)


def test_plate_far_apart_cross_term_vanishes():
    pair = make_plate_pair(n=6, side=2.0, h=1.0)
    spec = VarifoldSpec.gaussian(0.25)  # h = 4 sigma_W
    A, B = pair.inner, pair.outer
    aa, bb = varifold_inner(spec, A, A), varifold_inner(spec, B, B)
    ab = varifold_inner(spec, A, B)
    assert ab < 1e-3 * (aa + bb)
    assert varifold_distance(spec, A, B) == pytest.approx(aa + bb, rel=1e-3)


@given(st.integers(0, 2**32 - 1))
def test_inner_matches_quad_precision_loop(seed):
    rng = np.random.default_rng(seed)
    A, B = random_small_mesh(rng), random_small_mesh(rng)
    spec = VarifoldSpec.gaussian(rng.uniform(0.3, 3.0))
    exact = naive_inner(spec, A, B)
    got = varifold_inner(spec, A, B)
    assert abs(mpmath.mpf(got) - exact) <= 1e-12 * abs(exact)


@given(st.integers(0, 2**32 - 1))
def test_distance_properties(seed):
    rng = np.random.default_rng(seed)
    A, B = random_small_mesh(rng), random_small_mesh(rng)
    spec = VarifoldSpec.gaussian(rng.uniform(0.3, 3.0))
    aa = varifold_inner(spec, A, A)
    assert abs(varifold_distance(spec, A, A)) <= 1e-10 * aa
    d = varifold_distance(spec, A, B)
    assert d >= -1e-10 * aa
    assert d == pytest.approx(varifold_distance(spec, B, A), rel=1e-12, abs=1e-14 * aa)
    # face permutation
    perm = rng.permutation(A.n_faces)
    Ap = TriMesh(A.vertices, A.faces[perm])
    assert varifold_distance(spec, Ap, B) == pytest.approx(d, rel=1e-10, abs=1e-12 * aa)
    # rigid motion of both
    R, t = random_rotation(rng), rng.normal(size=3) * 5
    Am, Bm = A.with_vertices(A.vertices @ R.T + t), B.with_vertices(B.vertices @ R.T + t)
    assert varifold_distance(spec, Am, Bm) == pytest.approx(d, rel=1e-10, abs=1e-12 * aa)
    # winding flip is invisible to the unoriented varifold
    assert varifold_distance(spec, A.flipped(), B) == pytest.approx(d, rel=1e-10, abs=1e-12 * aa)


def test_gradient_zero_at_identity(rng):
    A = random_grid_mesh(rng, 4, 4)
    g = varifold_gradient(VarifoldSpec.gaussian(1.0), A, A)
    assert np.abs(g).max() < 1e-8 * A.bbox_diagonal()


@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_fd(seed):
    rng = np.random.default_rng(seed)
    A, B = random_grid_mesh(rng, 3, 3), random_grid_mesh(rng, 3, 4)
    spec = VarifoldSpec.gaussian(rng.uniform(0.5, 2.0))
    g = varifold_gradient(spec, A, B)
    h = 1e-6 * A.bbox_diagonal()
    fd = np.zeros_like(A.vertices)
    for idx in np.ndindex(A.vertices.shape):
        xp, xm = A.vertices.copy(), A.vertices.copy()
        xp[idx] += h
        xm[idx] -= h
        fd[idx] = (varifold_distance(spec, A.with_vertices(xp), B) - varifold_distance(spec, A.with_vertices(xm), B)) / (2 * h)
    assert np.abs(g - fd).max() <= 1e-5 * np.abs(fd).max()


def test_translated_copy_gradient_points_forward(rng):
    B = random_grid_mesh(rng, 4, 4)
    A = B.with_vertices(B.vertices + [0.05, 0, 0])
    g = varifold_gradient(VarifoldSpec.gaussian(1.0), A, B)
    assert g.mean(axis=0)[0] > 0


def test_target_cache_matches_functions(rng):
    A, B = random_grid_mesh(rng), random_grid_mesh(rng)
    spec = VarifoldSpec.gaussian(1.2)
    tgt = VarifoldTarget(spec, B)
    assert tgt.distance(A.vertices, A.faces) == pytest.approx(varifold_distance(spec, A, B), rel=1e-12)
