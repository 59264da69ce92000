import numpy as np
import pytest
from hypothesis import given, strategies as st

from ribbon.kernels import (
    ControlField,
    KernelSpec,
    field_eval,
    field_jacobian,
    gaussian_matrix,
    gram_apply,
    k_eval,
    kernel_matrix,
)

SPEC = KernelSpec(1.7)


def test_k_closed_forms():
    s = SPEC.width
    x = np.array([0.3, -1.0, 2.0])
    assert k_eval(SPEC, x, x) == 1.0
    assert k_eval(SPEC, x, x + [s, 0, 0]) == pytest.approx(np.exp(-0.5), rel=1e-15)
    assert k_eval(SPEC, x, x + [0, 0, 3 * s]) == pytest.approx(np.exp(-4.5), rel=1e-14)


def test_invalid_width():
    with pytest.raises(ValueError):
        KernelSpec(0.0)
    with pytest.raises(ValueError):
        KernelSpec(1.0, family="laplace")


def test_control_field_shapes():
    with pytest.raises(ValueError):
        ControlField(np.zeros((3, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ControlField(np.zeros((1, 3)), np.array([[np.nan, 0, 0]]))


def test_field_eval_single_center():
    c = np.array([1.0, 2, 3])
    cf = ControlField(c[None], np.array([[1.0, 0, 0]]))
    np.testing.assert_array_equal(field_eval(SPEC, cf, c), [1, 0, 0])
    cf0 = ControlField(c[None], np.zeros((1, 3)))
    np.testing.assert_array_equal(field_eval(SPEC, cf0, c + 1), [0, 0, 0])


@given(st.integers(0, 2**32 - 1))
def test_field_eval_matches_loop(seed):
    rng = np.random.default_rng(seed)
    c, a, x = rng.normal(size=(5, 3)), rng.normal(size=(5, 3)), rng.normal(size=3)
    expect = sum(k_eval(SPEC, x, c[i]) * a[i] for i in range(5))
    np.testing.assert_allclose(field_eval(SPEC, ControlField(c, a), x), expect, rtol=1e-14, atol=1e-15)


def test_jacobian_far_and_peak():
    c = np.zeros((1, 3))
    cf = ControlField(c, np.array([[1.0, -2.0, 0.5]]))
    assert np.abs(field_jacobian(SPEC, cf, np.array([11 * SPEC.width, 0, 0]))).max() < 1e-20
    np.testing.assert_array_equal(field_jacobian(SPEC, cf, c[0]), np.zeros((3, 3)))


@given(st.integers(0, 2**32 - 1))
def test_jacobian_matches_fd(seed):
    rng = np.random.default_rng(seed)
    cf = ControlField(rng.normal(size=(6, 3)), rng.normal(size=(6, 3)))
    x = rng.normal(size=3)
    h = 1e-5 * SPEC.width
    fd = np.empty((3, 3))
    for b in range(3):
        e = np.zeros(3)
        e[b] = h
        fd[:, b] = (field_eval(SPEC, cf, x + e) - field_eval(SPEC, cf, x - e)) / (2 * h)
    J = field_jacobian(SPEC, cf, x)
    assert np.abs(J - fd).max() <= 1e-6 * np.abs(fd).max()


def test_gram_closed_forms():
    c = np.array([[0.0, 0, 0]])
    assert gram_apply(SPEC, c, np.zeros((1, 3))) == 0.0
    assert gram_apply(SPEC, c, np.array([[2.0, 0, 0]])) == 4.0
    c2 = np.array([[0.0, 0, 0], [SPEC.width, 0, 0]])
    a2 = np.array([[1.0, 0, 0], [1.0, 0, 0]])
    assert gram_apply(SPEC, c2, a2) == pytest.approx(2 + 2 * np.exp(-0.5), rel=1e-15)


@given(st.integers(0, 2**32 - 1))
def test_gram_positive_and_translation_invariant(seed):
    rng = np.random.default_rng(seed)
    c, a = rng.normal(size=(7, 3)) * 3, rng.normal(size=(7, 3))
    g = gram_apply(SPEC, c, a)
    assert g > 0
    t = rng.normal(size=3) * 10
    assert gram_apply(SPEC, c + t, a) == pytest.approx(g, rel=1e-12)
    x = rng.normal(size=3)
    cf, cft = ControlField(c, a), ControlField(c + t, a)
    np.testing.assert_allclose(field_eval(SPEC, cft, x + t), field_eval(SPEC, cf, x), rtol=1e-12, atol=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_kernel_symmetric_and_fast_path(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    K = kernel_matrix(SPEC, x, y)
    np.testing.assert_array_equal(K, kernel_matrix(SPEC, y, x).T)
    np.testing.assert_allclose(gaussian_matrix(x, y, SPEC.width), K, rtol=1e-12, atol=1e-15)
