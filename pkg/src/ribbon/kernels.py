"""Gaussian reproducing kernels and kernel-expanded vector fields.

A field is ``v(x) = sum_i k(x, c_i) alpha_i`` with the scalar Gaussian
``k(x, y) = exp(-|x - y|^2 / (2 sigma^2))`` times the 3x3 identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KernelSpec:
    width: float
    family: str = "gaussian"

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"kernel width must be positive, got {self.width}")
        if self.family != "gaussian":
            raise ValueError(f"unsupported kernel family {self.family!r}")


@dataclass(frozen=True, eq=False)
class ControlField:
    centers: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        a = np.atleast_2d(np.asarray(self.alpha, dtype=np.float64))
        if c.shape != a.shape or c.shape[1] != 3:
            raise ValueError(f"centers {c.shape} and coefficients {a.shape} must both be (N, 3)")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(a))):
            raise ValueError("control field entries must be finite")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "alpha", a)


def sqdist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared distances ``(M, N)`` computed from differences."""
    d = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def gaussian_matrix(x: np.ndarray, y: np.ndarray, width: float) -> np.ndarray:
    """``exp(-|x_i - y_j|^2 / 2 width^2)`` via the expanded square, built in place.

    Cheaper than :func:`sqdist` for large inputs; callers should centre the
    points first so the expansion does not lose digits.
    """
    out = x @ y.T
    out *= -2.0
    out += np.einsum("ia,ia->i", x, x)[:, None]
    out += np.einsum("ia,ia->i", y, y)[None, :]
    np.maximum(out, 0.0, out=out)
    out *= -0.5 / width**2
    return np.exp(out, out=out)


def kernel_matrix(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.exp(-sqdist(np.atleast_2d(x), np.atleast_2d(y)) / (2.0 * spec.width**2))


def k_eval(spec: KernelSpec, x, y) -> float:
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.exp(-np.dot(d, d) / (2.0 * spec.width**2)))


def field_eval(spec: KernelSpec, cf: ControlField, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = kernel_matrix(spec, x, cf.centers) @ cf.alpha
    return out[0] if x.ndim == 1 else out


def field_jacobian(spec: KernelSpec, cf: ControlField, x: np.ndarray) -> np.ndarray:
    """``Dv`` with ``(Dv)[a, b] = d v_a / d x_b``; shape (3, 3) or (M, 3, 3)."""
    x = np.asarray(x, dtype=np.float64)
    xs = np.atleast_2d(x)
    d = xs[:, None, :] - cf.centers[None, :, :]
    k = np.exp(-np.einsum("ijk,ijk->ij", d, d) / (2.0 * spec.width**2))
    grad = -(k / spec.width**2)[:, :, None] * d
    out = np.einsum("ja,ijb->iab", cf.alpha, grad)
    return out[0] if x.ndim == 1 else out


def gram_apply(spec: KernelSpec, centers: np.ndarray, alpha: np.ndarray) -> float:
    """``sum_ij k(c_i, c_j) alpha_i . alpha_j``, the squared RKHS norm of the field."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    if centers.shape != alpha.shape:
        raise ValueError("centers and coefficients must have matching shapes")
    K = kernel_matrix(spec, centers, centers)
    return float(np.einsum("ia,ia->", alpha, K @ alpha))


def default_width_v(inner_diagonal: float) -> float:
    return 0.4 * inner_diagonal


def default_width_w(outer_median_edge: float) -> float:
    return 2.0 * outer_median_edge
