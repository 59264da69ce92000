"""Varifold data attachment between triangulated surfaces.

Each face is a Dirac at its barycenter carrying its area and unoriented unit
normal.  The inner product of two surfaces is

    <A, B> = sum_f sum_g chi(c_f, c_g) (1 + (n_f . n_g)^2) a_f a_g

with a Gaussian spatial kernel ``chi``, and the attachment is the squared dual
norm ``<A, A> - 2 <A, B> + <B, B>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, gaussian_matrix
from .mesh import TriMesh, face_geometry, face_geometry_vjp


@dataclass(frozen=True)
class VarifoldSpec:
    kernel: KernelSpec

    @classmethod
    def gaussian(cls, width: float) -> "VarifoldSpec":
        return cls(KernelSpec(width))

    @property
    def width(self) -> float:
        return self.kernel.width


def _pair_terms(ca, na, aa, cb, nb, ab, width):
    chi = gaussian_matrix(ca, cb, width)
    cos = na @ nb.T
    return chi, cos


def _inner(ca, na, aa, cb, nb, ab, width) -> float:
    chi, cos = _pair_terms(ca, na, aa, cb, nb, ab, width)
    return float(aa @ (chi * (1.0 + cos * cos)) @ ab)


def _inner_grad_first(ca, na, aa, cb, nb, ab, width):
    """Value of <A, B> and its gradient w.r.t. A's (centers, normals, areas)."""
    chi, cos = _pair_terms(ca, na, aa, cb, nb, ab, width)
    base = chi * (1.0 + cos * cos)
    w = base * aa[:, None] * ab[None, :]
    value = float(w.sum())
    g_c = -(w.sum(1)[:, None] * ca - w @ cb) / width**2
    g_n = 2.0 * aa[:, None] * ((chi * cos) @ (ab[:, None] * nb))
    g_a = base @ ab
    return value, g_c, g_n, g_a


class _Geometry:
    __slots__ = ("c", "n", "a")

    def __init__(self, x, faces, origin):
        c, n, a = face_geometry(x, faces)
        self.c, self.n, self.a = c - origin, n, a


def varifold_inner(spec: VarifoldSpec, A: TriMesh, B: TriMesh) -> float:
    origin = A.vertices.mean(axis=0)
    ga = _Geometry(A.vertices, A.faces, origin)
    gb = _Geometry(B.vertices, B.faces, origin)
    return _inner(ga.c, ga.n, ga.a, gb.c, gb.n, gb.a, spec.width)


def varifold_distance(spec: VarifoldSpec, A: TriMesh, B: TriMesh) -> float:
    origin = A.vertices.mean(axis=0)
    ga = _Geometry(A.vertices, A.faces, origin)
    gb = _Geometry(B.vertices, B.faces, origin)
    s = spec.width
    aa = _inner(ga.c, ga.n, ga.a, ga.c, ga.n, ga.a, s)
    ab = _inner(ga.c, ga.n, ga.a, gb.c, gb.n, gb.a, s)
    bb = _inner(gb.c, gb.n, gb.a, gb.c, gb.n, gb.a, s)
    return aa - 2.0 * ab + bb


class VarifoldTarget:
    """Fixed target surface with its self inner product cached."""

    def __init__(self, spec: VarifoldSpec, target: TriMesh):
        self.spec = spec
        self.mesh = target
        self.origin = target.vertices.mean(axis=0)
        self.geom = _Geometry(target.vertices, target.faces, self.origin)
        g = self.geom
        self.self_inner = _inner(g.c, g.n, g.a, g.c, g.n, g.a, spec.width)

    def distance(self, x: np.ndarray, faces: np.ndarray) -> float:
        ga = _Geometry(x, faces, self.origin)
        gb, s = self.geom, self.spec.width
        aa = _inner(ga.c, ga.n, ga.a, ga.c, ga.n, ga.a, s)
        ab = _inner(ga.c, ga.n, ga.a, gb.c, gb.n, gb.a, s)
        return aa - 2.0 * ab + self.self_inner

    def distance_and_grad(self, x: np.ndarray, faces: np.ndarray):
        ga = _Geometry(x, faces, self.origin)
        gb, s = self.geom, self.spec.width
        aa, gc1, gn1, ga1 = _inner_grad_first(ga.c, ga.n, ga.a, ga.c, ga.n, ga.a, s)
        ab, gc2, gn2, ga2 = _inner_grad_first(ga.c, ga.n, ga.a, gb.c, gb.n, gb.a, s)
        value = aa - 2.0 * ab + self.self_inner
        # self term is symmetric in its arguments, hence the factor 2
        grad = face_geometry_vjp(x, faces, 2.0 * (gc1 - gc2), 2.0 * (gn1 - gn2), 2.0 * (ga1 - ga2))
        return value, grad


def varifold_gradient(spec: VarifoldSpec, A: TriMesh, B: TriMesh) -> np.ndarray:
    """Gradient of ``varifold_distance(A, B)`` with respect to A's vertices."""
    return VarifoldTarget(spec, B).distance_and_grad(A.vertices, A.faces)[1]
