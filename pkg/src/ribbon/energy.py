"""Per-timestep hybrid norm, normality constraint residuals and their gradients.

For a field with centres at the surface vertices ``x`` and coefficients ``alpha``:

    hybrid(x, alpha) = alpha^T K alpha + lam * sum_f a_f |Dv(c_f)|_F^2
    C_i = v_i - (v_i . n_i) n_i

where ``c_f``/``a_f`` are face barycenters/areas and ``n_i`` the area-weighted
vertex normals of the surface.  :func:`step_terms` evaluates everything the
solver needs for one time step and :meth:`StepTerms.backward` returns exact
gradients with respect to ``alpha`` and ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import ControlField, KernelSpec, gaussian_matrix, gram_apply
from .mesh import (
    TriMesh,
    face_geometry,
    face_geometry_vjp,
    vertex_normals_array,
    vertex_normals_vjp,
)


@dataclass(frozen=True)
class HybridSpec:
    kernel: KernelSpec
    lam: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("hybrid weight lam must be nonnegative")


class StepTerms:
    """Forward quantities of one time step, cached for the backward pass."""

    def __init__(self, x: np.ndarray, faces: np.ndarray, alpha: np.ndarray, spec: HybridSpec,
                 constraints: bool = True):
        self.faces = faces
        self.spec = spec
        s2 = spec.kernel.width**2
        self.origin = x.mean(axis=0)
        self.x_abs = x
        self.x = x - self.origin
        self.alpha = alpha
        self.K = gaussian_matrix(self.x, self.x, spec.kernel.width)
        self.v = self.K @ alpha
        self.gram = float(np.einsum("ia,ia->", alpha, self.v))

        self.hybrid = self.gram
        if spec.lam > 0:
            c, _, a = face_geometry(x, faces)
            self.c = c - self.origin
            self.a = a
            self.Kc = gaussian_matrix(self.c, self.x, spec.kernel.width)
            self.vc = self.Kc @ alpha
            self.P = (alpha[:, :, None] * self.x[:, None, :]).reshape(-1, 9)
            KP = (self.Kc @ self.P).reshape(-1, 3, 3)
            self.Dv = -(self.vc[:, :, None] * self.c[:, None, :] - KP) / s2
            self.frob = np.einsum("fab,fab->f", self.Dv, self.Dv)
            self.hybrid = self.gram + spec.lam * float(self.frob @ a)

        if constraints:
            self.n = vertex_normals_array(x, faces)
            self.vn = np.einsum("ia,ia->i", self.v, self.n)
            self.C = self.v - self.vn[:, None] * self.n

    def backward(self, w_hybrid: float, g_C: np.ndarray | None = None, g_v: np.ndarray | None = None):
        """Gradients of ``w_hybrid * hybrid + <g_C, C> + <g_v, v>`` w.r.t. (alpha, x)."""
        s2 = self.spec.kernel.width**2
        lam = self.spec.lam
        alpha, x, K = self.alpha, self.x, self.K
        N = x.shape[0]
        gv = np.zeros((N, 3)) if g_v is None else g_v.copy()
        g_x = np.zeros((N, 3))

        if g_C is not None:
            n, v = self.n, self.v
            gn_dot = np.einsum("ia,ia->i", g_C, n)
            gv += g_C - gn_dot[:, None] * n
            g_n = -gn_dot[:, None] * v - self.vn[:, None] * g_C
            g_x += vertex_normals_vjp(self.x_abs, self.faces, g_n)

        # v = K alpha and the Gram energy share the kernel matrix
        g_alpha = K @ gv + 2.0 * w_hybrid * self.v
        B = np.hstack([gv, alpha, (2.0 * w_hybrid) * alpha]) @ np.hstack([alpha, gv, alpha]).T
        B *= K
        g_x -= (B.sum(1)[:, None] * x - B @ x) / s2

        if lam > 0 and w_hybrid != 0.0:
            c, Kc = self.c, self.Kc
            G = (2.0 * w_hybrid * lam) * self.a[:, None, None] * self.Dv
            g_a = w_hybrid * lam * self.frob
            Gflat = G.reshape(-1, 9)
            Gc = np.einsum("fab,fb->fa", G, c)
            KG = (Kc.T @ Gflat).reshape(-1, 3, 3)
            g_alpha -= (Kc.T @ Gc - np.einsum("jab,jb->ja", KG, x)) / s2

            S = np.hstack([Gc, -Gflat]) @ np.hstack([alpha, self.P]).T
            S *= Kc
            g_c = -np.einsum("fab,fa->fb", G, self.vc) / s2
            g_c += (S.sum(1)[:, None] * c - S @ x) / s2**2
            g_x += np.einsum("jab,ja->jb", KG, alpha) / s2
            g_x -= (S.T @ c - S.sum(0)[:, None] * x) / s2**2
            g_x += face_geometry_vjp(self.x_abs, self.faces, g_centers=g_c, g_areas=g_a)
        return g_alpha, g_x


def hybrid_norm(spec: HybridSpec, surface: TriMesh, cf: ControlField) -> float:
    """``|v|_V^2 + lam * sum_f |Dv(c_f)|_F^2 a_f`` for a field centred on the surface vertices."""
    gram = gram_apply(spec.kernel, cf.centers, cf.alpha)
    if spec.lam == 0:
        return gram
    t = StepTerms(surface.vertices, surface.faces, cf.alpha, spec, constraints=False)
    return gram + spec.lam * float(t.frob @ t.a)


@dataclass(frozen=True, eq=False)
class ConstraintResiduals:
    C: np.ndarray
    normals: np.ndarray
    velocity: np.ndarray

    @property
    def max_norm(self) -> float:
        return float(np.sqrt(np.einsum("ia,ia->i", self.C, self.C)).max()) if len(self.C) else 0.0


def constraint_eval(surface: TriMesh, cf: ControlField, kernel: KernelSpec) -> ConstraintResiduals:
    """Tangential component of the field at every vertex of ``surface``."""
    from .kernels import field_eval

    v = field_eval(kernel, cf, surface.vertices)
    n = vertex_normals_array(surface.vertices, surface.faces)
    C = v - np.einsum("ia,ia->i", v, n)[:, None] * n
    return ConstraintResiduals(C, n, v)


def energy_gradients(spec: HybridSpec, surface: TriMesh, alpha: np.ndarray,
                     multipliers: np.ndarray | None = None, penalty: float = 0.0):
    """Value and gradients of ``hybrid + sum_i (-mu_i . C_i + penalty/2 |C_i|^2)``.

    The field centres are the surface vertices, so the position gradient
    includes the motion of the centres.  Returns ``(value, g_alpha, g_x)``.
    """
    t = StepTerms(surface.vertices, surface.faces, np.asarray(alpha, dtype=np.float64), spec)
    mu = np.zeros_like(t.C) if multipliers is None else multipliers
    value = t.hybrid - float(np.einsum("ia,ia->", mu, t.C)) + 0.5 * penalty * float(np.einsum("ia,ia->", t.C, t.C))
    g_alpha, g_x = t.backward(1.0, g_C=-mu + penalty * t.C)
    return value, g_alpha, g_x
