"""Normal-constrained diffeomorphic evolution of an inner surface onto an outer one.

The velocity at step ``t`` is a Gaussian kernel field centred on the vertices of
the current surface ``q[t]`` with coefficients ``alpha[t]``; states follow the
explicit Euler scheme ``q[t+1] = q[t] + dt * v_t(q[t])``.  The discrete objective

    F = sum_t dt * hybrid(q[t], alpha[t]) + w_D * D(q[T], target)

is minimised subject to the tangential residuals ``C[t]`` vanishing, with an
augmented Lagrangian ``L = F + sum_t sum_i (-mu . C + rho/2 |C|^2)``.  Gradients
are exact derivatives of the discrete objective computed by a reverse sweep.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cholesky, solve_triangular
from scipy.optimize import minimize
from threadpoolctl import threadpool_limits

from .energy import HybridSpec, StepTerms
from .kernels import KernelSpec, default_width_v, default_width_w, gaussian_matrix
from .mesh import TriMesh, face_normals, vertex_normals_array
from .synth import SurfacePair
from .varifold import VarifoldSpec, VarifoldTarget

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class DivergenceError(SolverError):
    def __init__(self, step: int):
        super().__init__(f"non-finite state at time step {step}")
        self.step = step


@dataclass(frozen=True)
class SolverParams:
    T: int = 10
    w_D: float = 1.0
    sigma_v: float | None = None
    sigma_w: float | None = None
    lam: float = 1.0
    inner_maxiter: int = 300
    inner_gtol: float = 1e-9
    inner_ftol: float = 1e-13
    lbfgs_memory: int = 10
    rho0: float = 1.0
    gamma: float = 10.0
    rho_max: float = 1e8
    theta: float = 0.25
    ctol: float = 1e-3
    max_outer: int = 50
    precondition: str = "full"
    deterministic: bool = True

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must be at least 2")
        for name in ("inner_gtol", "inner_ftol", "ctol", "rho0", "rho_max", "w_D"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.precondition not in ("none", "gram", "full"):
            raise ValueError("precondition must be one of none, gram, full")
        if self.gamma <= 1 or not 0 < self.theta < 1:
            raise ValueError("need gamma > 1 and 0 < theta < 1")
        for name in ("sigma_v", "sigma_w"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.T

    def resolved(self, pair: SurfacePair) -> "SolverParams":
        """Fill default kernel widths from the surfaces."""
        sv = self.sigma_v if self.sigma_v is not None else default_width_v(pair.inner.bbox_diagonal())
        sw = self.sigma_w if self.sigma_w is not None else default_width_w(float(np.median(pair.outer.edge_lengths())))
        return replace(self, sigma_v=float(sv), sigma_w=float(sw))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``q[0..T]`` sharing one face list and controls ``alpha[0..T-1]``.

    ``states[t, u]`` is the coordinate map evaluated at vertex ``u`` and sheet ``t/T``.
    """

    states: np.ndarray
    controls: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.float64)
        c = np.asarray(self.controls, dtype=np.float64)
        if s.ndim != 3 or s.shape[2] != 3 or c.shape != (s.shape[0] - 1,) + s.shape[1:]:
            raise ValueError(f"inconsistent trajectory shapes {s.shape} / {c.shape}")
        for name, arr in (("states", s), ("controls", c)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        f = np.array(self.faces, dtype=np.int64)
        f.flags.writeable = False
        object.__setattr__(self, "faces", f)

    @property
    def T(self) -> int:
        return self.controls.shape[0]

    @property
    def dt(self) -> float:
        return 1.0 / self.T

    @property
    def n_vertices(self) -> int:
        return self.states.shape[1]

    def sheet(self, t: int) -> TriMesh:
        return TriMesh(self.states[t], self.faces)

    def columns(self) -> np.ndarray:
        """Polylines ``(N, T+1, 3)``: the path of every vertex over the sheets."""
        return np.transpose(self.states, (1, 0, 2))

    def velocities(self) -> np.ndarray:
        return np.diff(self.states, axis=0) / self.dt


@dataclass
class ALState:
    multipliers: np.ndarray
    penalty: float
    history: list = field(default_factory=list)


@dataclass
class ConvergenceReport:
    status: str
    records: list

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def outer_iterations(self) -> int:
        return len(self.records)

    @property
    def final(self) -> dict:
        return self.records[-1] if self.records else {}


@dataclass
class Evaluation:
    L: float
    F: float
    energy: float
    attachment: float
    states: np.ndarray
    C: np.ndarray
    v: np.ndarray
    grad: np.ndarray | None = None
    monitor: dict = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        return float(np.sqrt(np.einsum("tia,tia->ti", self.C, self.C)).max())

    @property
    def mean_speed(self) -> float:
        return float(np.sqrt(np.einsum("tia,tia->ti", self.v, self.v)).mean())

    @property
    def rel_violation(self) -> float:
        viol, speed = self.max_violation, self.mean_speed
        if viol == 0.0:
            return 0.0
        return viol / speed if speed > 0 else math.inf


class Problem:
    """Discrete optimal control problem for one surface pair."""

    def __init__(self, inner: TriMesh, outer: TriMesh, params: SolverParams):
        if params.sigma_v is None or params.sigma_w is None:
            params = params.resolved(SurfacePair(inner, outer))
        self.params = params
        self.q0 = inner.vertices
        self.faces = inner.faces
        self.hybrid = HybridSpec(KernelSpec(params.sigma_v), params.lam)
        self.target = VarifoldTarget(VarifoldSpec.gaussian(params.sigma_w), outer)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.params.T, self.q0.shape[0], 3)

    def forward(self, controls: np.ndarray):
        dt = self.params.dt
        T = self.params.T
        states = np.empty((T + 1,) + self.q0.shape)
        states[0] = self.q0
        terms = []
        for t in range(T):
            st = StepTerms(states[t], self.faces, controls[t], self.hybrid)
            terms.append(st)
            states[t + 1] = states[t] + dt * st.v
            if not np.all(np.isfinite(states[t + 1])):
                raise DivergenceError(t + 1)
        return states, terms

    def evaluate(self, controls: np.ndarray, multipliers: np.ndarray | None = None,
                 penalty: float = 0.0, grad: bool = True, w_D: float | None = None) -> Evaluation:
        p = self.params
        w_D = p.w_D if w_D is None else w_D
        dt = p.dt
        controls = np.asarray(controls, dtype=np.float64).reshape(self.shape)
        states, terms = self.forward(controls)
        energy = dt * sum(st.hybrid for st in terms)
        C = np.stack([st.C for st in terms])
        v = np.stack([st.v for st in terms])
        if grad:
            D, gD = self.target.distance_and_grad(states[-1], self.faces)
        else:
            D = self.target.distance(states[-1], self.faces)
        F = energy + w_D * D
        L = F
        if multipliers is not None:
            L += -float(np.einsum("tia,tia->", multipliers, C)) + 0.5 * penalty * float(np.einsum("tia,tia->", C, C))
        ev = Evaluation(L, F, energy, D, states, C, v)
        if not grad:
            return ev

        g = np.empty_like(controls)
        adj = w_D * gD
        for t in range(p.T - 1, -1, -1):
            g_C = None
            if multipliers is not None:
                g_C = -multipliers[t] + penalty * C[t]
            g_alpha, g_x = terms[t].backward(dt, g_C=g_C, g_v=dt * adj)
            g[t] = g_alpha
            adj = adj + g_x
        ev.grad = g
        return ev


def forward_integrate(q0: TriMesh, controls: np.ndarray, params: SolverParams, outer: TriMesh | None = None) -> Trajectory:
    """Explicit Euler flow of ``q0`` under the kernel fields given by ``controls``."""
    if params.sigma_v is None:
        if outer is None:
            params = replace(params, sigma_v=default_width_v(q0.bbox_diagonal()))
        else:
            params = params.resolved(SurfacePair(q0, outer))
    controls = np.asarray(controls, dtype=np.float64)
    if controls.shape != (params.T, q0.n_vertices, 3):
        raise ValueError(f"controls must have shape {(params.T, q0.n_vertices, 3)}, got {controls.shape}")
    hybrid = HybridSpec(KernelSpec(params.sigma_v), params.lam)
    states = np.empty((params.T + 1, q0.n_vertices, 3))
    states[0] = q0.vertices
    for t in range(params.T):
        st = StepTerms(states[t], q0.faces, controls[t], hybrid, constraints=False)
        states[t + 1] = states[t] + params.dt * st.v
        if not np.all(np.isfinite(states[t + 1])):
            raise DivergenceError(t + 1)
    return Trajectory(states, controls, q0.faces)


def objective(traj: Trajectory, target: TriMesh, params: SolverParams) -> float:
    inner = TriMesh(traj.states[0], traj.faces)
    prob = Problem(inner, target, replace(params, T=traj.T))
    return prob.evaluate(traj.controls, grad=False).F


def augmented_objective(traj: Trajectory, target: TriMesh, params: SolverParams, al: ALState) -> float:
    inner = TriMesh(traj.states[0], traj.faces)
    prob = Problem(inner, target, replace(params, T=traj.T))
    return prob.evaluate(traj.controls, al.multipliers, al.penalty, grad=False).L


class _Preconditioner:
    """Linear change of variables ``alpha_t = L_t^{-T} R_t^{-1} gamma_t``.

    ``K_t + eps I = L_t L_t^T`` whitens the Gram energy.  In ``"full"`` mode
    ``R_t^T R_t = 2 dt I + rho L_t^T P_t L_t`` also whitens the quadratic
    penalty, with ``P_t`` the tangential projectors of the trajectory the inner
    solve starts from.  Both factors stay fixed for one inner solve.
    """

    def __init__(self, prob: Problem, states: np.ndarray | None, penalty: float = 0.0,
                 mode: str = "full"):
        self.shape = prob.shape
        self.L: list[np.ndarray] | None = None
        self.R: list[np.ndarray] | None = None
        if mode == "none" or states is None:
            return
        p = prob.params
        self.L = []
        R = []
        for t in range(p.T):
            x = states[t] - states[t].mean(axis=0)
            K = gaussian_matrix(x, x, p.sigma_v)
            eps = 1e-10
            while True:
                try:
                    Lc, _ = cho_factor(K + eps * np.eye(len(K)), lower=True)
                    break
                except np.linalg.LinAlgError:
                    eps *= 10.0
            L = np.tril(Lc)
            self.L.append(L)
            if mode == "full" and penalty > 0:
                R.append(self._penalty_factor(L, states[t], prob.faces, penalty, p.dt))
        if R:
            self.R = R

    @staticmethod
    def _penalty_factor(L, x, faces, penalty, dt):
        n = vertex_normals_array(x, faces)
        P = np.eye(3)[None] - n[:, :, None] * n[:, None, :]
        N = len(L)
        H = np.empty((N, 3, N, 3))
        for a in range(3):
            for b in range(a, 3):
                H[:, a, :, b] = L.T @ (P[:, a, b][:, None] * L)
                if b != a:
                    H[:, b, :, a] = H[:, a, :, b]
        M = H.reshape(3 * N, 3 * N)
        M *= penalty
        diag = np.diag_indices_from(M)
        M[diag] += 2.0 * dt
        jitter = 1e-12 * float(M[diag].max())
        while True:
            try:
                return cholesky(M, lower=False, check_finite=False)
            except np.linalg.LinAlgError:
                M[diag] += jitter
                jitter *= 10.0

    def to_alpha(self, gamma: np.ndarray) -> np.ndarray:
        gamma = gamma.reshape(self.shape)
        if self.L is None:
            return gamma.copy()
        out = np.empty(self.shape)
        for t, L in enumerate(self.L):
            b = gamma[t]
            if self.R is not None:
                b = solve_triangular(self.R[t], b.ravel(), lower=False, check_finite=False).reshape(-1, 3)
            out[t] = solve_triangular(L.T, b, lower=False, check_finite=False)
        return out

    def to_gamma(self, alpha: np.ndarray) -> np.ndarray:
        if self.L is None:
            return alpha.copy()
        out = np.empty(self.shape)
        for t, L in enumerate(self.L):
            b = L.T @ alpha[t]
            if self.R is not None:
                b = (self.R[t] @ b.ravel()).reshape(-1, 3)
            out[t] = b
        return out

    def grad_gamma(self, g_alpha: np.ndarray) -> np.ndarray:
        if self.L is None:
            return g_alpha.copy()
        out = np.empty(self.shape)
        for t, L in enumerate(self.L):
            g = solve_triangular(L, g_alpha[t], lower=True, check_finite=False)
            if self.R is not None:
                g = solve_triangular(self.R[t], g.ravel(), lower=False, trans="T",
                                     check_finite=False).reshape(-1, 3)
            out[t] = g
        return out


def _inner_solve(prob: Problem, controls: np.ndarray, states: np.ndarray, mu: np.ndarray, rho: float):
    """Minimise the augmented Lagrangian over the controls; returns (controls, info)."""
    p = prob.params
    pre = _Preconditioner(prob, states, rho, p.precondition)
    trace: list[float] = []
    cache: dict = {}

    def fun(beta):
        key = beta.tobytes()
        if key in cache:
            return cache[key]
        alpha = pre.to_alpha(beta)
        try:
            ev = prob.evaluate(alpha, mu, rho)
        except DivergenceError:
            out = (np.inf, np.zeros_like(beta))
        else:
            out = (ev.L, pre.grad_gamma(ev.grad).ravel())
        cache.clear()
        cache[key] = out
        return out

    beta = pre.to_gamma(controls).ravel()
    f0, g0 = fun(beta)
    trace.append(f0)
    gtol = p.inner_gtol * max(float(np.abs(g0).max()), 1e-300)
    nit = nfev = 0
    status = "converged"
    budget = p.inner_maxiter
    for _restart in range(5):
        res = minimize(
            fun, beta, jac=True, method="L-BFGS-B",
            callback=lambda xk: trace.append(fun(xk)[0]),
            options={"maxcor": p.lbfgs_memory, "maxiter": budget, "gtol": gtol,
                     "ftol": p.inner_ftol, "maxls": 40},
        )
        beta = res.x
        nit += res.nit
        nfev += res.nfev
        budget -= res.nit
        if res.status == 0:
            status = "converged"
            break
        if res.status == 1 or budget <= 0:
            status = "maxiter"
            break
        # line-search failure: fall back to backtracking gradient descent, then restart
        ok, beta, nf = _backtracking_step(fun, beta)
        nfev += nf
        if not ok:
            status = "line_search_failure"
            break
        trace.append(fun(beta)[0])
        status = "restarted"
    return pre.to_alpha(beta), {"iterations": nit, "evaluations": nfev, "status": status, "trace": trace}


def _backtracking_step(fun, beta, c1: float = 1e-4, shrink: float = 0.5, tries: int = 40):
    f0, g = fun(beta)
    gg = float(g @ g)
    if gg == 0.0 or not np.isfinite(f0):
        return False, beta, 0
    step = 1.0 / math.sqrt(gg)
    for k in range(tries):
        trial = beta - step * g
        f1, _ = fun(trial)
        if np.isfinite(f1) and f1 <= f0 - c1 * step * gg:
            return True, trial, k + 1
        step *= shrink
    return False, beta, tries


def _record(k: int, ev: Evaluation, rho: float, info: dict | None) -> dict:
    return {
        "outer": k,
        "F": ev.F,
        "energy": ev.energy,
        "attachment": ev.attachment,
        "L": ev.L,
        "max_violation": ev.max_violation,
        "rel_violation": ev.rel_violation,
        "mean_speed": ev.mean_speed,
        "penalty": rho,
        "inner_iterations": 0 if info is None else info["iterations"],
        "inner_evaluations": 0 if info is None else info["evaluations"],
        "inner_status": "none" if info is None else info["status"],
    }


def solve(pair: SurfacePair, params: SolverParams | None = None, callback=None):
    """Augmented-Lagrangian solve; returns ``(Trajectory, ALState, ConvergenceReport)``."""
    params = (params or SolverParams()).resolved(pair)
    limits = threadpool_limits(1) if params.deterministic else None
    try:
        return _solve(pair, params, callback)
    finally:
        if limits is not None:
            limits.unregister()


def _solve(pair: SurfacePair, params: SolverParams, callback):
    prob = Problem(pair.inner, pair.outer, params)
    controls = np.zeros(prob.shape)
    mu = np.zeros(prob.shape)
    rho = params.rho0
    al = ALState(mu, rho)
    records: list[dict] = []
    ev = prob.evaluate(controls, mu, rho, grad=False)
    prev_viol = math.inf
    status = "max_outer"
    for k in range(1, params.max_outer + 1):
        try:
            controls, info = _inner_solve(prob, controls, ev.states, mu, rho)
            ev = prob.evaluate(controls, mu, rho, grad=False)
        except DivergenceError:
            status = "diverged"
            break
        rec = _record(k, ev, rho, info)
        records.append(rec)
        al.history.append(ev.max_violation)
        log.info("outer %d: F=%.6g D=%.6g viol=%.3g rel=%.3g rho=%.3g inner=%d (%s)",
                 k, ev.F, ev.attachment, ev.max_violation, ev.rel_violation, rho,
                 info["iterations"], info["status"])
        if callback is not None:
            callback(rec)
        if ev.rel_violation <= params.ctol:
            status = "converged"
            break
        if info["status"] == "line_search_failure" and info["iterations"] == 0 and k > 1:
            status = "line_search_failure"
            break
        mu = mu - rho * ev.C
        viol = ev.max_violation
        if viol > params.theta * prev_viol:
            rho = min(rho * params.gamma, params.rho_max)
        prev_viol = viol
        al.multipliers, al.penalty = mu, rho
    al.multipliers, al.penalty = mu, rho
    traj = Trajectory(ev.states, controls, pair.inner.faces)
    return traj, al, ConvergenceReport(status, records)


def fold_over_check(traj: Trajectory) -> float:
    """Smallest cosine between a face normal at any step and at ``t = 0``."""
    n0 = face_normals(traj.sheet(0))
    worst = 1.0
    for t in range(1, traj.T + 1):
        nt = face_normals(traj.sheet(t))
        worst = min(worst, float(np.einsum("ij,ij->i", n0, nt).min()))
    return worst


def random_instance(seed: int, n_vertices: int = 16, T: int = 5):
    """Small random surface pair, controls and multipliers for gradient checks."""
    rng = np.random.default_rng(seed)
    from .synth import grid_faces

    nx = max(2, int(round(math.sqrt(n_vertices))))
    ny = max(2, n_vertices // nx)
    gx, gy = np.meshgrid(np.linspace(0, 3, nx), np.linspace(0, 3, ny), indexing="ij")
    base = np.stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)], 1)
    base += 0.15 * rng.normal(size=base.shape)
    faces = grid_faces(nx, ny)
    inner = TriMesh(base, faces).validate()
    outer = TriMesh(base + np.array([0.0, 0.0, 1.0]) + 0.1 * rng.normal(size=base.shape), faces).validate()
    params = SolverParams(T=T, sigma_v=float(rng.uniform(1.0, 2.5)), sigma_w=float(rng.uniform(0.8, 1.5)),
                          lam=float(rng.uniform(0.1, 2.0)))
    controls = 0.3 * rng.normal(size=(T, nx * ny, 3))
    mu = rng.normal(size=(T, nx * ny, 3))
    rho = float(rng.uniform(0.5, 5.0))
    return SurfacePair(inner, outer), params, controls, mu, rho


def gradient_check(params: SolverParams | None = None, seed: int = 0, n_vertices: int = 16, T: int = 5,
                   step: float = 1e-6, instance=None) -> dict:
    """Compare the reverse-sweep gradient of ``L`` with central finite differences."""
    if instance is None:
        pair, p, controls, mu, rho = random_instance(seed, n_vertices, T)
        if params is not None:
            p = replace(params, T=T, sigma_v=params.sigma_v or p.sigma_v, sigma_w=params.sigma_w or p.sigma_w)
    else:
        pair, p, controls, mu, rho = instance
    prob = Problem(pair.inner, pair.outer, p)
    ev = prob.evaluate(controls, mu, rho)
    fd = np.empty_like(controls)
    flat = controls.ravel()
    h = step * max(1.0, float(np.abs(flat).max()))
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        fp = prob.evaluate((flat + e).reshape(controls.shape), mu, rho, grad=False).L
        fm = prob.evaluate((flat - e).reshape(controls.shape), mu, rho, grad=False).L
        fd.ravel()[i] = (fp - fm) / (2.0 * h)
    err = float(np.abs(ev.grad - fd).max() / max(float(np.abs(fd).max()), 1e-300))
    return {"seed": seed, "n_params": flat.size, "max_rel_error": err, "grad_norm": float(np.abs(ev.grad).max()),
            "grad": ev.grad, "fd": fd}
