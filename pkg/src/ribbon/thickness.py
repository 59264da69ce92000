"""Column-length thickness, nearest-vertex baseline and distribution summaries."""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .mesh import TriMesh
from .nngrid import SpatialGrid
from .solver import Trajectory


def column_lengths(traj: Trajectory) -> np.ndarray:
    """Polyline length of every column ``t -> q[t][u]``."""
    seg = np.diff(traj.states, axis=0)
    return np.sqrt(np.einsum("tia,tia->ti", seg, seg)).sum(axis=0)


def freesurfer_distance(inner: TriMesh, outer: TriMesh) -> np.ndarray:
    """Symmetric nearest-vertex thickness ``(|r - f(r)| + |f(r) - g(f(r))|) / 2``.

    ``f`` maps an inner vertex to its nearest outer vertex and ``g`` maps an outer
    vertex back to its nearest inner vertex.
    """
    to_outer = SpatialGrid(outer.vertices)
    to_inner = SpatialGrid(inner.vertices)
    f_idx, d1 = to_outer.query_many(inner.vertices)
    _, d2 = to_inner.query_many(outer.vertices[f_idx])
    return (d1 + d2) / 2.0


def _ray_mesh_hits(origins: np.ndarray, dirs: np.ndarray, mesh: TriMesh, tol: float = 1e-9,
                   chunk: int = 256) -> list[np.ndarray]:
    """Signed line parameters of all intersections of ``o + s d`` with the mesh faces."""
    tri = mesh.vertices[mesh.faces]
    p0 = tri[:, 0]
    e1 = tri[:, 1] - p0
    e2 = tri[:, 2] - p0
    hits: list[np.ndarray] = []
    for start in range(0, len(origins), chunk):
        o = origins[start : start + chunk, None, :]
        d = dirs[start : start + chunk, None, :]
        pvec = np.cross(d, e2[None])
        det = np.einsum("rfa,fa->rf", pvec, e1)
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = o - p0[None]
        u = np.einsum("rfa,rfa->rf", tvec, pvec) * inv
        qvec = np.cross(tvec, e1[None])
        v = np.einsum("rfa,ra->rf", qvec, d[:, 0]) * inv
        s = np.einsum("rfa,fa->rf", qvec, e2) * inv
        valid = ok & (u >= -tol) & (v >= -tol) & (u + v <= 1.0 + tol)
        for r in range(valid.shape[0]):
            hits.append(s[r, valid[r]])
    return hits


def endpoint_correction(traj: Trajectory, outer: TriMesh, max_extension: float = 3.0):
    """Move each column end along its final segment onto the outer mesh.

    The end may be pulled back by at most the final segment and pushed forward by
    at most ``max_extension`` final-segment lengths.  Returns
    ``(corrected_lengths, fallback)`` where ``fallback`` marks columns left
    uncorrected because no intersection exists in that window.
    """
    lengths = column_lengths(traj)
    end = traj.states[-1]
    seg = end - traj.states[-2]
    ell = np.sqrt(np.einsum("ia,ia->i", seg, seg))
    fallback = ell <= 1e-15
    dirs = np.where(fallback[:, None], np.array([0.0, 0.0, 1.0]), seg / np.where(fallback, 1.0, ell)[:, None])
    corrected = lengths.copy()
    hits = _ray_mesh_hits(end, dirs, outer)
    for i, s in enumerate(hits):
        if fallback[i]:
            continue
        s = s[(s >= -ell[i]) & (s <= max_extension * ell[i])]
        if s.size == 0:
            fallback[i] = True
            continue
        shift = s[np.argmin(np.abs(s))]
        corrected[i] = max(lengths[i] + shift, 0.0)
    return corrected, fallback


def boundary_filter(mesh: TriMesh | Trajectory, rings: int = 1) -> np.ndarray:
    """Mask of vertices at least ``rings`` edge hops away from the mesh boundary."""
    if rings < 0:
        raise ValueError("rings must be nonnegative")
    if isinstance(mesh, Trajectory):
        mesh = mesh.sheet(0)
    n = mesh.n_vertices
    if rings == 0:
        return np.ones(n, dtype=bool)
    hops = np.full(n, -1)
    boundary = np.flatnonzero(mesh.boundary_mask)
    hops[boundary] = 0
    queue = deque(boundary.tolist())
    nbrs = mesh.neighbors
    while queue:
        i = queue.popleft()
        if hops[i] >= rings - 1:
            continue
        for j in nbrs[i]:
            if hops[j] < 0:
                hops[j] = hops[i] + 1
                queue.append(j)
    mask = hops < 0
    if not mask.any():
        warnings.warn(f"boundary filter with rings={rings} excludes every vertex", stacklevel=2)
    return mask


@dataclass
class ThicknessReport:
    values: np.ndarray
    mask: np.ndarray
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    summary: dict
    column_length: np.ndarray | None = None
    corrected_length: np.ndarray | None = None
    baseline: np.ndarray | None = None
    fallback: np.ndarray | None = None
    label: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def included(self) -> np.ndarray:
        return self.values[self.mask]


def histogram(values: np.ndarray, bins: int = 50, upper: float | None = None):
    """Uniform bins on ``[0, upper]``; values above ``upper`` land in the last bin."""
    values = np.asarray(values, dtype=np.float64)
    if upper is None:
        upper = float(np.percentile(values, 99.5))
    if not upper > 0:
        upper = 1.0
    counts, edges = np.histogram(np.minimum(values, upper), bins=bins, range=(0.0, upper))
    return edges, counts


def thickness_stats(lengths, mask=None, bins: int = 50, upper: float | None = None,
                    label: str | None = None) -> ThicknessReport:
    lengths = np.asarray(lengths, dtype=np.float64)
    mask = np.ones(len(lengths), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if (lengths < 0).any():
        raise ValueError("lengths must be nonnegative")
    vals = lengths[mask]
    if vals.size == 0:
        raise ValueError("no included vertices: the mask is empty")
    edges, counts = histogram(vals, bins, upper)
    summary = {
        "count": int(vals.size),
        "mean": float(vals.mean()),
        "median": float(np.median(vals)),
        "std": float(vals.std()),
        "min": float(vals.min()),
        "max": float(vals.max()),
    }
    return ThicknessReport(lengths, mask, edges, counts, summary, label=label)


def pool_reports(reports: list[ThicknessReport], bins: int = 50, upper: float | None = None,
                 label: str | None = "pooled") -> ThicknessReport:
    """Concatenate included values across reports and summarise them together."""
    vals = np.concatenate([r.included for r in reports])
    return thickness_stats(vals, None, bins, upper, label)


def build_report(traj: Trajectory, outer: TriMesh, rings: int = 1, bins: int = 50,
                 correct: bool = True, label: str | None = None) -> ThicknessReport:
    """Column lengths, corrected lengths and baseline for one solved pair.

    Statistics are taken over the corrected lengths when ``correct`` is set.
    """
    raw = column_lengths(traj)
    corrected, fallback = endpoint_correction(traj, outer)
    base = freesurfer_distance(traj.sheet(0), outer)
    mask = boundary_filter(traj.sheet(0), rings)
    rep = thickness_stats(corrected if correct else raw, mask, bins, label=label)
    rep.column_length = raw
    rep.corrected_length = corrected
    rep.baseline = base
    rep.fallback = fallback
    inc = mask
    rep.extra = {
        "rings": rings,
        "corrected": correct,
        "mean_column_length": float(raw[inc].mean()) if inc.any() else float("nan"),
        "mean_corrected_length": float(corrected[inc].mean()) if inc.any() else float("nan"),
        "mean_baseline": float(base[inc].mean()) if inc.any() else float("nan"),
        "fallback_count": int(fallback.sum()),
    }
    return rep
