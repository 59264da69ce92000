"""Triangle-mesh data model and differential quantities.

Vertices are stored as an ``(N, 3)`` float64 array in millimetres and faces as an
``(F, 3)`` int64 array.  Counter-clockwise winding defines the face normal.
The ``*_vjp`` helpers return vector-Jacobian products of the face and vertex
geometry with respect to vertex positions and are used by the varifold and
energy gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

EPS_AREA = 1e-12


class MeshError(ValueError):
    """Raised when a mesh violates a structural or geometric invariant."""


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (N, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            if f.size == 0:
                f = f.reshape(0, 3)
            else:
                raise MeshError(f"faces must have shape (F, 3), got {f.shape}")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same connectivity, new positions (no re-validation)."""
        return TriMesh(vertices, self.faces, dict(self.meta))

    def flipped(self) -> "TriMesh":
        return TriMesh(self.vertices, self.faces[:, ::-1], dict(self.meta))

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges ``(E, 2)`` (sorted pairs) and their face counts."""
        directed = self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        undirected = np.sort(directed, axis=1)
        uniq, counts = np.unique(undirected, axis=0, return_counts=True)
        return uniq.reshape(-1, 2), counts

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """True for vertices incident to an edge with a single incident face."""
        uniq, counts = self.edges
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[uniq[counts == 1].ravel()] = True
        return mask

    @cached_property
    def neighbors(self) -> list[np.ndarray]:
        uniq, _ = self.edges
        nbrs: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for a, b in uniq:
            nbrs[a].append(b)
            nbrs[b].append(a)
        return [np.array(sorted(n), dtype=np.int64) for n in nbrs]

    def edge_lengths(self) -> np.ndarray:
        uniq, _ = self.edges
        d = self.vertices[uniq[:, 0]] - self.vertices[uniq[:, 1]]
        return np.sqrt(np.einsum("ij,ij->i", d, d))

    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def validate(self, eps_area: float = EPS_AREA) -> "TriMesh":
        validate_mesh(self, eps_area)
        return self


def validate_mesh(m: TriMesh, eps_area: float = EPS_AREA) -> None:
    """Check index range, repeated indices, face areas and orientation consistency."""
    n = m.n_vertices
    f = m.faces
    if f.size == 0:
        return
    bad = np.flatnonzero((f < 0).any(axis=1) | (f >= n).any(axis=1))
    if bad.size:
        raise MeshError(f"face {bad[0]} has a vertex index outside [0, {n})")
    rep = np.flatnonzero((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2]))
    if rep.size:
        raise MeshError(f"face {rep[0]} repeats a vertex")
    if not np.all(np.isfinite(m.vertices)):
        raise MeshError("vertex coordinates must be finite")
    areas = _raw_areas(m.vertices, f)
    small = np.flatnonzero(areas <= eps_area)
    if small.size:
        raise MeshError(f"face {small[0]} is degenerate (area {areas[small[0]]:.3g} <= {eps_area:g})")

    directed = f[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    _, inv, counts = np.unique(directed, axis=0, return_inverse=True, return_counts=True)
    dup = np.flatnonzero(counts[inv.ravel()] > 1)
    if dup.size:
        raise MeshError(
            f"inconsistent orientation: face {dup[0] // 3} traverses edge "
            f"{tuple(directed[dup[0]])} in the same direction as another face"
        )
    _, ucounts = m.edges
    if (ucounts > 2).any():
        raise MeshError("non-manifold edge shared by more than two faces")


def _raw_areas(x: np.ndarray, faces: np.ndarray) -> np.ndarray:
    cr = np.cross(x[faces[:, 1]] - x[faces[:, 0]], x[faces[:, 2]] - x[faces[:, 0]])
    return 0.5 * np.sqrt(np.einsum("ij,ij->i", cr, cr))


def face_cross(x: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unnormalised face normals ``(x1 - x0) x (x2 - x0)``; norm is twice the area."""
    return np.cross(x[faces[:, 1]] - x[faces[:, 0]], x[faces[:, 2]] - x[faces[:, 0]])


def face_geometry(x: np.ndarray, faces: np.ndarray, eps_area: float = EPS_AREA):
    """Barycenters, unit normals and areas of every face."""
    cr = face_cross(x, faces)
    norm = np.sqrt(np.einsum("ij,ij->i", cr, cr))
    bad = np.flatnonzero(norm <= 2.0 * eps_area)
    if bad.size:
        raise MeshError(f"face {bad[0]} is degenerate")
    centers = x[faces].mean(axis=1)
    return centers, cr / norm[:, None], 0.5 * norm


def face_normals(m: TriMesh) -> np.ndarray:
    return face_geometry(m.vertices, m.faces)[1]


def face_areas(m: TriMesh) -> np.ndarray:
    return face_geometry(m.vertices, m.faces)[2]


def face_centers(m: TriMesh) -> np.ndarray:
    return m.vertices[m.faces].mean(axis=1)


def _scatter_faces(n: int, faces: np.ndarray, g0, g1, g2) -> np.ndarray:
    out = np.zeros((n, 3))
    for k, g in enumerate((g0, g1, g2)):
        for d in range(3):
            out[:, d] += np.bincount(faces[:, k], weights=g[:, d], minlength=n)
    return out


def _cross_vjp(x: np.ndarray, faces: np.ndarray, g_cross: np.ndarray) -> np.ndarray:
    e1 = x[faces[:, 1]] - x[faces[:, 0]]
    e2 = x[faces[:, 2]] - x[faces[:, 0]]
    g1 = np.cross(e2, g_cross)
    g2 = np.cross(g_cross, e1)
    return _scatter_faces(x.shape[0], faces, -(g1 + g2), g1, g2)


def face_geometry_vjp(x, faces, g_centers=None, g_normals=None, g_areas=None) -> np.ndarray:
    """Pull back gradients on (barycenters, unit normals, areas) to vertex positions."""
    cr = face_cross(x, faces)
    norm = np.sqrt(np.einsum("ij,ij->i", cr, cr))
    n = cr / norm[:, None]
    g_cr = np.zeros_like(cr)
    if g_areas is not None:
        g_cr += 0.5 * g_areas[:, None] * n
    if g_normals is not None:
        proj = g_normals - n * np.einsum("ij,ij->i", n, g_normals)[:, None]
        g_cr += proj / norm[:, None]
    out = _cross_vjp(x, faces, g_cr)
    if g_centers is not None:
        g = g_centers / 3.0
        out += _scatter_faces(x.shape[0], faces, g, g, g)
    return out


def _vertex_normal_sums(x: np.ndarray, faces: np.ndarray) -> np.ndarray:
    cr = face_cross(x, faces)
    return _scatter_faces(x.shape[0], faces, cr, cr, cr)


def vertex_normals_array(x: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident face normals, renormalised."""
    s = _vertex_normal_sums(x, faces)
    norm = np.sqrt(np.einsum("ij,ij->i", s, s))
    counts = np.bincount(faces.ravel(), minlength=x.shape[0])
    isolated = np.flatnonzero(counts == 0)
    if isolated.size:
        raise MeshError(f"vertex {isolated[0]} has no incident face")
    scale = np.abs(s).max() if s.size else 1.0
    bad = np.flatnonzero(norm <= 1e-14 * max(scale, 1e-300))
    if bad.size:
        raise MeshError(f"vertex {bad[0]} has a vanishing normal (fold-back around the vertex)")
    return s / norm[:, None]


def vertex_normals(m: TriMesh) -> np.ndarray:
    return vertex_normals_array(m.vertices, m.faces)


def vertex_normals_vjp(x: np.ndarray, faces: np.ndarray, g_normals: np.ndarray) -> np.ndarray:
    s = _vertex_normal_sums(x, faces)
    norm = np.sqrt(np.einsum("ij,ij->i", s, s))
    n = s / norm[:, None]
    g_s = (g_normals - n * np.einsum("ij,ij->i", n, g_normals)[:, None]) / norm[:, None]
    g_cr = g_s[faces[:, 0]] + g_s[faces[:, 1]] + g_s[faces[:, 2]]
    return _cross_vjp(x, faces, g_cr)


def check_orientation(inner: TriMesh, outer: TriMesh, min_fraction: float = 0.9) -> float:
    """Fraction of inner vertices whose normal points toward the nearest outer vertex.

    Raises ``MeshError`` with a flip hint when the fraction is below ``min_fraction``.
    """
    from .nngrid import nearest_indices

    n = vertex_normals(inner)
    idx = nearest_indices(outer.vertices, inner.vertices)
    d = outer.vertices[idx] - inner.vertices
    frac = float(np.mean(np.einsum("ij,ij->i", n, d) > 0))
    if frac < min_fraction:
        raise MeshError(
            f"only {frac:.1%} of inner normals point toward the outer surface; "
            "flip the orientation of the inner mesh"
        )
    return frac
