"""Synthetic inner/outer surface pairs with analytic ground-truth thickness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import MeshError, TriMesh, face_normals, validate_mesh


@dataclass(frozen=True, eq=False)
class SurfacePair:
    inner: TriMesh
    outer: TriMesh
    units: str = "mm"
    meta: dict = field(default_factory=dict)

    @property
    def ground_truth(self) -> float | None:
        return self.meta.get("ground_truth_thickness")


def _grid_shape(n) -> tuple[int, int]:
    if np.ndim(n) == 0:
        nx = ny = int(n)
    else:
        nx, ny = (int(k) for k in n)
    if nx < 2 or ny < 2:
        raise ValueError("grid resolution must be at least 2 in each direction")
    return nx, ny


def grid_faces(nx: int, ny: int, radial: bool = False) -> np.ndarray:
    """CCW triangles of an ``nx`` by ``ny`` vertex grid indexed ``i * ny + j``.

    With ``radial=True`` quad diagonals point away from the grid centre, so every
    corner quad is split through its corner vertex and no sliver triangles
    appear when the grid is mapped onto a disk.
    """
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    i, j = i.ravel(), j.ravel()
    v00 = i * ny + j
    v10 = v00 + ny
    v01 = v00 + 1
    v11 = v10 + 1
    main = (i + 0.5 - (nx - 1) / 2) * (j + 0.5 - (ny - 1) / 2) >= 0
    if not radial:
        main[:] = True
    tri_a = np.where(main[:, None], np.stack([v00, v10, v11], 1), np.stack([v00, v10, v01], 1))
    tri_b = np.where(main[:, None], np.stack([v00, v11, v01], 1), np.stack([v10, v11, v01], 1))
    return np.concatenate([tri_a, tri_b])


def _grid_uv(nx: int, ny: int, lo: float, hi: float):
    u, v = np.meshgrid(np.linspace(lo, hi, nx), np.linspace(lo, hi, ny), indexing="ij")
    return u.ravel(), v.ravel()


def make_plate_pair(n=10, side: float = 10.0, h: float = 2.0) -> SurfacePair:
    if side <= 0 or h <= 0:
        raise ValueError("side and h must be positive")
    nx, ny = _grid_shape(n)
    x, y = _grid_uv(nx, ny, 0.0, side)
    faces = grid_faces(nx, ny)
    inner = TriMesh(np.stack([x, y, np.zeros_like(x)], 1), faces)
    outer = TriMesh(np.stack([x, y, np.full_like(x, h)], 1), faces)
    meta = {"kind": "plate", "n": [nx, ny], "side": side, "h": h, "ground_truth_thickness": h}
    return SurfacePair(inner.validate(), outer.validate(), meta=meta)


def _square_to_disk(u: np.ndarray, v: np.ndarray):
    """Concentric (equal-area) map of [-1, 1]^2 onto the unit disk."""
    r = np.where(np.abs(u) > np.abs(v), u, v)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(
            np.abs(u) > np.abs(v),
            np.pi / 4 * v / u,
            np.pi / 2 - np.pi / 4 * u / v,
        )
    phi = np.where(r == 0, 0.0, phi)
    return r * np.cos(phi), r * np.sin(phi)


def _cap_vertices(R, cap_angle, u, v):
    dx, dy = _square_to_disk(u, v)
    rho = np.hypot(dx, dy)
    theta = rho * cap_angle
    phi = np.arctan2(dy, dx)
    return R * np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], 1)


def make_cap_pair(R_in: float = 10.0, R_out: float = 12.0, cap_angle: float = np.pi / 3, n=24) -> SurfacePair:
    """Concentric spherical caps; ``cap_angle`` is the polar half-angle of the cap rim."""
    if R_in <= 0 or R_out <= R_in:
        raise ValueError("need 0 < R_in < R_out")
    if not 0 < cap_angle < np.pi:
        raise ValueError("cap_angle must lie in (0, pi)")
    nx, ny = _grid_shape(n)
    u, v = _grid_uv(nx, ny, -1.0, 1.0)
    faces = grid_faces(nx, ny, radial=True)
    inner = TriMesh(_cap_vertices(R_in, cap_angle, u, v), faces)
    outer = TriMesh(_cap_vertices(R_out, cap_angle, u, v), faces)
    meta = {
        "kind": "cap", "n": [nx, ny], "R_in": R_in, "R_out": R_out, "cap_angle": cap_angle,
        "center": [0.0, 0.0, 0.0], "ground_truth_thickness": R_out - R_in,
    }
    return SurfacePair(inner.validate(), outer.validate(), meta=meta)


def make_fold_pair(amplitude: float = 2.0, wavelength: float = 8.0, thickness: float = 1.0, n=32,
                   side: float | None = None) -> SurfacePair:
    """Corrugated sheet ``z = amplitude/2 * cos(2 pi x / wavelength)`` and its offset.

    ``amplitude`` is the crown-to-fundus height.  The outer surface is the inner
    one offset by ``thickness`` along the analytic unit normal, so the exact
    thickness is ``thickness`` at every column.
    """
    if amplitude <= 0 or wavelength <= 0 or thickness <= 0:
        raise ValueError("amplitude, wavelength and thickness must be positive")
    side = 2.0 * wavelength if side is None else side
    k = 2.0 * np.pi / wavelength
    a = 0.5 * amplitude
    # offset self-intersects once thickness reaches the trough radius of curvature
    if thickness * a * k * k >= 1.0:
        raise ValueError(
            f"fold self-intersects: thickness {thickness} exceeds the minimum radius of "
            f"curvature {1.0 / (a * k * k):.4g}"
        )
    nx, ny = _grid_shape(n)
    x, y = _grid_uv(nx, ny, 0.0, side)
    z = a * np.cos(k * x)
    dz = -a * k * np.sin(k * x)
    nrm = np.stack([-dz, np.zeros_like(dz), np.ones_like(dz)], 1) / np.sqrt(1 + dz * dz)[:, None]
    faces = grid_faces(nx, ny)
    p = np.stack([x, y, z], 1)
    inner = TriMesh(p, faces)
    outer = TriMesh(p + thickness * nrm, faces)
    validate_mesh(inner)
    validate_mesh(outer)
    if (np.einsum("ij,ij->i", face_normals(inner), face_normals(outer)) <= 0).any():
        raise MeshError("offset surface has flipped faces")
    meta = {
        "kind": "fold", "n": [nx, ny], "amplitude": amplitude, "wavelength": wavelength,
        "thickness": thickness, "side": side, "ground_truth_thickness": thickness,
    }
    return SurfacePair(inner, outer, meta=meta)


def analytic_normals(pair: SurfacePair, points: np.ndarray) -> np.ndarray:
    """Exact inner-surface normals at ``points`` for a generated pair."""
    kind = pair.meta.get("kind")
    if kind == "plate":
        return np.tile([0.0, 0.0, 1.0], (len(points), 1))
    if kind == "cap":
        return points / np.linalg.norm(points, axis=1, keepdims=True)
    if kind == "fold":
        k = 2.0 * np.pi / pair.meta["wavelength"]
        dz = -0.5 * pair.meta["amplitude"] * k * np.sin(k * points[:, 0])
        n = np.stack([-dz, np.zeros_like(dz), np.ones_like(dz)], 1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)
    raise ValueError(f"no analytic normals for pair kind {kind!r}")


GENERATORS = {"plate": make_plate_pair, "cap": make_cap_pair, "fold": make_fold_pair}
