import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ribbon.mesh import TriMesh
from ribbon.synth import grid_faces

settings.register_profile("ribbon", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ribbon")


def icosphere(subdiv: int = 0, radius: float = 1.0) -> TriMesh:
    t = (1.0 + 5**0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdiv):
        cache: dict = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriMesh(radius * np.array(verts), np.array(faces))


def random_grid_mesh(rng, nx=3, ny=3, jitter=0.15, scale=1.0) -> TriMesh:
    """Small jittered height-field grid; always a valid, consistently oriented mesh."""
    u, v = np.meshgrid(np.arange(nx, dtype=float), np.arange(ny, dtype=float), indexing="ij")
    x = np.stack([u.ravel(), v.ravel(), np.zeros(nx * ny)], axis=1)
    x[:, :2] += rng.uniform(-jitter, jitter, size=(nx * ny, 2))
    x[:, 2] = rng.uniform(-0.5, 0.5, size=nx * ny)
    return TriMesh(scale * x, grid_faces(nx, ny))


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_triangle():
    return TriMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))


_VERDICTS: list[tuple[str, bool, str]] = []


def record_verdict(tag: str, ok: bool, detail: str) -> None:
    _VERDICTS.append((tag, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for tag, ok, detail in sorted(_VERDICTS, key=lambda v: int(v[0].split()[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {tag}: {detail}")
