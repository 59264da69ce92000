"""Slow reference implementations used as independent oracles in the tests."""

import mpmath
import numpy as np

from ribbon.mesh import TriMesh
from ribbon.varifold import VarifoldSpec

QUAD_BITS = 113


def naive_inner(spec: VarifoldSpec, A: TriMesh, B: TriMesh):
    """Double loop over face pairs in 113-bit arithmetic."""
    with mpmath.workprec(QUAD_BITS):
        return _naive_inner(spec, A, B)


def _naive_inner(spec, A, B):

    def faces(m):
        out = []
        for f in m.faces:
            p = [[mpmath.mpf(float(c)) for c in m.vertices[i]] for i in f]
            e1 = [p[1][k] - p[0][k] for k in range(3)]
            e2 = [p[2][k] - p[0][k] for k in range(3)]
            cr = [e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2], e1[0] * e2[1] - e1[1] * e2[0]]
            nrm = mpmath.sqrt(sum(c * c for c in cr))
            out.append(([sum(p[j][k] for j in range(3)) / 3 for k in range(3)], [c / nrm for c in cr], nrm / 2))
        return out

    s2 = mpmath.mpf(spec.width) ** 2
    total = mpmath.mpf(0)
    for ca, na, aa in faces(A):
        for cb, nb, ab in faces(B):
            d2 = sum((ca[k] - cb[k]) ** 2 for k in range(3))
            cos = sum(na[k] * nb[k] for k in range(3))
            total += mpmath.exp(-d2 / (2 * s2)) * (1 + cos * cos) * aa * ab
    return total


def brute_freesurfer(inner: TriMesh, outer: TriMesh) -> np.ndarray:
    """Exhaustive nearest-vertex loops, ties to the lowest index."""
    out = np.empty(inner.n_vertices)
    for i, r in enumerate(inner.vertices):
        best_j, best = 0, np.inf
        for j, p in enumerate(outer.vertices):
            d = np.sqrt(np.sum((r - p) ** 2))
            if d < best:
                best_j, best = j, d
        back = np.inf
        for q in inner.vertices:
            d = np.sqrt(np.sum((outer.vertices[best_j] - q) ** 2))
            back = min(back, d)
        out[i] = (best + back) / 2.0
    return out
