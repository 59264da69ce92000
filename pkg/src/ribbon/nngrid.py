"""Exact nearest-vertex search on a uniform spatial grid.

Ties are broken by the lowest reference index so results agree with an
exhaustive ``argmin`` scan.
"""

from __future__ import annotations

import numpy as np


def _dist(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = points - q
    return np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])


class SpatialGrid:
    def __init__(self, points: np.ndarray, cell: float | None = None):
        self.points = np.ascontiguousarray(points, dtype=np.float64)
        if self.points.shape[0] == 0:
            raise ValueError("cannot build a grid over an empty point set")
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        if cell is None:
            ext = hi - lo
            # size cells from the axes the points actually span (a plate is 2D)
            active = ext > 1e-6 * max(float(ext.max()), 1e-300)
            if active.any():
                cell = float(np.prod(ext[active]) / self.points.shape[0]) ** (1.0 / active.sum())
                cell = max(cell, float(ext.max()) / 256.0)
            else:
                cell = 1.0
        self.cell = cell
        self.origin = lo
        keys = np.floor((self.points - lo) / cell).astype(np.int64)
        self.shape = keys.max(axis=0) + 1
        self._buckets: dict[tuple[int, int, int], np.ndarray] = {}
        order = np.lexsort((np.arange(len(keys)), keys[:, 2], keys[:, 1], keys[:, 0]))
        sk = keys[order]
        breaks = np.flatnonzero((np.diff(sk, axis=0) != 0).any(axis=1)) + 1
        for chunk in np.split(order, breaks):
            k = keys[chunk[0]]
            self._buckets[(int(k[0]), int(k[1]), int(k[2]))] = np.sort(chunk)

    def _shell(self, c: np.ndarray, r: int):
        """Occupied-range cells at Chebyshev distance exactly ``r`` from cell ``c``."""
        lo = np.maximum(c - r, 0)
        hi = np.minimum(c + r, self.shape - 1)
        if (lo > hi).any():
            return
        for i in range(lo[0], hi[0] + 1):
            ei = abs(i - c[0]) == r
            for j in range(lo[1], hi[1] + 1):
                if ei or abs(j - c[1]) == r:
                    ks = range(lo[2], hi[2] + 1)
                else:
                    ks = [k for k in (c[2] - r, c[2] + r) if lo[2] <= k <= hi[2]]
                for k in ks:
                    yield (int(i), int(j), int(k))

    def query(self, q: np.ndarray) -> tuple[int, float]:
        c = np.floor((q - self.origin) / self.cell).astype(np.int64)
        best_i, best_d = -1, np.inf
        # rings closer than r0 lie entirely outside the grid; rings past r_max cover it
        r0 = int(np.max(np.maximum(np.maximum(-c, c - (self.shape - 1)), 0)))
        r_max = int(np.max(np.maximum(np.abs(c), np.abs(self.shape - 1 - c))))
        for r in range(r0, r_max + 1):
            cand = [self._buckets[k] for k in self._shell(c, r) if k in self._buckets]
            if cand:
                idx = np.concatenate(cand)
                d = _dist(self.points[idx], q)
                m = d.min()
                j = idx[d == m].min()
                if m < best_d or (m == best_d and j < best_i):
                    best_d, best_i = m, int(j)
            # points in ring r+1 are at least r * cell away
            if best_d < r * self.cell:
                break
        return best_i, float(best_d)

    def query_many(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        queries = np.asarray(queries, dtype=np.float64)
        idx = np.empty(len(queries), dtype=np.int64)
        dist = np.empty(len(queries))
        for i, q in enumerate(queries):
            idx[i], dist[i] = self.query(q)
        return idx, dist


def nearest_indices(reference: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Index of the nearest reference point for every query (lowest index on ties)."""
    return SpatialGrid(reference).query_many(queries)[0]


def nearest_bruteforce(reference: np.ndarray, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.empty(len(queries), dtype=np.int64)
    dist = np.empty(len(queries))
    for i, q in enumerate(np.asarray(queries, dtype=np.float64)):
        d = _dist(np.asarray(reference, dtype=np.float64), q)
        idx[i] = int(np.argmin(d))
        dist[i] = d[idx[i]]
    return idx, dist
