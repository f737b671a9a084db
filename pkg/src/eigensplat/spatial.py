"""Exact k-nearest-neighbour queries over Gaussian centres.

Candidates come from a balanced kd-tree (scipy's cKDTree). Final ordering is
decided here, by Euclidean distance and then by lower point id, so results are
deterministic on gridded inputs where equal distances are common.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

# extra tree candidates fetched beyond k, so boundary ties rarely need a radius query
_PAD = 4
_TIE_RTOL = 1e-9


def _as_points(centers) -> np.ndarray:
    pts = np.asarray(centers, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("empty point set")
    pts = pts.reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite point coordinates")
    return pts


def _distances(points: np.ndarray, ids: np.ndarray, queries: np.ndarray) -> np.ndarray:
    diff = points[ids] - queries[:, None, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def _order(ids: np.ndarray, dists: np.ndarray) -> np.ndarray:
    # sort by distance, then id
    return np.lexsort((ids, dists), axis=-1)


class KnnIndex:
    """Frozen snapshot of N centres. Rebuild after any change to the point set."""

    def __init__(self, centers):
        self.points = _as_points(centers).copy()
        self.points.setflags(write=False)
        self._tree = cKDTree(self.points, balanced_tree=True, compact_nodes=True)

    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return self.n

    def query_members(self, member_ids, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbours of indexed points, excluding each point itself.

        Returns ``(ids, dists)`` of shape (m, min(k, N-1)).
        """
        member_ids = np.atleast_1d(np.asarray(member_ids, dtype=np.int64))
        if member_ids.size and (member_ids.min() < 0 or member_ids.max() >= self.n):
            raise IndexError(f"member id out of range for index of {self.n} points")
        if k < 1:
            raise ValueError("k must be >= 1")
        k_eff = min(k, self.n - 1)
        return self._select(self.points[member_ids], k_eff, member_ids)

    def query(self, points, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbours of external query points; returns min(k, N) per query."""
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return self._select(q, min(k, self.n), None)

    def knn_of_member(self, member_id: int, k: int) -> list[tuple[int, float]]:
        ids, d = self.query_members([member_id], k)
        return [(int(i), float(x)) for i, x in zip(ids[0], d[0])]

    def _select(self, q: np.ndarray, k: int, exclude):
        m = len(q)
        if k == 0 or m == 0:
            return np.zeros((m, k), dtype=np.int64), np.zeros((m, k))
        kk = min(k + (exclude is not None) + _PAD, self.n)
        _, cand = self._tree.query(q, k=kk)
        cand = np.asarray(cand, dtype=np.int64).reshape(m, kk)
        d = _distances(self.points, cand, q)
        if exclude is not None:
            d[cand == exclude[:, None]] = np.inf
        order = _order(cand, d)
        cand = np.take_along_axis(cand, order, axis=1)
        d = np.take_along_axis(d, order, axis=1)
        ids, dists = cand[:, :k].copy(), d[:, :k].copy()

        if kk < self.n:
            # Rows whose farthest candidate could tie the k-th distance may have
            # lower-id points left out of the candidate list; resolve by radius.
            kth = dists[:, -1]
            far = d[:, -1] if exclude is None else np.where(np.isinf(d[:, -1]), d[:, -2], d[:, -1])
            suspect = np.nonzero(far <= kth * (1 + _TIE_RTOL))[0]
            for r in suspect:
                radius = kth[r] * (1 + _TIE_RTOL) + 1e-300
                ball = np.asarray(self._tree.query_ball_point(q[r], radius), dtype=np.int64)
                if exclude is not None:
                    ball = ball[ball != exclude[r]]
                bd = _distances(self.points, ball[None, :], q[r : r + 1])[0]
                o = _order(ball, bd)[:k]
                ids[r], dists[r] = ball[o], bd[o]
        return ids, dists


def build_index(centers) -> KnnIndex:
    return KnnIndex(centers)


def knn_brute_force(centers, member_id: int, k: int) -> list[tuple[int, float]]:
    """Reference kNN by sorting all pairwise distances. Same contract as ``knn_of_member``."""
    pts = _as_points(centers)
    n = len(pts)
    if not 0 <= member_id < n:
        raise IndexError(f"member id {member_id} out of range for {n} points")
    if k < 1:
        raise ValueError("k must be >= 1")
    others = [i for i in range(n) if i != member_id]
    diff = pts[others] - pts[member_id]
    d = np.sqrt((diff * diff).sum(axis=-1))
    ranked = sorted(zip(d.tolist(), others))[: min(k, n - 1)]
    return [(i, dist) for dist, i in ranked]
