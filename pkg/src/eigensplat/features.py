"""Eigenvalue shape features of local k-nearest neighbourhoods.

For each point the neighbourhood is the point itself plus its k nearest
neighbours (k+1 points). Covariance uses the biased 1/(k+1) normalisation.
Entropies use the natural logarithm: 0 for linear, ln 2 for ideal planar and
ln 3 for isotropic neighbourhoods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import GaussianSet
from .spatial import KnnIndex

LN2 = math.log(2.0)
LN3 = math.log(3.0)
CLAMP_RTOL = 1e-9
SUM_TOL = 1e-9


@dataclass
class EigenFeatures:
    """Per-point features as parallel arrays.

    ``normalized`` and ``planarity`` are NaN where the neighbourhood is
    degenerate (all points coincident); ``eigenentropy`` is ln 3 there.
    """

    eigenvalues: np.ndarray  # (N, 3), descending
    normalized: np.ndarray  # (N, 3), descending
    eigenentropy: np.ndarray  # (N,)
    planarity: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.eigenentropy)

    @property
    def degenerate(self) -> np.ndarray:
        return np.isnan(self.normalized[:, 0])


def _points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("empty neighbourhood")
    return pts


def neighborhood_centroid(points) -> np.ndarray:
    return _points(points).mean(axis=0)


def neighborhood_covariance(points) -> np.ndarray:
    pts = _points(points)
    d = pts - pts.mean(axis=0)
    return d.T @ d / len(pts)


def eigendecompose_sym3(m, vectors: bool = False):
    """Eigenvalues of a symmetric 3x3 matrix, sorted descending.

    Small negative round-off values (down to -1e-9 * ||m||_F) are clamped to 0.
    With ``vectors=True`` returns ``(values, V)`` where column i of V pairs with
    value i.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    w, v = w[::-1], v[:, ::-1]
    tol = CLAMP_RTOL * np.linalg.norm(m)
    w = np.where((w < 0) & (w >= -tol), 0.0, w)
    return (w, v) if vectors else w


def normalize_eigenvalues(values):
    """Eigenvalues divided by their sum, sorted descending.

    Returns None when the sum is zero (a degenerate neighbourhood).
    """
    lam = np.asarray(values, dtype=np.float64).reshape(3)
    if np.any(lam < -CLAMP_RTOL):
        raise ValueError(f"negative eigenvalue {lam.min()!r}")
    lam = np.clip(lam, 0.0, None)
    total = lam.sum()
    if total <= 0:
        return None
    return np.sort(lam / total)[::-1]


def eigenentropy(normalized) -> float:
    """Shannon entropy -sum(l ln l) of normalised eigenvalues, with 0 ln 0 = 0.

    ``None`` (degenerate neighbourhood) maps to ln 3.
    """
    if normalized is None:
        return LN3
    lam = np.asarray(normalized, dtype=np.float64).reshape(3)
    if np.any(lam < -SUM_TOL) or np.any(lam > 1 + SUM_TOL) or abs(lam.sum() - 1.0) > SUM_TOL:
        raise ValueError(f"eigenvalues are not normalised: {lam}")
    return float(-sum(x * math.log(x) for x in lam if x > 0))


def planarity(values):
    """(l2 - l3) / l1 for descending eigenvalues; None when l1 == 0."""
    l1, l2, l3 = (float(x) for x in values)
    if l1 <= 0:
        return None
    return (l2 - l3) / l1


# batched versions used by the densification engine


def covariances(points: np.ndarray, neighbor_ids: np.ndarray) -> np.ndarray:
    """Covariance of each point together with its neighbours; shape (N, 3, 3)."""
    points = np.asarray(points, dtype=np.float64)
    hood = np.concatenate([points[:, None, :], points[neighbor_ids]], axis=1)
    d = hood - hood.mean(axis=1, keepdims=True)
    return np.einsum("nki,nkj->nij", d, d) / hood.shape[1]


def features_from_covariances(C: np.ndarray) -> EigenFeatures:
    w = np.linalg.eigvalsh(C)[:, ::-1]
    tol = CLAMP_RTOL * np.linalg.norm(C, axis=(1, 2))
    w = np.where((w < 0) & (w >= -tol[:, None]), 0.0, w)
    w = np.clip(w, 0.0, None)
    total = w.sum(axis=1)
    degenerate = total <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        norm = np.sort(w / total[:, None], axis=1)[:, ::-1]
        terms = np.where(norm > 0, norm * np.log(np.where(norm > 0, norm, 1.0)), 0.0)
        entropy = -terms.sum(axis=1)
        plan = (w[:, 1] - w[:, 2]) / w[:, 0]
    norm[degenerate] = np.nan
    entropy[degenerate] = LN3
    plan[w[:, 0] <= 0] = np.nan
    return EigenFeatures(w, norm, entropy, plan)


def features_for_points(points, index: KnnIndex, k: int) -> EigenFeatures:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) < 3:
        raise ValueError("insufficient points for covariance")
    if k < 2:
        raise ValueError("k must be >= 2")
    if index.n != len(points):
        raise ValueError("index was built over a different point set")
    ids, _ = index.query_members(np.arange(len(points)), k)
    return features_from_covariances(covariances(points, ids))


def features_for_set(gs: GaussianSet, index: KnnIndex, k: int) -> EigenFeatures:
    """Eigen features of every Gaussian centre, in set order."""
    return features_for_points(gs.centers, index, k)
