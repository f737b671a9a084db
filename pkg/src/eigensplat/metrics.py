"""Evaluation metrics: masked Chamfer cloud-to-cloud distance, PSNR, entropy summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .features import features_for_set
from .model import GaussianSet, GrayImage
from .spatial import KnnIndex, build_index


@dataclass(frozen=True)
class ChamferReport:
    """Directional and symmetric means over inliers. A direction with no inliers has mean None."""

    mean_a_to_b: float | None
    mean_b_to_a: float | None
    inlier_count_a: int
    inlier_count_b: int
    excluded_count_a: int
    excluded_count_b: int
    mask_radius: float

    @property
    def symmetric_mean(self) -> float | None:
        if self.mean_a_to_b is None or self.mean_b_to_a is None:
            return None
        return (self.mean_a_to_b + self.mean_b_to_a) / 2

    def as_row(self) -> dict:
        return {
            "mean_a_to_b": self.mean_a_to_b,
            "mean_b_to_a": self.mean_b_to_a,
            "symmetric_mean": self.symmetric_mean,
            "inlier_count_a": self.inlier_count_a,
            "inlier_count_b": self.inlier_count_b,
            "excluded_count_a": self.excluded_count_a,
            "excluded_count_b": self.excluded_count_b,
            "mask_radius": self.mask_radius,
        }


REPORT_COLUMNS = tuple(ChamferReport(0, 0, 0, 0, 0, 0, 0).as_row())


def nearest_distances(src, dst) -> np.ndarray:
    """Exact Euclidean distance from every point of ``src`` to its nearest point in ``dst``."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    d, _ = cKDTree(dst).query(src, k=1)
    return np.asarray(d, dtype=np.float64)


def _masked_mean(d: np.ndarray, radius: float):
    inl = d <= radius
    n_in = int(inl.sum())
    # fsum keeps the mean independent of point order
    mean = math.fsum(d[inl].tolist()) / n_in if n_in else None
    return mean, n_in, int(len(d) - n_in)


def chamfer_c2c(a, b, mask_radius: float) -> ChamferReport:
    """Masked Chamfer distance; nearest-neighbour distances above ``mask_radius`` are dropped."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both point clouds must be non-empty")
    if not mask_radius > 0:
        raise ValueError("mask radius must be positive")
    m_ab, in_a, ex_a = _masked_mean(nearest_distances(a, b), mask_radius)
    m_ba, in_b, ex_b = _masked_mean(nearest_distances(b, a), mask_radius)
    return ChamferReport(m_ab, m_ba, in_a, in_b, ex_a, ex_b, float(mask_radius))


def psnr(ref: GrayImage, test: GrayImage) -> float:
    """PSNR in dB with peak 1.0; ``math.inf`` for identical images."""
    if ref.pixels.shape != test.pixels.shape:
        raise ValueError(f"image shapes differ: {ref.pixels.shape} vs {test.pixels.shape}")
    mse = float(np.mean((ref.pixels - test.pixels) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def mean_eigenentropy(gs: GaussianSet, k: int, index: KnnIndex | None = None) -> float:
    if index is None:
        index = build_index(gs.centers)
    return float(features_for_set(gs, index, k).eigenentropy.mean())


def outlier_entropy_stat(
    gs: GaussianSet,
    reference,
    dist_threshold: float,
    k: int,
    index: KnnIndex | None = None,
) -> float | None:
    """Mean eigenentropy over Gaussians farther than ``dist_threshold`` from ``reference``.

    ``reference`` is a point cloud or any object with a ``distance(points)``
    method (a synthetic surface). Features use the whole set; only the
    averaging is restricted. Returns None when there are no outliers.
    """
    if index is None:
        index = build_index(gs.centers)
    if hasattr(reference, "distance"):
        d = reference.distance(gs.centers)
    else:
        d = nearest_distances(gs.centers, reference)
    outliers = d > dist_threshold
    if not outliers.any():
        return None
    E = features_for_set(gs, index, k).eigenentropy
    return float(E[outliers].mean())
