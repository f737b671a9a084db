"""Gradient-magnitude sources feeding the gradient densification criterion.

A source stands in for the renderer: each training iteration it reports one
non-negative magnitude per Gaussian plus which Gaussians contributed.
"""

from __future__ import annotations

import csv
from abc import ABC, abstractmethod

import numpy as np

from .model import GaussianSet
from .spatial import build_index
from .synth import Surface


class GradientSource(ABC):
    @abstractmethod
    def contributions(self, gs: GaussianSet, t: int) -> tuple[np.ndarray, np.ndarray | None]:
        """Return ``(magnitudes, visible)`` for iteration ``t``; ``visible=None`` means all."""

    def transformed(self, R, t=(0.0, 0.0, 0.0)) -> "GradientSource":
        """The same source expressed after a rigid motion of the scene."""
        return self


class _StaticFieldSource(GradientSource):
    """A source whose magnitudes depend only on the centres; cached per centre array."""

    _key = None
    _cached = None

    @abstractmethod
    def magnitudes(self, centers: np.ndarray) -> np.ndarray: ...

    def contributions(self, gs, t):
        if self._key is not gs.centers:
            self._key, self._cached = gs.centers, self.magnitudes(gs.centers)
        return self._cached, None


class ZeroSource(GradientSource):
    def contributions(self, gs, t):
        return np.zeros(len(gs)), None


class FileSource(_StaticFieldSource):
    """Gradient field sampled at points, read from CSV with columns ``x,y,z,grad``.

    Each Gaussian takes the value of the nearest sample, so children created by
    densification inherit the field at their own position.
    """

    def __init__(self, path=None, *, points=None, values=None):
        if path is not None:
            with open(path, newline="") as f:
                rows = list(csv.DictReader(f))
            if not rows or not {"x", "y", "z", "grad"} <= set(rows[0]):
                raise ValueError(f"{path}: expected CSV columns x,y,z,grad")
            points = [[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows]
            values = [float(r["grad"]) for r in rows]
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.values = np.asarray(values, dtype=np.float64).reshape(-1)
        if len(self.points) != len(self.values):
            raise ValueError("sample points and values differ in length")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("gradient samples must be finite and non-negative")
        self._index = build_index(self.points)

    def magnitudes(self, centers):
        ids, _ = self._index.query(centers, 1)
        return self.values[ids[:, 0]]

    def transformed(self, R, t=(0.0, 0.0, 0.0)):
        R = np.asarray(R, dtype=np.float64)
        return FileSource(points=self.points @ R.T + np.asarray(t), values=self.values)


class SurfaceResidualSource(_StaticFieldSource):
    """Photometric-error proxy: ``gain`` x distance from the reference surface."""

    def __init__(self, surface: Surface, gain: float = 0.01):
        if gain < 0:
            raise ValueError("gain must be non-negative")
        self.surface = surface
        self.gain = gain

    def magnitudes(self, centers):
        return self.gain * self.surface.distance(centers)

    def transformed(self, R, t=(0.0, 0.0, 0.0)):
        return SurfaceResidualSource(self.surface.transformed(R, t), self.gain)
