"""Core value types: Gaussians, Gaussian sets, and images."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

QUAT_TOL = 1e-6


@dataclass(frozen=True)
class Gaussian:
    """A single splat primitive. Rotation is a unit quaternion stored (w, x, y, z)."""

    center: tuple[float, float, float]
    scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    opacity: float = 1.0

    @property
    def max_scale(self) -> float:
        return max(self.scale)


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrices for quaternions (w, x, y, z); accepts shape (4,) or (N, 4)."""
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    R = np.empty((len(q), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R[0] if single else R


def matrix_to_quat(R) -> np.ndarray:
    """Inverse of :func:`quat_to_matrix` for a single proper rotation, w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a * b, broadcasting over leading axes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


@dataclass
class GaussianSet:
    """Struct-of-arrays scene: N Gaussians plus per-Gaussian gradient statistics.

    ``grad_accum`` holds the running sum of gradient magnitudes and ``grad_count``
    the number of contributions. Both are reset after every densification event.
    Opacity is stored post-activation, in [0, 1].
    """

    centers: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    grad_accum: np.ndarray = None
    grad_count: np.ndarray = None
    units: str = ""

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 3)
        n = len(self.centers)
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(n, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.opacities = np.asarray(self.opacities, dtype=np.float64).reshape(n)
        if self.grad_accum is None:
            self.grad_accum = np.zeros(n)
        if self.grad_count is None:
            self.grad_count = np.zeros(n, dtype=np.int64)
        self.grad_accum = np.asarray(self.grad_accum, dtype=np.float64)
        self.grad_count = np.asarray(self.grad_count, dtype=np.int64)

    @classmethod
    def from_points(cls, points, scale=1.0, opacity=1.0, units: str = "") -> "GaussianSet":
        """Isotropic, identity-rotation Gaussians at ``points``."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = len(points)
        scale = np.asarray(scale, dtype=np.float64)
        if scale.ndim == 0:
            scales = np.full((n, 3), float(scale))
        elif scale.ndim == 1:
            scales = np.repeat(scale.reshape(n, 1), 3, axis=1)
        else:
            scales = scale.reshape(n, 3).copy()
        rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
        opacities = np.broadcast_to(np.asarray(opacity, dtype=np.float64), (n,)).copy()
        return cls(points.copy(), scales, rotations, opacities, units=units)

    @classmethod
    def from_gaussians(cls, gaussians: Iterable[Gaussian], units: str = "") -> "GaussianSet":
        gaussians = list(gaussians)
        if not gaussians:
            return cls.empty(units)
        return cls(
            np.array([g.center for g in gaussians], dtype=np.float64),
            np.array([g.scale for g in gaussians], dtype=np.float64),
            np.array([g.rotation for g in gaussians], dtype=np.float64),
            np.array([g.opacity for g in gaussians], dtype=np.float64),
            units=units,
        )

    @classmethod
    def empty(cls, units: str = "") -> "GaussianSet":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), units=units)

    def __len__(self) -> int:
        return len(self.centers)

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(
            tuple(float(v) for v in self.centers[i]),
            tuple(float(v) for v in self.scales[i]),
            tuple(float(v) for v in self.rotations[i]),
            float(self.opacities[i]),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def max_scales(self) -> np.ndarray:
        return self.scales.max(axis=1) if len(self) else np.zeros(0)

    def take(self, idx) -> "GaussianSet":
        """Subset (or reordering) by index or boolean mask; gradient stats follow."""
        return GaussianSet(
            self.centers[idx],
            self.scales[idx],
            self.rotations[idx],
            self.opacities[idx],
            self.grad_accum[idx],
            self.grad_count[idx],
            units=self.units,
        )

    def concat(self, other: "GaussianSet") -> "GaussianSet":
        return GaussianSet(
            np.concatenate([self.centers, other.centers]),
            np.concatenate([self.scales, other.scales]),
            np.concatenate([self.rotations, other.rotations]),
            np.concatenate([self.opacities, other.opacities]),
            np.concatenate([self.grad_accum, other.grad_accum]),
            np.concatenate([self.grad_count, other.grad_count]),
            units=self.units,
        )

    def copy(self) -> "GaussianSet":
        return self.take(np.arange(len(self)))

    def with_grad_reset(self) -> "GaussianSet":
        out = self.copy()
        out.grad_accum = np.zeros(len(out))
        out.grad_count = np.zeros(len(out), dtype=np.int64)
        return out

    def transformed(self, R, t=(0.0, 0.0, 0.0)) -> "GaussianSet":
        """Apply the rigid motion x -> R x + t to centers and orientations."""
        R = np.asarray(R, dtype=np.float64)
        q = matrix_to_quat(R)
        out = self.copy()
        out.centers = self.centers @ R.T + np.asarray(t, dtype=np.float64)
        out.rotations = quat_multiply(q, self.rotations)
        return out


class Violation(NamedTuple):
    index: int | None
    message: str


def validate_set(gs: GaussianSet) -> list[Violation]:
    """Report every invariant violation in ``gs``. Never raises."""
    out: list[Violation] = []
    n = len(gs)
    if len(gs.grad_accum) != n or len(gs.grad_count) != n:
        out.append(Violation(None, "gradient statistics length mismatch"))
        return out
    for i in range(n):
        if not np.all(np.isfinite(gs.centers[i])):
            out.append(Violation(i, "center non-finite"))
        s = gs.scales[i]
        if not np.all(np.isfinite(s)):
            out.append(Violation(i, "scale non-finite"))
        elif np.any(s <= 0):
            out.append(Violation(i, "scale non-positive"))
        q = gs.rotations[i]
        if not np.all(np.isfinite(q)) or abs(np.linalg.norm(q) - 1.0) > QUAT_TOL:
            out.append(Violation(i, "quaternion not unit"))
        a = gs.opacities[i]
        if not (0.0 <= a <= 1.0):
            out.append(Violation(i, "opacity out of range"))
        acc, cnt = gs.grad_accum[i], gs.grad_count[i]
        if not np.isfinite(acc) or acc < 0:
            out.append(Violation(i, "grad_accum negative or non-finite"))
        if cnt < 0:
            out.append(Violation(i, "grad_count negative"))
        elif cnt == 0 and acc != 0:
            out.append(Violation(i, "grad_accum nonzero with zero count"))
    return out


@dataclass
class GrayImage:
    """Row-major image with values in [0, 1]; ``pixels`` has shape (height, width, channels)."""

    pixels: np.ndarray
    width: int = field(init=False)
    height: int = field(init=False)
    channels: int = field(init=False)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected 1 or 3 channels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must have positive width and height")
        self.pixels = px
        self.height, self.width, self.channels = px.shape

    @classmethod
    def from_flat(cls, width: int, height: int, values: Sequence[float], channels: int = 1) -> "GrayImage":
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height * channels:
            raise ValueError("pixel count does not match width * height * channels")
        return cls(values.reshape(height, width, channels))
