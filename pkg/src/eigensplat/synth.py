"""Seeded synthetic scenes with closed-form reference surfaces.

Each surface is described by a centre, an orthonormal frame ``R`` (columns are
the local axes) and shape parameters. Surfaces know their point-to-surface
distance and can be sampled into a dense reference cloud for Chamfer checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .features import covariances
from .model import GaussianSet, matrix_to_quat
from .spatial import build_index

KINDS = ("plane", "line", "ball", "noisybox", "clutter")


def _local(points, center, R):
    return (np.asarray(points, dtype=np.float64).reshape(-1, 3) - center) @ R


@dataclass
class Surface:
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    kind: ClassVar[str] = ""

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)

    def distance(self, points) -> np.ndarray:
        raise NotImplementedError

    def sample(self, spacing: float) -> np.ndarray:
        raise NotImplementedError

    def _params(self) -> dict:
        return {}

    def transformed(self, R, t=(0.0, 0.0, 0.0)) -> "Surface":
        R = np.asarray(R, dtype=np.float64)
        return type(self)(R @ self.center + np.asarray(t, dtype=np.float64), R @ self.R, **self._params())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": self.center.tolist(), "R": self.R.tolist(), **self._params()}

    def _world(self, local: np.ndarray) -> np.ndarray:
        return local @ self.R.T + self.center


@dataclass
class Plane(Surface):
    """Rectangle of half sizes (a, b) in the local xy plane; distance is to the infinite plane."""

    half_size: tuple[float, float] = (0.5, 0.5)
    kind: ClassVar[str] = "plane"

    def distance(self, points) -> np.ndarray:
        return np.abs(_local(points, self.center, self.R)[:, 2])

    def sample(self, spacing: float) -> np.ndarray:
        a, b = self.half_size
        u = np.arange(-a, a + 0.5 * spacing, spacing)
        v = np.arange(-b, b + 0.5 * spacing, spacing)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        return self._world(np.stack([uu.ravel(), vv.ravel(), np.zeros(uu.size)], axis=1))

    def _params(self):
        return {"half_size": list(self.half_size)}


@dataclass
class Segment(Surface):
    """Segment of half length ``half_length`` along the local x axis."""

    half_length: float = 0.5
    kind: ClassVar[str] = "line"

    def distance(self, points) -> np.ndarray:
        p = _local(points, self.center, self.R)
        x = np.clip(p[:, 0], -self.half_length, self.half_length)
        return np.sqrt((p[:, 0] - x) ** 2 + p[:, 1] ** 2 + p[:, 2] ** 2)

    def sample(self, spacing: float) -> np.ndarray:
        x = np.arange(-self.half_length, self.half_length + 0.5 * spacing, spacing)
        return self._world(np.stack([x, np.zeros_like(x), np.zeros_like(x)], axis=1))

    def _params(self):
        return {"half_length": self.half_length}


@dataclass
class Sphere(Surface):
    radius: float = 0.5
    kind: ClassVar[str] = "ball"

    def distance(self, points) -> np.ndarray:
        p = _local(points, self.center, self.R)
        return np.abs(np.linalg.norm(p, axis=1) - self.radius)

    def sample(self, spacing: float) -> np.ndarray:
        n = max(4, int(round(4 * np.pi * self.radius**2 / spacing**2)))
        # Fibonacci lattice
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        theta = np.pi * (1 + 5**0.5) * i
        local = self.radius * np.stack(
            [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1
        )
        return self._world(local)

    def _params(self):
        return {"radius": self.radius}


@dataclass
class Box(Surface):
    """Surface of a box with the given half extents along the local axes."""

    half_extents: tuple[float, float, float] = (0.5, 0.5, 0.5)
    kind: ClassVar[str] = "noisybox"

    def distance(self, points) -> np.ndarray:
        p = np.abs(_local(points, self.center, self.R))
        h = np.asarray(self.half_extents)
        q = p - h
        outside = np.linalg.norm(np.clip(q, 0, None), axis=1)
        inside = np.minimum(0.0, q.max(axis=1))
        return np.where(outside > 0, outside, -inside)

    def sample(self, spacing: float) -> np.ndarray:
        h = np.asarray(self.half_extents, dtype=np.float64)
        faces = []
        for axis in range(3):
            u_ax, v_ax = [a for a in range(3) if a != axis]
            u = np.arange(-h[u_ax], h[u_ax] + 0.5 * spacing, spacing)
            v = np.arange(-h[v_ax], h[v_ax] + 0.5 * spacing, spacing)
            uu, vv = np.meshgrid(u, v, indexing="ij")
            for sign in (-1.0, 1.0):
                f = np.zeros((uu.size, 3))
                f[:, axis] = sign * h[axis]
                f[:, u_ax] = uu.ravel()
                f[:, v_ax] = vv.ravel()
                faces.append(f)
        return self._world(np.unique(np.concatenate(faces), axis=0))

    def _params(self):
        return {"half_extents": list(self.half_extents)}


_SURFACES = {cls.kind: cls for cls in (Plane, Segment, Sphere, Box)}


def surface_from_dict(d: dict) -> Surface:
    d = dict(d)
    cls = _SURFACES[d.pop("kind")]
    params = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items() if k not in ("center", "R")}
    return cls(np.asarray(d["center"]), np.asarray(d["R"]), **params)


def save_surface(surface: Surface, path) -> None:
    with open(path, "w") as f:
        json.dump(surface.to_dict(), f, indent=2)


def load_surface(path) -> Surface:
    with open(path) as f:
        return surface_from_dict(json.load(f))


@dataclass
class SynthScene:
    points: np.ndarray
    surface: Surface
    clutter: np.ndarray  # boolean mask of volumetric clutter points
    normals: np.ndarray | None = None  # surface normal per point (zero for clutter)


def _box_surface_points(rng, n, h):
    areas = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]]) * 4
    face_p = np.repeat(areas, 2) / (2 * areas.sum())
    face = rng.choice(6, size=n, p=face_p)
    pts = rng.uniform(-1, 1, size=(n, 3)) * h
    axis, sign = face // 2, np.where(face % 2, 1.0, -1.0)
    pts[np.arange(n), axis] = sign * h[axis]
    normals = np.zeros((n, 3))
    normals[np.arange(n), axis] = sign
    return pts, normals


def synth_scene(
    kind: str,
    n: int,
    noise_sigma: float = 0.0,
    seed: int = 0,
    clutter_ratio: float | None = None,
    size: float = 1.0,
) -> SynthScene:
    """Generate ``n`` points of the given kind, deterministic in ``seed``.

    ``plane``, ``line`` and ``ball`` are clean archetypes (plus Gaussian noise
    along the surface normal). ``noisybox`` samples a box surface with 10%
    volumetric clutter by default, ``clutter`` a plane with 5%. Clutter counts
    are ``round(n * clutter_ratio)``; plane clutter keeps at least 10 sigma
    (and 2% of ``size``) away from the plane.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown scene kind {kind!r}; expected one of {KINDS}")
    if n < 3:
        raise ValueError("need at least 3 points")
    rng = np.random.default_rng(seed)
    half = 0.5 * size
    if clutter_ratio is None:
        clutter_ratio = {"noisybox": 0.10, "clutter": 0.05}.get(kind, 0.0)
    n_clutter = int(round(n * clutter_ratio))
    n_surf = n - n_clutter
    normals = np.zeros((n, 3))

    if kind == "plane" or kind == "clutter":
        surface = Plane(half_size=(half, half))
        surf = np.column_stack([rng.uniform(-half, half, size=(n_surf, 2)), np.zeros(n_surf)])
        surf[:, 2] += noise_sigma * rng.standard_normal(n_surf)
        normals[:n_surf, 2] = 1.0
        gap = max(10 * noise_sigma, 0.02 * size)
        z = rng.uniform(gap, 0.3 * size, size=n_clutter) * rng.choice([-1.0, 1.0], size=n_clutter)
        clut = np.column_stack([rng.uniform(-half, half, size=(n_clutter, 2)), z])
    elif kind == "line":
        surface = Segment(half_length=half)
        surf = np.zeros((n_surf, 3))
        surf[:, 0] = rng.uniform(-half, half, size=n_surf)
        surf[:, 1:] += noise_sigma * rng.standard_normal((n_surf, 2))
        clut = rng.uniform(-half, half, size=(n_clutter, 3))
    elif kind == "ball":
        surface = Sphere(radius=half)
        d = rng.standard_normal((n_surf, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = half * rng.uniform(0, 1, size=n_surf) ** (1 / 3)
        surf = d * r[:, None]
        clut = rng.uniform(-half, half, size=(n_clutter, 3))
    else:
        h = np.full(3, half)
        surface = Box(half_extents=tuple(h))
        surf, nrm = _box_surface_points(rng, n_surf, h)
        surf += noise_sigma * rng.standard_normal(n_surf)[:, None] * nrm
        normals[:n_surf] = nrm
        clut = rng.uniform(-half, half, size=(n_clutter, 3))

    points = np.concatenate([surf, clut])
    mask = np.zeros(n, dtype=bool)
    mask[n_surf:] = True
    return SynthScene(points, surface, mask, normals)


def _quats_from_frames(V: np.ndarray) -> np.ndarray:
    """Unit quaternions (w, x, y, z) for a batch of orthonormal frames (columns = axes)."""
    V = V.copy()
    det = np.linalg.det(V)
    V[det < 0, :, 2] *= -1  # make each frame a proper rotation
    return np.array([matrix_to_quat(r) for r in V]).reshape(-1, 4)


def gaussians_from_points(
    points,
    init: str = "pca",
    shape_k: int = 16,
    min_ratio: float = 0.01,
    opacity: float = 1.0,
    units: str = "",
) -> GaussianSet:
    """Initial Gaussians on a point cloud.

    The largest axis is the RMS distance to the 3 nearest neighbours. With
    ``init="isotropic"`` all axes get that value and rotation is identity. With
    ``init="pca"`` the Gaussian follows the covariance of its ``shape_k``
    neighbourhood: axes along the eigenvectors, lengths proportional to the
    square roots of the eigenvalues (each at least ``min_ratio`` of the largest).
    """
    if init not in ("pca", "isotropic"):
        raise ValueError(f"unknown init {init!r}")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    index = build_index(points)
    _, d = index.query_members(np.arange(len(points)), 3)
    s = np.sqrt((d**2).mean(axis=1))
    s = np.where(s > 0, s, max(float(s.max()), 1e-7))
    gs = GaussianSet.from_points(points, scale=s, opacity=opacity, units=units)
    if init == "isotropic" or len(points) < 3:
        return gs
    ids, _ = index.query_members(np.arange(len(points)), shape_k)
    w, V = np.linalg.eigh(covariances(points, ids))
    w, V = np.clip(w[:, ::-1], 0.0, None), V[:, :, ::-1]
    ratio = np.sqrt(w / np.where(w[:, :1] > 0, w[:, :1], 1.0))
    ratio = np.where(w[:, :1] > 0, np.maximum(ratio, min_ratio), 1.0)
    gs.scales = s[:, None] * ratio
    gs.rotations = _quats_from_frames(V)
    return gs


def scene_gaussians(scene: SynthScene, init: str = "pca", units: str = "") -> GaussianSet:
    return gaussians_from_points(scene.points, init=init, units=units)
