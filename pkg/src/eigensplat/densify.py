"""Alternating gradient / eigenentropy densification of Gaussian sets.

Every ``period`` iterations a densification event runs. Before ``pretrain_end``
all events use the gradient criterion (clone small Gaussians, split large ones
when the mean accumulated gradient exceeds ``tau_pos``). Afterwards events
alternate: even multiples of ``period`` use the gradient criterion, odd
multiples the eigenentropy criterion (split at or below ``tau_low``, prune above
``tau_high``, keep in between). Low-opacity Gaussians are removed at every event.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .features import LN2, LN3, features_for_set
from .model import Gaussian, GaussianSet, quat_to_matrix, validate_set
from .spatial import build_index

log = logging.getLogger(__name__)

# child scale divisor per fan-out
SPLIT_SCALE_DIVISOR = {2: 1.6, 4: 2.0, 8: 2.5}
# clone if max scale <= PERCENT_DENSE * scene extent, else split
PERCENT_DENSE = 0.01

DEFAULT_ADAPTIVE_K = ((0, 25), (2500, 50), (5000, 75), (7500, 100))


class Phase(str, Enum):
    NONE = "none"
    GRADIENT = "gradient"
    ENTROPY = "entropy"


class GradientAction(Enum):
    NONE = 0
    CLONE = 1
    SPLIT = 2


class EntropyAction(Enum):
    SPLIT = 0
    KEEP = 1
    PRUNE = 2


@dataclass(frozen=True)
class Thresholds:
    tau_low: float = LN2
    tau_high: float = 0.95
    tau_pos: float = 0.0001
    opacity_min: float = 0.005

    def __post_init__(self):
        if not 0.0 <= self.tau_low < self.tau_high <= LN3:
            raise ValueError(f"need 0 <= tau_low < tau_high <= ln 3, got {self.tau_low}, {self.tau_high}")
        if not self.tau_pos > 0:
            raise ValueError("tau_pos must be positive")
        if not 0.0 < self.opacity_min < 1.0:
            raise ValueError("opacity_min must lie in (0, 1)")

    @classmethod
    def gaussian_splatting(cls) -> "Thresholds":
        """Gradient threshold of plain 3DGS (0.0002) instead of the more sensitive 0.0001."""
        return cls(tau_pos=0.0002)


KnnMode = Union[int, Sequence[tuple[int, int]]]


@dataclass(frozen=True)
class Schedule:
    """Densification timing. ``knn`` is a fixed k or ``(start_iteration, k)`` steps."""

    pretrain_end: int = 3000
    period: int = 100
    total_iterations: int = 15000
    knn: KnnMode = DEFAULT_ADAPTIVE_K

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.pretrain_end < 0 or self.pretrain_end % self.period:
            raise ValueError("pretrain_end must be a non-negative multiple of period")
        if self.total_iterations < 0:
            raise ValueError("total_iterations must be >= 0")
        if isinstance(self.knn, (int, np.integer)):
            if self.knn < 2:
                raise ValueError("k must be >= 2")
        else:
            steps = tuple((int(s), int(k)) for s, k in self.knn)
            if not steps:
                raise ValueError("adaptive k schedule is empty")
            starts = [s for s, _ in steps]
            if any(b <= a for a, b in zip(starts, starts[1:])):
                raise ValueError("adaptive k steps must be strictly increasing in start iteration")
            if any(k < 2 for _, k in steps):
                raise ValueError("k must be >= 2")
            object.__setattr__(self, "knn", steps)

    @property
    def adaptive(self) -> bool:
        return not isinstance(self.knn, (int, np.integer))

    def k_at(self, t: int) -> int:
        if not self.adaptive:
            return int(self.knn)
        k = self.knn[0][1]
        for start, step_k in self.knn:
            if t >= start:
                k = step_k
        return k


def phase_for_iteration(t: int, sched: Schedule) -> Phase:
    if t % sched.period != 0:
        return Phase.NONE
    if t < sched.pretrain_end:
        return Phase.GRADIENT
    return Phase.GRADIENT if (t // sched.period) % 2 == 0 else Phase.ENTROPY


def mean_gradient(gs: GaussianSet, i: int) -> float:
    count = gs.grad_count[i]
    return float(gs.grad_accum[i] / count) if count > 0 else 0.0


def mean_gradients(gs: GaussianSet) -> np.ndarray:
    out = np.zeros(len(gs))
    seen = gs.grad_count > 0
    out[seen] = gs.grad_accum[seen] / gs.grad_count[seen]
    return out


def gradient_phase_action(g_mean: float, gauss: Gaussian, scene_extent: float, thr: Thresholds) -> GradientAction:
    if not scene_extent > 0:
        raise ValueError("scene_extent must be positive")
    if g_mean <= thr.tau_pos:
        return GradientAction.NONE
    if gauss.max_scale <= PERCENT_DENSE * scene_extent:
        return GradientAction.CLONE
    return GradientAction.SPLIT


def gradient_actions(g_mean: np.ndarray, max_scales: np.ndarray, scene_extent: float, thr: Thresholds) -> np.ndarray:
    """Vectorised :func:`gradient_phase_action`; returns an array of GradientAction values."""
    if not scene_extent > 0:
        raise ValueError("scene_extent must be positive")
    out = np.full(len(g_mean), GradientAction.NONE.value)
    hot = g_mean > thr.tau_pos
    small = max_scales <= PERCENT_DENSE * scene_extent
    out[hot & small] = GradientAction.CLONE.value
    out[hot & ~small] = GradientAction.SPLIT.value
    return out


def entropy_phase_action(E: float, thr: Thresholds) -> EntropyAction:
    if E <= thr.tau_low:
        return EntropyAction.SPLIT
    if E > thr.tau_high:
        return EntropyAction.PRUNE
    return EntropyAction.KEEP


def entropy_actions(E: np.ndarray, thr: Thresholds) -> np.ndarray:
    out = np.full(len(E), EntropyAction.KEEP.value)
    out[E <= thr.tau_low] = EntropyAction.SPLIT.value
    out[E > thr.tau_high] = EntropyAction.PRUNE.value
    return out


def nearest_rank(values, p: float) -> float:
    """Nearest-rank percentile: the smallest value with at least p% of the data at or below it."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("percentile of an empty set")
    rank = max(1, math.ceil(p / 100.0 * v.size))
    return float(v[rank - 1])


def split_fan_out(gauss: Gaussian | float, scale_p50: float, scale_p90: float) -> int:
    s = gauss.max_scale if isinstance(gauss, Gaussian) else float(gauss)
    if s >= scale_p90:
        return 8
    if s >= scale_p50:
        return 4
    return 2


def _fan_outs(max_scales: np.ndarray, p50: float, p90: float) -> np.ndarray:
    return np.where(max_scales >= p90, 8, np.where(max_scales >= p50, 4, 2))


def split_children(gs: GaussianSet, parents: np.ndarray, fan_outs, rng: np.random.Generator) -> GaussianSet:
    """Children of ``gs[parents]``, sampled from each parent's Gaussian density.

    Children of one parent are contiguous, in parent order. Rotation and opacity
    are inherited; scale is divided by the fan-out's divisor.
    """
    parents = np.asarray(parents, dtype=np.int64)
    fan_outs = np.broadcast_to(np.asarray(fan_outs, dtype=np.int64), parents.shape)
    if np.any(~np.isin(fan_outs, list(SPLIT_SCALE_DIVISOR))):
        raise ValueError("fan-out must be 2, 4 or 8")
    rep = np.repeat(parents, fan_outs)
    if rep.size == 0:
        return GaussianSet.empty(gs.units)
    n_rep = np.repeat(fan_outs, fan_outs)
    R = quat_to_matrix(gs.rotations[rep])
    z = rng.standard_normal((rep.size, 3))
    offsets = np.einsum("nij,nj->ni", R, gs.scales[rep] * z)
    divisor = np.vectorize(SPLIT_SCALE_DIVISOR.get)(n_rep).astype(np.float64)
    return GaussianSet(
        gs.centers[rep] + offsets,
        gs.scales[rep] / divisor[:, None],
        gs.rotations[rep],
        gs.opacities[rep],
        units=gs.units,
    )


def clone_gaussians(gs: GaussianSet, parents: np.ndarray, rng: np.random.Generator) -> GaussianSet:
    """Copies of ``gs[parents]`` displaced by one draw from each parent's density; scale kept."""
    parents = np.asarray(parents, dtype=np.int64)
    if parents.size == 0:
        return GaussianSet.empty(gs.units)
    R = quat_to_matrix(gs.rotations[parents])
    z = rng.standard_normal((parents.size, 3))
    out = gs.take(parents).with_grad_reset()
    out.centers = out.centers + np.einsum("nij,nj->ni", R, gs.scales[parents] * z)
    return out


def split_gaussian(gauss: Gaussian, n: int, rng_seed: int | np.random.Generator = 0) -> list[Gaussian]:
    rng = np.random.default_rng(rng_seed)
    parent = GaussianSet.from_gaussians([gauss])
    return list(split_children(parent, np.zeros(1, dtype=np.int64), n, rng))


def opacity_prune(gs: GaussianSet, thr: Thresholds) -> np.ndarray:
    """Ids of Gaussians whose opacity is strictly below ``thr.opacity_min``."""
    return np.nonzero(gs.opacities < thr.opacity_min)[0]


def scene_extent(centers) -> float:
    """1.1 x the largest distance of any centre from the centroid (rotation invariant)."""
    c = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    r = np.linalg.norm(c - c.mean(axis=0), axis=1).max() if len(c) else 0.0
    return 1.1 * float(r) if r > 0 else 1.0


def mean_entropy(gs: GaussianSet, k: int) -> float:
    if len(gs) < 3:
        return math.nan
    return float(features_for_set(gs, build_index(gs.centers), k).eigenentropy.mean())


@dataclass
class EventRecord:
    t: int
    phase: Phase
    k: int
    n_before: int
    n_split: int = 0
    n_clone: int = 0
    n_prune_entropy: int = 0
    n_prune_opacity: int = 0
    n_after: int = 0
    mean_entropy_before: float = math.nan
    mean_entropy_after: float = math.nan
    n_keep: int = 0
    n_children: int = 0


TRACE_COLUMNS = (
    "t",
    "phase",
    "k",
    "n_before",
    "n_split",
    "n_clone",
    "n_prune_entropy",
    "n_prune_opacity",
    "n_after",
    "mean_entropy_before",
    "mean_entropy_after",
)


@dataclass
class DensifyResult:
    gaussians: GaussianSet
    trace: list[EventRecord] = field(default_factory=list)


class SetExhausted(RuntimeError):
    """Raised when a run leaves fewer than 3 Gaussians. Carries the partial trace."""

    def __init__(self, gaussians: GaussianSet, trace: list[EventRecord]):
        super().__init__("set exhausted")
        self.gaussians = gaussians
        self.trace = trace


def densify_event(
    gs: GaussianSet,
    phase: Phase,
    t: int,
    k: int,
    thr: Thresholds,
    extent: float,
    rng: np.random.Generator,
) -> tuple[GaussianSet, EventRecord]:
    """Apply one densification event. Decisions use the incoming set as a frozen snapshot."""
    n = len(gs)
    rec = EventRecord(t=t, phase=phase, k=k, n_before=n)
    low_opacity = np.zeros(n, dtype=bool)
    low_opacity[opacity_prune(gs, thr)] = True
    rec.n_prune_opacity = int(low_opacity.sum())

    if phase is Phase.GRADIENT:
        rec.mean_entropy_before = mean_entropy(gs, k)
        acts = gradient_actions(mean_gradients(gs), gs.max_scales, extent, thr)
        acts[low_opacity] = GradientAction.NONE.value
        clone = acts == GradientAction.CLONE.value
        split = acts == GradientAction.SPLIT.value
        parents = np.nonzero(split)[0]
        children = split_children(gs, parents, 2, rng)
        clones = clone_gaussians(gs, np.nonzero(clone)[0], rng)
        out = gs.take(~(low_opacity | split)).concat(clones).concat(children)
        rec.n_clone = int(clone.sum())
        rec.n_split = int(split.sum())
    elif phase is Phase.ENTROPY:
        feats = features_for_set(gs, build_index(gs.centers), k)
        rec.mean_entropy_before = float(feats.eigenentropy.mean())
        acts = entropy_actions(feats.eigenentropy, thr)
        split = (acts == EntropyAction.SPLIT.value) & ~low_opacity
        prune = (acts == EntropyAction.PRUNE.value) & ~low_opacity
        ms = gs.max_scales
        p50, p90 = nearest_rank(ms, 50), nearest_rank(ms, 90)
        parents = np.nonzero(split)[0]
        children = split_children(gs, parents, _fan_outs(ms[parents], p50, p90), rng)
        out = gs.take(~(low_opacity | split | prune)).concat(children)
        rec.n_split = int(split.sum())
        rec.n_prune_entropy = int(prune.sum())
        rec.n_keep = int(n - split.sum() - prune.sum() - low_opacity.sum())
    else:
        raise ValueError("no densification in this iteration")

    rec.n_children = len(out) - (n - rec.n_split - rec.n_prune_entropy - rec.n_prune_opacity) - rec.n_clone
    out = out.with_grad_reset()
    rec.n_after = len(out)
    rec.mean_entropy_after = mean_entropy(out, k)
    return out, rec


def accumulate(gs: GaussianSet, values, visible=None) -> None:
    """Add one iteration's gradient magnitudes into ``gs`` (in place)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (len(gs),):
        raise ValueError("gradient contribution length does not match the set")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ValueError("gradient contributions must be finite and non-negative")
    if visible is None:
        gs.grad_accum += values
        gs.grad_count += 1
    else:
        visible = np.asarray(visible, dtype=bool)
        gs.grad_accum[visible] += values[visible]
        gs.grad_count[visible] += 1


def run_densification(
    gs: GaussianSet,
    sched: Schedule,
    thr: Thresholds,
    grad_src,
    rng_seed: int = 0,
    extent: float | None = None,
) -> DensifyResult:
    """Run iterations 1..total_iterations, densifying at scheduled events.

    ``grad_src`` supplies per-iteration gradient magnitudes (see
    :mod:`eigensplat.sources`). The scene extent used by the clone/split size rule
    defaults to :func:`scene_extent` of the input centres.
    """
    problems = validate_set(gs)
    if problems:
        raise ValueError(f"invalid Gaussian set: {problems[0].message} (index {problems[0].index})")
    if len(gs) < 3:
        raise ValueError("insufficient points for covariance")
    rng = np.random.default_rng(rng_seed)
    if extent is None:
        extent = scene_extent(gs.centers)
    gs = gs.copy()
    trace: list[EventRecord] = []
    for t in range(1, sched.total_iterations + 1):
        values, visible = grad_src.contributions(gs, t)
        accumulate(gs, values, visible)
        phase = phase_for_iteration(t, sched)
        if phase is Phase.NONE:
            continue
        gs, rec = densify_event(gs, phase, t, sched.k_at(t), thr, extent, rng)
        trace.append(rec)
        log.debug("t=%d %s n=%d->%d E=%.4f->%.4f", t, phase.value, rec.n_before, rec.n_after,
                  rec.mean_entropy_before, rec.mean_entropy_after)
        if len(gs) < 3:
            raise SetExhausted(gs, trace)
    return DensifyResult(gs, trace)
