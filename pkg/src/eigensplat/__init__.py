"""Eigenentropy-guided densification and pruning of 3D Gaussian point sets."""

from .densify import (
    DensifyResult,
    EntropyAction,
    EventRecord,
    GradientAction,
    Phase,
    Schedule,
    SetExhausted,
    Thresholds,
    densify_event,
    entropy_phase_action,
    gradient_phase_action,
    opacity_prune,
    phase_for_iteration,
    run_densification,
    split_fan_out,
    split_gaussian,
)
from .features import EigenFeatures, eigenentropy, features_for_points, features_for_set, planarity
from .metrics import ChamferReport, chamfer_c2c, mean_eigenentropy, outlier_entropy_stat, psnr
from .model import Gaussian, GaussianSet, GrayImage, validate_set
from .plyio import read_ply, write_ply
from .sources import FileSource, GradientSource, SurfaceResidualSource, ZeroSource
from .spatial import KnnIndex, build_index
from .synth import gaussians_from_points, synth_scene

__version__ = "0.1.0"
