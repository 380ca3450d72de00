"""Contribution-aware scoring and pruning for Gaussian-splat scenes.

The pipeline: render with per-pixel contribution recording, back-solve the
composite behind each contribution from the final pixel value, accumulate
each Gaussian's closed-form removal error over all pixels and views, then
prune by rank against a ratio or an error budget.
"""

__version__ = "0.1.0"

from .camera import CameraView, ViewSet, load_views, project, save_views
from .metrics import MetricReport, eval_views, mse, psnr, ssim
from .model import Gaussian, GaussianScene, PlyParseError, load_ply, save_ply, subset
from .oracle import OracleReport, audit, background_direct, leave_one_out_se
from .prune import PruneConfig, PruneReport, iterative_prune, prune_budget, prune_ratio, rank
from .quant import (
    BlendState,
    ErrorBuffer,
    QuantConstants,
    blend_prefix,
    delta_se,
    histogram,
    quantify_pixel,
    quantify_scene,
    solve_background,
)
from .raster import ContributionList, RenderOutput, render
from .synth import SplitMix64, SynthSpec, generate

__all__ = [
    "__version__",
    "BlendState",
    "CameraView",
    "ContributionList",
    "ErrorBuffer",
    "Gaussian",
    "GaussianScene",
    "MetricReport",
    "OracleReport",
    "PlyParseError",
    "PruneConfig",
    "PruneReport",
    "QuantConstants",
    "RenderOutput",
    "SplitMix64",
    "SynthSpec",
    "ViewSet",
    "audit",
    "background_direct",
    "blend_prefix",
    "delta_se",
    "eval_views",
    "generate",
    "histogram",
    "iterative_prune",
    "leave_one_out_se",
    "load_ply",
    "load_views",
    "mse",
    "project",
    "prune_budget",
    "prune_ratio",
    "psnr",
    "quantify_pixel",
    "quantify_scene",
    "rank",
    "render",
    "save_ply",
    "save_views",
    "solve_background",
    "ssim",
    "subset",
]
