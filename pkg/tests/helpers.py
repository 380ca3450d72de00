"""Shared construction helpers for the test suite.

Everything here builds scenes with degree-0 color encoding so tests can
reason about pixel colors without tracking view directions.
"""

from __future__ import annotations

import numpy as np

from splatprune.camera import SH_C0, CameraView, ViewSet
from splatprune.model import GaussianScene


def inverse_sigmoid(a):
    a = np.asarray(a, np.float64)
    return np.log(a / (1.0 - a))


def encode_dc(rgb):
    """Map a target base color to the raw dc coefficient (degree 0 only)."""
    return (np.asarray(rgb, np.float64) - 0.5) / SH_C0


def build_scene(
    positions,
    colors=None,
    opacities=None,
    scales=None,
    quats=None,
) -> GaussianScene:
    """Assemble a scene from plain per-splat parameters.

    colors are post-activation base colors, opacities are post-sigmoid,
    scales are linear standard deviations. Missing arguments get benign
    defaults (mid gray, 0.5 opacity, isotropic 0.1 sigma, identity pose).
    """
    positions = np.asarray(positions, np.float64).reshape(-1, 3)
    m = positions.shape[0]
    if colors is None:
        colors = np.full((m, 3), 0.5)
    if opacities is None:
        opacities = np.full(m, 0.5)
    if scales is None:
        scales = np.full((m, 3), 0.1)
    if quats is None:
        quats = np.tile([1.0, 0.0, 0.0, 0.0], (m, 1))
    colors = np.asarray(colors, np.float64).reshape(m, 3)
    opacities = np.asarray(opacities, np.float64).reshape(m)
    scales = np.asarray(scales, np.float64).reshape(m, 3)
    quats = np.asarray(quats, np.float64).reshape(m, 4)
    return GaussianScene(
        positions=positions,
        normals=np.zeros((m, 3)),
        sh_dc=encode_dc(colors),
        sh_rest=np.zeros((m, 45)),
        opacity_logit=inverse_sigmoid(opacities),
        log_scale=np.log(scales),
        rotation=quats,
    )


def front_camera(width=32, height=32, fx=None, name="front") -> CameraView:
    """Identity-pose camera at the origin looking down +z."""
    if fx is None:
        fx = float(width)
    return CameraView(
        name=name,
        width=width,
        height=height,
        fx=fx,
        fy=fx,
        cx=(width - 1) / 2.0,
        cy=(height - 1) / 2.0,
        world_to_camera=np.eye(4),
    )


def single_view(width=32, height=32, fx=None) -> ViewSet:
    return ViewSet(views=(front_camera(width, height, fx),))
