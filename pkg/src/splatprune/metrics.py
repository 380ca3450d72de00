"""Image-quality metrics between rendered scenes.

All metrics operate on [0, 1]-clamped images in float64. SSIM follows the
standard windowed formulation on the luma channel: 11x11 Gaussian window
with sigma 1.5, k1 = 0.01, k2 = 0.03, dynamic range 1, means over valid
window positions only (no padding).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .camera import ViewSet
from .model import GaussianScene
from .raster import render

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
_LUMA = np.array([0.299, 0.587, 0.114])


def _clamp01(img) -> np.ndarray:
    return np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)


def mse(a, b) -> float:
    """Mean squared difference of two equal-shape images after clamping."""
    a = _clamp01(a)
    b = _clamp01(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images match."""
    m = mse(a, b)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / m)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b) -> float:
    """Mean local structural similarity on the luma channel.

    Images must be at least the window size on each axis.
    """
    a = _clamp01(a)
    b = _clamp01(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        a = a @ _LUMA
        b = b @ _LUMA
    elif a.ndim != 2:
        raise ValueError(f"expected HxW or HxWx3 images, got shape {a.shape}")
    h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(
            f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )

    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2

    mu_a = convolve2d(a, win, mode="valid")
    mu_b = convolve2d(b, win, mode="valid")
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = convolve2d(a * a, win, mode="valid") - mu_aa
    var_b = convolve2d(b * b, win, mode="valid") - mu_bb
    cov = convolve2d(a * b, win, mode="valid") - mu_ab

    num = (2.0 * mu_ab + c1) * (2.0 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class ViewMetrics:
    name: str
    mse: float
    psnr: float
    ssim: float


@dataclass
class MetricReport:
    per_view: list[ViewMetrics]
    mean_mse: float
    mean_psnr: float
    mean_ssim: float

    @property
    def view_count(self) -> int:
        return len(self.per_view)

    def to_dict(self) -> dict:
        return {
            "view_count": self.view_count,
            "mean_mse": self.mean_mse,
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "per_view": [
                {"name": v.name, "mse": v.mse, "psnr": v.psnr, "ssim": v.ssim}
                for v in self.per_view
            ],
        }

    def to_json(self, path) -> None:
        with open(str(path), "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def format_table(self) -> str:
        lines = [f"{'view':<12} {'mse':>12} {'psnr':>9} {'ssim':>8}"]
        for v in self.per_view:
            lines.append(f"{v.name:<12} {v.mse:>12.6e} {v.psnr:>9.3f} {v.ssim:>8.5f}")
        lines.append(
            f"{'mean':<12} {self.mean_mse:>12.6e} {self.mean_psnr:>9.3f} {self.mean_ssim:>8.5f}"
        )
        return "\n".join(lines)


def eval_views(
    scene_a: GaussianScene,
    scene_b: GaussianScene,
    views: ViewSet,
    background=(0.0, 0.0, 0.0),
    *,
    dtype=np.float32,
    sh_degree: int = 3,
) -> MetricReport:
    """Render both scenes on every view and compare.

    Rendering uses the production pipeline (same cutoffs as quantification);
    metric arithmetic is float64. Mean PSNR is the arithmetic mean of
    per-view values, so one exact view makes it +inf.
    """
    per_view: list[ViewMetrics] = []
    for view in views:
        img_a = render(scene_a, view, background, dtype=dtype, sh_degree=sh_degree).image
        img_b = render(scene_b, view, background, dtype=dtype, sh_degree=sh_degree).image
        per_view.append(
            ViewMetrics(name=view.name, mse=mse(img_a, img_b), psnr=psnr(img_a, img_b), ssim=ssim(img_a, img_b))
        )
    return MetricReport(
        per_view=per_view,
        mean_mse=float(np.mean([v.mse for v in per_view])),
        mean_psnr=float(np.mean([v.psnr for v in per_view])),
        mean_ssim=float(np.mean([v.ssim for v in per_view])),
    )
