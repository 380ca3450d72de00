"""Brute-force cross-checks for the analytical removal errors.

Everything here is deliberately slow and independent of the closed-form
back-solve: transmittances are rebuilt by direct products, composites behind
a contribution by direct sums (no epsilon guard), and whole-scene scores by
re-rendering with each Gaussian left out. Guards keep the quadratic paths at
desk scale.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .camera import ViewSet, project
from .model import GaussianScene, subset
from .quant import QuantConstants, quantify_view
from .raster import ContributionList, render


def background_direct(h: ContributionList, k: int, background=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Composite behind contribution k by direct summation, no epsilon.

    Computes sum_{j>k} (T_j / T_{k+1}) alpha_j c_j plus the residual
    background term (T_{N+1} / T_{k+1}) * bg, with every transmittance formed
    as an explicit product in float64.
    """
    n = len(h)
    if not 0 <= k < n:
        raise IndexError(f"contribution index {k} out of range [0, {n})")
    alphas = h.alphas.astype(np.float64)
    colors = h.colors.astype(np.float64)
    bg = np.asarray(background, dtype=np.float64)

    def t_at(i: int) -> float:
        # transmittance in front of contribution i: prod_{j<i} (1 - alpha_j)
        t = 1.0
        for j in range(i):
            t *= 1.0 - alphas[j]
        return t

    t_next = t_at(k + 1)
    out = np.zeros(3, np.float64)
    for j in range(k + 1, n):
        out += (t_at(j) / t_next) * alphas[j] * colors[j]
    out += (t_at(n) / t_next) * bg
    return out


def background_direct_all(h: ContributionList, background=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Direct-sum composites behind every contribution at once.

    Vectorized form of :func:`background_direct`: transmittances by a
    sequential product, tail sums by reversed accumulation, one division by
    T_{k+1} per row. Returns an (n, 3) array. Against the guarded
    closed-form solve the exact relation is
    ``solve = direct * T_next / (T_next + eps)``, so the guard shifts each
    component by ``|direct| * eps / (T_next + eps)``.
    """
    n = len(h)
    alphas = h.alphas.astype(np.float64)
    colors = h.colors.astype(np.float64)
    bg = np.asarray(background, dtype=np.float64)
    if n == 0:
        return np.zeros((0, 3), np.float64)
    t = np.empty(n + 1, np.float64)  # t[i] = transmittance in front of contribution i
    t[0] = 1.0
    for i in range(n):
        t[i + 1] = t[i] * (1.0 - alphas[i])
    terms = t[:n, None] * alphas[:, None] * colors  # T_j alpha_j c_j
    tail = np.zeros((n, 3), np.float64)
    if n > 1:
        tail[: n - 1] = np.cumsum(terms[::-1], axis=0)[::-1][1:]
    return (tail + t[n] * bg) / t[1:, None]


def leave_one_out_se(
    scene: GaussianScene,
    views: ViewSet,
    gid: int,
    background=(0.0, 0.0, 0.0),
    *,
    n_max: int = 64,
    sh_degree: int = 3,
) -> float:
    """Squared image change from removing one Gaussian, by re-rendering.

    Both renders run in float64; the difference is summed unclamped over all
    pixels and views.
    """
    if not 0 <= gid < len(scene):
        raise IndexError(f"gaussian id {gid} out of range [0, {len(scene)})")
    keep = [i for i in range(len(scene)) if i != gid]
    reduced, _ = subset(scene, keep)
    total = 0.0
    for view in views:
        full = render(scene, view, background, dtype=np.float64, n_max=n_max, sh_degree=sh_degree)
        part = render(reduced, view, background, dtype=np.float64, n_max=n_max, sh_degree=sh_degree)
        diff = full.image - part.image
        total += float(np.sum(diff * diff))
    return total


@dataclass(eq=False)
class OracleReport:
    """Side-by-side analytical and brute-force scores.

    ``analytic`` uses the production epsilon guard; ``analytic_exact`` reruns
    the identical accumulation with epsilon = 0 so the guard's effect is
    measured rather than estimated. ``affected`` marks Gaussians whose screen
    footprint overlaps a pixel where the transmittance cutoff or the
    per-pixel cap dropped contributions; exact agreement is not expected
    there. Relative discrepancies use max(|brute|, rel_floor) as denominator.
    """

    analytic: np.ndarray        # (M,) float64, production epsilon
    analytic_exact: np.ndarray  # (M,) float64, epsilon = 0
    brute: np.ndarray           # (M,) float64 leave-one-out
    touch_count: np.ndarray     # (M,) int64
    affected: np.ndarray        # (M,) bool
    flagged_pixels: int
    epsilon: float
    rel_floor: float
    dtype_name: str
    elapsed_seconds: float

    def __len__(self) -> int:
        return self.analytic.shape[0]

    def relative_discrepancy(self, exact: bool = False) -> np.ndarray:
        a = self.analytic_exact if exact else self.analytic
        denom = np.maximum(np.abs(self.brute), self.rel_floor)
        return np.abs(a - self.brute) / denom

    def max_clean_discrepancy(self, exact: bool = False) -> float:
        """Max relative discrepancy over Gaussians away from flagged pixels."""
        rel = self.relative_discrepancy(exact=exact)
        clean = rel[~self.affected]
        return float(clean.max()) if clean.size else 0.0

    def epsilon_shift(self) -> np.ndarray:
        """Measured per-Gaussian effect of the epsilon guard."""
        return np.abs(self.analytic - self.analytic_exact)

    def summary(self) -> dict:
        return {
            "gaussians": int(len(self)),
            "flagged_pixels": self.flagged_pixels,
            "affected_gaussians": int(np.count_nonzero(self.affected)),
            "max_rel_discrepancy": self.max_clean_discrepancy(exact=False),
            "max_rel_discrepancy_exact_division": self.max_clean_discrepancy(exact=True),
            "max_epsilon_shift": float(self.epsilon_shift().max()) if len(self) else 0.0,
            "epsilon": self.epsilon,
            "rel_floor": self.rel_floor,
            "dtype": self.dtype_name,
            "elapsed_seconds": self.elapsed_seconds,
        }

    def csv_rows(self) -> list[list]:
        rel = self.relative_discrepancy(exact=False)
        rel_exact = self.relative_discrepancy(exact=True)
        rows = [
            [
                "gaussian_id",
                "analytic_delta_se",
                "analytic_delta_se_exact_division",
                "brute_force_se",
                "rel_discrepancy",
                "rel_discrepancy_exact_division",
                "touch_count",
                "affected_by_cutoffs",
            ]
        ]
        for i in range(len(self)):
            rows.append(
                [
                    i,
                    repr(float(self.analytic[i])),
                    repr(float(self.analytic_exact[i])),
                    repr(float(self.brute[i])),
                    repr(float(rel[i])),
                    repr(float(rel_exact[i])),
                    int(self.touch_count[i]),
                    int(self.affected[i]),
                ]
            )
        return rows


MAX_AUDIT_GAUSSIANS = 200
MAX_AUDIT_PIXELS = 128 * 128


def audit(
    scene: GaussianScene,
    views: ViewSet,
    consts: QuantConstants = QuantConstants(),
    background=(0.0, 0.0, 0.0),
    *,
    dtype=np.float32,
    sh_degree: int = 3,
    rel_floor: float = 1e-12,
    max_gaussians: int = MAX_AUDIT_GAUSSIANS,
    max_pixels: int = MAX_AUDIT_PIXELS,
) -> OracleReport:
    """Compare analytical scores against leave-one-out re-rendering.

    The analytical side runs the production pipeline at ``dtype`` twice,
    once with the configured epsilon and once with epsilon = 0. The brute
    side renders scene-minus-one in float64 for every Gaussian, hence the
    size guards.
    """
    if len(scene) > max_gaussians:
        raise ValueError(
            f"audit is quadratic: scene has {len(scene)} Gaussians, limit {max_gaussians}"
        )
    for view in views:
        if view.width * view.height > max_pixels:
            raise ValueError(
                f"audit view {view.name!r} has {view.width * view.height} pixels, "
                f"limit {max_pixels}"
            )

    t0 = time.perf_counter()
    m = len(scene)
    consts_exact = QuantConstants(epsilon=0.0, n_max=consts.n_max)
    analytic = np.zeros(m, np.float64)
    analytic_exact = np.zeros(m, np.float64)
    touch = np.zeros(m, np.int64)
    affected = np.zeros(m, bool)
    flagged_pixels = 0

    for view in views:
        partial, counts, out = quantify_view(
            scene, view, consts, background, dtype=dtype, sh_degree=sh_degree
        )
        partial_exact, _, _ = quantify_view(
            scene, view, consts_exact, background, dtype=dtype, sh_degree=sh_degree
        )
        analytic += partial
        analytic_exact += partial_exact
        touch += counts

        flags = out.flagged
        flagged_pixels += int(np.count_nonzero(flags))
        if flags.any():
            proj = project(scene, view, sh_degree, dtype=dtype)
            for j in range(len(proj)):
                if affected[proj.ids[j]]:
                    continue
                mx, my = proj.mean2d[j]
                rx = 3.0 * float(np.sqrt(proj.cov2d[j, 0, 0]))
                ry = 3.0 * float(np.sqrt(proj.cov2d[j, 1, 1]))
                x0 = max(int(np.floor(mx - rx)), 0)
                x1 = min(int(np.ceil(mx + rx)) + 1, view.width)
                y0 = max(int(np.floor(my - ry)), 0)
                y1 = min(int(np.ceil(my + ry)) + 1, view.height)
                if x0 < x1 and y0 < y1 and flags[y0:y1, x0:x1].any():
                    affected[proj.ids[j]] = True

    brute = np.zeros(m, np.float64)
    baselines = [
        render(scene, v, background, dtype=np.float64, n_max=consts.n_max, sh_degree=sh_degree)
        for v in views
    ]
    for gid in range(m):
        keep = [i for i in range(m) if i != gid]
        reduced, _ = subset(scene, keep)
        total = 0.0
        for view, base in zip(views, baselines):
            part = render(
                reduced, view, background, dtype=np.float64, n_max=consts.n_max, sh_degree=sh_degree
            )
            diff = base.image - part.image
            total += float(np.sum(diff * diff))
        brute[gid] = total

    return OracleReport(
        analytic=analytic,
        analytic_exact=analytic_exact,
        brute=brute,
        touch_count=touch,
        affected=affected,
        flagged_pixels=flagged_pixels,
        epsilon=consts.epsilon,
        rel_floor=rel_floor,
        dtype_name=np.dtype(dtype).name,
        elapsed_seconds=time.perf_counter() - t0,
    )
