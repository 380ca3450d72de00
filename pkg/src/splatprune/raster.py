"""Front-to-back alpha-compositing rasterizer with contribution recording.

Splats are blended in global depth order. Per pixel, a contribution with
footprint alpha below ALPHA_MIN is skipped outright; a contribution that
would drive transmittance below T_TERMINATE ends the pixel without being
blended; after N_MAX blended contributions the pixel stops accepting more.
The same stop rules apply whether or not recording is on, so the rendered
image always equals the blend of the recorded per-pixel list plus the
residual-transmittance background term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraView, ProjectedGaussians, project
from .model import GaussianScene

ALPHA_MIN = 1.0 / 255.0   # contributions below this alpha are skipped
ALPHA_CLAMP = 0.99        # per-pixel alpha ceiling
T_TERMINATE = 1e-4        # stop once transmittance would fall below this
DEFAULT_N_MAX = 64        # per-pixel cap on blended contributions
CULL_RADIUS = 3.0         # blend window half-extent in standard deviations


@dataclass(eq=False)
class ContributionList:
    """Ordered (front-to-back) per-pixel contributions: parallel arrays."""

    ids: np.ndarray     # (n,) int64
    colors: np.ndarray  # (n, 3)
    alphas: np.ndarray  # (n,)

    def __len__(self) -> int:
        return self.ids.shape[0]

    @classmethod
    def build(cls, entries, dtype=np.float64) -> "ContributionList":
        """From an iterable of (id, rgb, alpha) tuples."""
        entries = list(entries)
        if not entries:
            return cls(
                ids=np.zeros(0, np.int64),
                colors=np.zeros((0, 3), dtype),
                alphas=np.zeros(0, dtype),
            )
        ids = np.array([e[0] for e in entries], np.int64)
        colors = np.array([np.broadcast_to(np.asarray(e[1], dtype), 3) for e in entries], dtype)
        alphas = np.array([e[2] for e in entries], dtype)
        return cls(ids=ids, colors=colors, alphas=alphas)


@dataclass(eq=False)
class ContributionRecords:
    """Flat record of every blended contribution of one rendered view.

    Records are emitted in blend order, so within one pixel they are already
    front to back. ``p_after`` and ``t_after`` are the running color prefix
    and transmittance immediately after the contribution was blended, in the
    pipeline dtype; ``t_before`` is the transmittance it was blended with.
    """

    pix: np.ndarray       # (R,) int64 flat pixel index (row * width + col)
    gid: np.ndarray       # (R,) int64 scene id
    alpha: np.ndarray     # (R,)
    color: np.ndarray     # (R, 3)
    t_before: np.ndarray  # (R,)
    t_after: np.ndarray   # (R,)
    p_after: np.ndarray   # (R, 3)

    def __len__(self) -> int:
        return self.pix.shape[0]

    @classmethod
    def empty(cls, dtype) -> "ContributionRecords":
        z = np.zeros(0, dtype)
        return cls(
            pix=np.zeros(0, np.int64),
            gid=np.zeros(0, np.int64),
            alpha=z,
            color=np.zeros((0, 3), dtype),
            t_before=z.copy(),
            t_after=z.copy(),
            p_after=np.zeros((0, 3), dtype),
        )

    def pixel_order(self) -> np.ndarray:
        """Stable sort by pixel; within a pixel the blend order is preserved."""
        return np.argsort(self.pix, kind="stable")

    def iter_pixels(self):
        """Yield (flat pixel index, ContributionList) for every touched pixel."""
        if len(self) == 0:
            return
        order = self.pixel_order()
        pix_sorted = self.pix[order]
        boundaries = np.flatnonzero(np.diff(pix_sorted)) + 1
        for chunk in np.split(order, boundaries):
            yield int(self.pix[chunk[0]]), ContributionList(
                ids=self.gid[chunk],
                colors=self.color[chunk],
                alphas=self.alpha[chunk],
            )


@dataclass(eq=False)
class RenderOutput:
    """One rendered view plus the blend-state byproducts.

    ``image`` includes the background folded in against residual
    transmittance. ``terminated`` marks pixels where the transmittance
    cutoff dropped at least one contribution; ``truncated`` marks pixels
    where the per-pixel cap did. On pixels with neither flag the recorded
    list is exhaustive.
    """

    image: np.ndarray          # (H, W, 3) pipeline dtype
    background: np.ndarray     # (3,)
    transmittance: np.ndarray  # (H, W) residual T after all blending
    n_blended: np.ndarray      # (H, W) int32
    terminated: np.ndarray     # (H, W) bool
    truncated: np.ndarray      # (H, W) bool
    records: ContributionRecords | None = None

    @property
    def flagged(self) -> np.ndarray:
        """Pixels whose recorded list is not exhaustive."""
        return self.terminated | self.truncated


def render(
    scene: GaussianScene,
    view: CameraView,
    background=(0.0, 0.0, 0.0),
    record: bool = False,
    *,
    dtype=np.float32,
    n_max: int = DEFAULT_N_MAX,
    sh_degree: int = 3,
    projected: ProjectedGaussians | None = None,
) -> RenderOutput:
    """Render one view by depth-ordered alpha compositing.

    Parameters
    ----------
    scene, view : scene and camera to render.
    background : RGB folded in against residual transmittance at the end.
    record : keep per-contribution records (needed for error quantification).
    dtype : np.float32 for the production pipeline, np.float64 for validation.
    n_max : per-pixel cap on blended contributions.
    projected : optional pre-projected splats (must match scene/view/dtype).
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    h, w = view.height, view.width
    bg = np.asarray(background, dtype=dtype)
    if bg.shape != (3,):
        raise ValueError(f"background must be RGB, got shape {bg.shape}")

    proj = projected if projected is not None else project(scene, view, sh_degree, dtype=dtype)
    order = np.argsort(proj.depth, kind="stable")

    color_sum = np.zeros((h, w, 3), dtype=dtype)
    trans = np.ones((h, w), dtype=dtype)
    n_blended = np.zeros((h, w), dtype=np.int32)
    alive = np.ones((h, w), dtype=bool)
    terminated = np.zeros((h, w), dtype=bool)
    truncated = np.zeros((h, w), dtype=bool)
    capped = np.zeros((h, w), dtype=bool)

    rec_pix: list[np.ndarray] = []
    rec_gid: list[np.ndarray] = []
    rec_alpha: list[np.ndarray] = []
    rec_color: list[np.ndarray] = []
    rec_tb: list[np.ndarray] = []
    rec_ta: list[np.ndarray] = []
    rec_pa: list[np.ndarray] = []

    one = dtype(1.0)
    alpha_min = dtype(ALPHA_MIN)
    alpha_clamp = dtype(ALPHA_CLAMP)
    t_term = dtype(T_TERMINATE)

    for j in order:
        mx, my = proj.mean2d[j]
        c00 = proj.cov2d[j, 0, 0]
        c01 = proj.cov2d[j, 0, 1]
        c11 = proj.cov2d[j, 1, 1]
        det = c00 * c11 - c01 * c01
        if not np.isfinite(det) or det <= 0:
            continue  # degenerate screen covariance

        rx = CULL_RADIUS * np.sqrt(float(c00))
        ry = CULL_RADIUS * np.sqrt(float(c11))
        x0 = max(int(np.floor(mx - rx)), 0)
        x1 = min(int(np.ceil(mx + rx)) + 1, w)
        y0 = max(int(np.floor(my - ry)), 0)
        y1 = min(int(np.ceil(my + ry)) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue

        win = np.s_[y0:y1, x0:x1]
        alive_win = alive[win]
        if not alive_win.any():
            continue

        inv_det = one / det
        i00 = c11 * inv_det
        i01 = -c01 * inv_det
        i11 = c00 * inv_det
        dx = (np.arange(x0, x1, dtype=dtype) - mx)[None, :]
        dy = (np.arange(y0, y1, dtype=dtype) - my)[:, None]
        power = dtype(-0.5) * (i00 * dx * dx + i11 * dy * dy) - i01 * dx * dy
        with np.errstate(under="ignore"):
            alpha = proj.opacity[j] * np.exp(power)
        alpha = np.minimum(alpha, alpha_clamp)

        cand = (power <= 0) & (alpha >= alpha_min)
        overflow = cand & capped[win]
        if overflow.any():
            truncated[win] |= overflow  # cap dropped a real contribution
        cand &= alive_win
        if not cand.any():
            continue

        t_win = trans[win]
        new_t = t_win * (one - alpha)
        term = cand & (new_t < t_term)
        blend = cand & ~term
        if term.any():
            # the terminating contribution itself is dropped
            alive[win] &= ~term
            terminated[win] |= term
        if not blend.any():
            continue

        weight = t_win * alpha
        csum_win = color_sum[win]
        contrib = weight[..., None] * proj.color[j]
        if record:
            t_before = t_win[blend]
        csum_win[blend] += contrib[blend]
        trans[win][blend] = new_t[blend]
        nb_win = n_blended[win]
        nb_win[blend] += 1
        hit_cap = blend & (nb_win >= n_max)
        if hit_cap.any():
            alive[win] &= ~hit_cap
            capped[win] |= hit_cap

        if record:
            yy, xx = np.nonzero(blend)
            rec_pix.append(((y0 + yy) * w + (x0 + xx)).astype(np.int64))
            rec_gid.append(np.full(yy.shape[0], proj.ids[j], dtype=np.int64))
            rec_alpha.append(alpha[blend])
            rec_color.append(np.broadcast_to(proj.color[j], (yy.shape[0], 3)).copy())
            rec_tb.append(t_before)
            rec_ta.append(new_t[blend])
            rec_pa.append(csum_win[blend])

    image = color_sum + trans[..., None] * bg

    records = None
    if record:
        if rec_pix:
            records = ContributionRecords(
                pix=np.concatenate(rec_pix),
                gid=np.concatenate(rec_gid),
                alpha=np.concatenate(rec_alpha),
                color=np.concatenate(rec_color),
                t_before=np.concatenate(rec_tb),
                t_after=np.concatenate(rec_ta),
                p_after=np.concatenate(rec_pa),
            )
        else:
            records = ContributionRecords.empty(dtype)

    return RenderOutput(
        image=image,
        background=bg,
        transmittance=trans,
        n_blended=n_blended,
        terminated=terminated,
        truncated=truncated,
        records=records,
    )
