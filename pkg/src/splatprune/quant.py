"""Analytical per-Gaussian removal error from recorded blend state.

For a pixel whose ordered contributions are (c_k, alpha_k) with prefix colors
P_k = sum_{j<=k} T_j alpha_j c_j and transmittances T_{k+1} = prod_{j<=k}
(1 - alpha_j), the composite behind contribution k back-solves in closed form
from the final pixel value:

    b_{k+1} = (C_render - P_k) / (T_{k+1} + epsilon)

and removing k alone changes the pixel by T_k alpha_k (c_k - b_{k+1}), so its
squared error contribution is the squared norm of that vector. Scene-level
quantification accumulates this per Gaussian over every pixel of every view,
in one recorded forward pass per view, with no re-rendering.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .camera import ViewSet
from .model import GaussianScene
from .raster import DEFAULT_N_MAX, ContributionList, ContributionRecords, RenderOutput, render

EPSILON = 1e-9  # guard added to the transmittance denominator


@dataclass(frozen=True)
class QuantConstants:
    """Numerical constants of the quantification pass."""

    epsilon: float = EPSILON
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")


@dataclass(eq=False)
class BlendState:
    """Per-contribution prefix cache of one pixel.

    ``prefix_color[k]`` is the accumulated color through contribution k;
    ``transmittance[k]`` is the transmittance *after* k, i.e. the factor
    every later contribution is attenuated by.
    """

    prefix_color: np.ndarray   # (n, 3)
    transmittance: np.ndarray  # (n,)


@dataclass(eq=False)
class ErrorBuffer:
    """Per-Gaussian accumulated removal error and touch counts."""

    delta_se: np.ndarray     # (M,) float64
    touch_count: np.ndarray  # (M,) int64

    def __post_init__(self):
        if self.delta_se.shape != self.touch_count.shape:
            raise ValueError("delta_se and touch_count must have identical shape")

    def __len__(self) -> int:
        return self.delta_se.shape[0]

    @classmethod
    def zeros(cls, m: int) -> "ErrorBuffer":
        return cls(delta_se=np.zeros(m, np.float64), touch_count=np.zeros(m, np.int64))


def blend_prefix(h: ContributionList, background=(0.0, 0.0, 0.0)) -> tuple[np.ndarray, BlendState]:
    """Composite one pixel front to back, keeping the full prefix cache.

    Returns the final pixel color (background folded in against residual
    transmittance) and the per-contribution :class:`BlendState`.
    """
    dtype = h.alphas.dtype if len(h) else np.float64
    bg = np.asarray(background, dtype=dtype)
    if len(h) == 0:
        return bg.copy(), BlendState(
            prefix_color=np.zeros((0, 3), dtype), transmittance=np.zeros(0, dtype)
        )
    t_after = np.cumprod(1.0 - h.alphas)
    t_before = np.empty_like(t_after)
    t_before[0] = 1.0
    t_before[1:] = t_after[:-1]
    weights = t_before * h.alphas
    prefix = np.cumsum(weights[:, None] * h.colors, axis=0)
    c_render = prefix[-1] + t_after[-1] * bg
    return c_render, BlendState(prefix_color=prefix, transmittance=t_after)


def solve_background(c_render, p_k, t_next, eps: float = EPSILON) -> np.ndarray:
    """Back-solve the composite color behind contribution k.

    ``t_next`` is the transmittance after k. The guard ``eps`` keeps the
    division finite when ``t_next`` underflows; no clamping is applied to
    the result.
    """
    c_render = np.asarray(c_render)
    p_k = np.asarray(p_k)
    return (c_render - p_k) / (np.asarray(t_next) + c_render.dtype.type(eps))


def delta_se(t_k, alpha_k, c_k, b_next) -> float:
    """Squared pixel-error increase from removing one contribution.

    ``t_k`` is the transmittance the contribution was blended with. No
    clamping is applied to ``alpha_k``; test paths may pass alpha = 1.
    """
    v = (t_k * alpha_k) * (np.asarray(c_k) - np.asarray(b_next))
    return float(v @ v)


def quantify_pixel(
    h: ContributionList,
    c_render=None,
    state: BlendState | None = None,
    background=(0.0, 0.0, 0.0),
    eps: float = EPSILON,
) -> list[tuple[int, float]]:
    """Per-contribution removal errors of one pixel, front to back.

    ``c_render`` and ``state`` must come from :func:`blend_prefix` on the
    same list; both are recomputed from ``h`` and ``background`` when left
    as None. Each entry is independent: no contribution's score depends on
    any other's removal.
    """
    if (c_render is None) != (state is None):
        raise ValueError("pass both c_render and state, or neither")
    if c_render is None:
        c_render, state = blend_prefix(h, background)
    if len(h) == 0:
        return []
    dtype = h.alphas.dtype
    t_after = state.transmittance
    t_before = np.empty_like(t_after)
    t_before[0] = 1.0
    t_before[1:] = t_after[:-1]
    b = (np.asarray(c_render, dtype=dtype) - state.prefix_color) / (t_after + dtype.type(eps))[:, None]
    v = (t_before * h.alphas)[:, None] * (h.colors - b)
    scores = np.sum(v * v, axis=1)
    return [(int(i), float(s)) for i, s in zip(h.ids, scores)]


def records_delta_se(records: ContributionRecords, image: np.ndarray, eps: float, dtype) -> np.ndarray:
    """Vectorized removal error for every record of one rendered view.

    Identical arithmetic to :func:`quantify_pixel`, applied to the flat
    record arrays of a recorded render whose final image (background already
    folded in) is ``image``.
    """
    if len(records) == 0:
        return np.zeros(0, dtype)
    flat = image.reshape(-1, 3)
    c_render = flat[records.pix]
    b = (c_render - records.p_after) / (records.t_after + dtype(eps))[:, None]
    v = (records.t_before * records.alpha)[:, None] * (records.color - b)
    return np.sum(v * v, axis=1)


def quantify_view(
    scene: GaussianScene,
    view,
    consts: QuantConstants,
    background=(0.0, 0.0, 0.0),
    *,
    dtype=np.float32,
    sh_degree: int = 3,
) -> tuple[np.ndarray, np.ndarray, RenderOutput]:
    """One view's contribution to the error buffer.

    Returns (per-id float64 partial sums, per-id int64 touch counts, the
    recorded render). Per-record errors are computed in the pipeline dtype
    and accumulated in float64.
    """
    out = render(
        scene, view, background, record=True, dtype=dtype, n_max=consts.n_max, sh_degree=sh_degree
    )
    scores = records_delta_se(out.records, out.image, consts.epsilon, dtype)
    partial = np.zeros(len(scene), np.float64)
    counts = np.zeros(len(scene), np.int64)
    np.add.at(partial, out.records.gid, scores.astype(np.float64))
    np.add.at(counts, out.records.gid, 1)
    return partial, counts, out


def quantify_scene(
    scene: GaussianScene,
    views: ViewSet,
    consts: QuantConstants = QuantConstants(),
    background=(0.0, 0.0, 0.0),
    *,
    dtype=np.float32,
    sh_degree: int = 3,
    threads: int = 1,
) -> ErrorBuffer:
    """Accumulate removal errors over all views into one buffer.

    Per-view partial buffers are reduced in view order (left fold), so a run
    over views A + B equals the elementwise sum of the runs over A and over
    B whenever B is a single trailing view, and exactly doubles when a view
    list is repeated. With ``threads`` > 1 views are rendered concurrently;
    the reduction order is unchanged, so results match the single-threaded
    run bit for bit.
    """
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")

    def work(view):
        partial, counts, _ = quantify_view(
            scene, view, consts, background, dtype=dtype, sh_degree=sh_degree
        )
        return partial, counts

    if threads == 1 or len(views) == 1:
        results = [work(v) for v in views]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, views))

    buf = ErrorBuffer.zeros(len(scene))
    for partial, counts in results:
        buf.delta_se += partial
        buf.touch_count += counts
    return buf


@dataclass(eq=False)
class HistogramResult:
    """Log-scale histogram of nonzero scores, zeros binned separately."""

    zero_count: int
    edges_log10: np.ndarray  # (bins + 1,)
    counts: np.ndarray       # (bins,) int64


def histogram(buffer: ErrorBuffer, bins: int = 30) -> HistogramResult:
    """Histogram accumulated scores on a log10 axis.

    Bin edges span whole decades: floor(log10(min nonzero)) up to
    floor(log10(max)) + 1, split into ``bins`` equal bins. Zero scores are
    counted separately (log of zero is undefined).
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    vals = buffer.delta_se
    zero_count = int(np.count_nonzero(vals == 0))
    nz = vals[vals > 0]
    if nz.size == 0:
        edges = np.linspace(0.0, 1.0, bins + 1)
        return HistogramResult(zero_count, edges, np.zeros(bins, np.int64))
    logs = np.log10(nz)
    lo = np.floor(logs.min())
    hi = np.floor(logs.max()) + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(logs, bins=edges)
    return HistogramResult(zero_count, edges, counts.astype(np.int64))


def histogram_csv_rows(hist: HistogramResult) -> list[tuple[str, str, str]]:
    """Rows of (log10 lo, log10 hi, count); the zero bin uses '-inf' edges."""
    rows = [("-inf", "-inf", str(hist.zero_count))]
    for i in range(hist.counts.shape[0]):
        rows.append((repr(float(hist.edges_log10[i])), repr(float(hist.edges_log10[i + 1])), str(int(hist.counts[i]))))
    return rows


def write_scores_csv(buffer: ErrorBuffer, path, metadata: dict | None = None) -> None:
    """Write per-Gaussian scores as CSV.

    Metadata key/value pairs go first as '#' comment lines, then a header
    row, then one row per id. Floats are written with repr (shortest
    round-trip), so identical buffers produce identical bytes.
    """
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        for key in sorted(metadata or {}):
            fh.write(f"# {key}={metadata[key]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["gaussian_id", "delta_se", "touch_count"])
        for i in range(len(buffer)):
            writer.writerow([i, repr(float(buffer.delta_se[i])), int(buffer.touch_count[i])])


def read_scores_csv(path) -> tuple[ErrorBuffer, dict]:
    """Inverse of :func:`write_scores_csv`."""
    metadata: dict[str, str] = {}
    ids: list[int] = []
    scores: list[float] = []
    counts: list[int] = []
    with open(str(path), "r", encoding="utf-8", newline="") as fh:
        rows = []
        for line in fh:
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, val = body.split("=", 1)
                    metadata[key.strip()] = val
                continue
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    if header != ["gaussian_id", "delta_se", "touch_count"]:
        raise ValueError(f"{path}: unexpected scores header {header}")
    for row in reader:
        ids.append(int(row[0]))
        scores.append(float(row[1]))
        counts.append(int(row[2]))
    if ids != list(range(len(ids))) or not ids:
        raise ValueError(f"{path}: gaussian_id column must be dense 0..M-1")
    return (
        ErrorBuffer(delta_se=np.array(scores, np.float64), touch_count=np.array(counts, np.int64)),
        metadata,
    )
