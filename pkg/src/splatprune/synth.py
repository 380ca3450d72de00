"""Deterministic synthetic scenes and camera rigs for tests and experiments.

All randomness flows through SplitMix64, a 64-bit mixing generator pinned
here so the same seed yields bit-identical scenes on every platform. Floats
are drawn as (next() >> 11) * 2^-53, the standard 53-bit mantissa fill.

Modes
-----
random
    Uniform cloud inside the extent box.
layered
    Depth-stacked semi-transparent layers with heavy footprint overlap;
    opacities stay low enough that no pixel reaches the transmittance
    cutoff at the default image size.
wall-occluder
    Three near-opaque wall sheets in front of a group of hidden Gaussians;
    cameras sit on one side so the hidden group is occluded in every view.
    Hidden ids are the trailing ids (see :func:`wall_hidden_ids`).
coincident-pairs
    Exact duplicate pairs at identical poses: ids i and i + P are copies
    (see :func:`coincident_pair_ids`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import SH_C0, CameraView, ViewSet
from .model import GaussianScene

MODES = ("random", "layered", "wall-occluder", "coincident-pairs")

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Pinned 64-bit splitmix generator with the published splitmix64 mixing constants."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform in [0, 1) with full 53-bit mantissa."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float, size=None):
        if size is None:
            return lo + (hi - lo) * self.next_float()
        flat = np.array(
            [lo + (hi - lo) * self.next_float() for _ in range(int(np.prod(size)))],
            dtype=np.float64,
        )
        return flat.reshape(size)


@dataclass(frozen=True)
class SynthSpec:
    """Everything that determines a generated scene and its camera rig."""

    seed: int
    count: int
    mode: str = "layered"
    extent: float = 1.0
    opacity_range: tuple[float, float] = (0.08, 0.25)
    scale_range: tuple[float, float] = (0.04, 0.16)
    n_views: int = 3
    width: int = 64
    height: int = 64

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.extent <= 0:
            raise ValueError(f"extent must be positive, got {self.extent}")
        lo, hi = self.opacity_range
        if not (0 < lo <= hi < 1):
            raise ValueError(f"opacity_range must satisfy 0 < lo <= hi < 1, got {self.opacity_range}")
        slo, shi = self.scale_range
        if not (0 < slo <= shi):
            raise ValueError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")
        if self.n_views < 1:
            raise ValueError(f"n_views must be >= 1, got {self.n_views}")
        if self.width < 8 or self.height < 8:
            raise ValueError("image must be at least 8x8")


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _random_quat(rng: SplitMix64) -> list[float]:
    # uniform on S^3 via 4 gaussian-free draws is biased; a normalized box
    # draw is fine for test geometry as long as the norm is bounded away
    # from zero
    while True:
        q = [rng.uniform(-1.0, 1.0) for _ in range(4)]
        n = math.sqrt(sum(x * x for x in q))
        if n > 1e-3:
            return [x / n for x in q]


def _color_dc(rng: SplitMix64) -> list[float]:
    # DC coefficient such that the degree-0 color lands uniformly in [0.05, 0.95]
    return [(rng.uniform(0.05, 0.95) - 0.5) / SH_C0 for _ in range(3)]


def _look_at(eye: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World-to-camera matrix for x right, y down, z forward."""
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    world_up = np.array([0.0, 1.0, 0.0])
    if abs(float(fwd @ world_up)) > 0.999:
        world_up = np.array([1.0, 0.0, 0.0])
    right = np.cross(world_up, fwd)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    w2c = np.eye(4)
    w2c[:3, :3] = rot
    w2c[:3, 3] = -rot @ eye
    return w2c


def _orbit_views(spec: SynthSpec, azimuths_deg, elevation_deg: float = 12.0) -> ViewSet:
    radius = 2.6 * spec.extent
    focal = float(spec.width)
    views = []
    for i, az in enumerate(azimuths_deg):
        a = math.radians(az)
        e = math.radians(elevation_deg)
        eye = np.array(
            [
                radius * math.cos(e) * math.sin(a),
                radius * math.sin(e),
                -radius * math.cos(e) * math.cos(a),
            ]
        )
        views.append(
            CameraView(
                name=f"view{i:02d}",
                width=spec.width,
                height=spec.height,
                fx=focal,
                fy=focal,
                cx=(spec.width - 1) / 2.0,
                cy=(spec.height - 1) / 2.0,
                world_to_camera=_look_at(eye, np.zeros(3)),
            )
        )
    return ViewSet(views=tuple(views))


def _spread(n: int, half_span: float) -> list[float]:
    if n == 1:
        return [0.0]
    return [-half_span + 2.0 * half_span * i / (n - 1) for i in range(n)]


def _scene_from_rows(rows: list[dict]) -> GaussianScene:
    m = len(rows)
    return GaussianScene(
        positions=np.array([r["pos"] for r in rows], np.float32),
        normals=np.zeros((m, 3), np.float32),
        sh_dc=np.array([r["dc"] for r in rows], np.float32),
        sh_rest=np.array([r["rest"] for r in rows], np.float32),
        opacity_logit=np.array([r["op"] for r in rows], np.float32),
        log_scale=np.array([r["scale"] for r in rows], np.float32),
        rotation=np.array([r["quat"] for r in rows], np.float32),
    )


def _base_row(rng: SplitMix64, spec: SynthSpec, pos, scale_iso: float | None = None) -> dict:
    lo, hi = spec.scale_range
    e = spec.extent
    if scale_iso is None:
        scale = [
            math.log(e * math.exp(rng.uniform(math.log(lo), math.log(hi))))
            for _ in range(3)
        ]
    else:
        scale = [math.log(scale_iso)] * 3
    rest = np.zeros(45, np.float64)
    for ch in range(3):
        for coeff in range(3):  # degree-1 lobes only, small amplitude
            rest[ch * 15 + coeff] = rng.uniform(-0.08, 0.08)
    return {
        "pos": pos,
        "quat": _random_quat(rng),
        "scale": scale,
        "op": _logit(rng.uniform(*spec.opacity_range)),
        "dc": _color_dc(rng),
        "rest": rest,
    }


def _gen_random(rng: SplitMix64, spec: SynthSpec) -> list[dict]:
    e = spec.extent
    return [
        _base_row(rng, spec, [rng.uniform(-0.7 * e, 0.7 * e) for _ in range(3)])
        for _ in range(spec.count)
    ]


def _gen_layered(rng: SplitMix64, spec: SynthSpec) -> list[dict]:
    e = spec.extent
    n_layers = min(5, spec.count)
    rows = []
    for i in range(spec.count):
        layer = i % n_layers
        z = -0.6 * e + 1.2 * e * (layer / max(n_layers - 1, 1))
        pos = [rng.uniform(-0.7 * e, 0.7 * e), rng.uniform(-0.7 * e, 0.7 * e), z]
        rows.append(_base_row(rng, spec, pos))
    return rows


def wall_hidden_ids(spec: SynthSpec) -> np.ndarray:
    """Ids of the fully occluded group in wall-occluder mode (trailing ids)."""
    if spec.mode != "wall-occluder":
        raise ValueError("hidden ids are only defined for wall-occluder mode")
    n_hidden = max(1, spec.count // 5)
    return np.arange(spec.count - n_hidden, spec.count, dtype=np.int64)


def wall_sheet_ids(spec: SynthSpec) -> np.ndarray:
    """Ids of the three opaque wall sheets in wall-occluder mode."""
    if spec.mode != "wall-occluder":
        raise ValueError("wall ids are only defined for wall-occluder mode")
    n_hidden = max(1, spec.count // 5)
    first = spec.count - n_hidden - 3
    return np.arange(first, first + 3, dtype=np.int64)


def _gen_wall(rng: SplitMix64, spec: SynthSpec) -> list[dict]:
    if spec.count < 4:
        raise ValueError("wall-occluder mode needs at least 4 Gaussians")
    e = spec.extent
    n_hidden = max(1, spec.count // 5)
    n_front = spec.count - n_hidden - 3
    if n_front < 0:
        raise ValueError("wall-occluder mode needs count >= hidden group + 3 walls")
    rows = []
    # visible foreground cloud between the cameras and the wall
    for _ in range(n_front):
        pos = [rng.uniform(-0.6 * e, 0.6 * e), rng.uniform(-0.6 * e, 0.6 * e), rng.uniform(-1.6 * e, -0.8 * e)]
        rows.append(_base_row(rng, spec, pos))
    # three wide near-opaque sheets; per-pixel alpha clamps to 0.99 across
    # the whole frustum, so transmittance behind them is below the cutoff
    for i in range(3):
        row = _base_row(rng, spec, [0.0, 0.0, (-0.1 + 0.1 * i) * e])
        row["quat"] = [1.0, 0.0, 0.0, 0.0]
        row["scale"] = [math.log(6.0 * e), math.log(6.0 * e), math.log(0.01 * e)]
        row["op"] = 8.0  # sigmoid(8) ~ 0.99966
        rows.append(row)
    # hidden group strictly behind the wall
    for _ in range(n_hidden):
        pos = [rng.uniform(-0.3 * e, 0.3 * e), rng.uniform(-0.3 * e, 0.3 * e), rng.uniform(0.7 * e, 1.0 * e)]
        row = _base_row(rng, spec, pos)
        row["op"] = _logit(0.6)  # would be clearly visible without the wall
        rows.append(row)
    return rows


def coincident_pair_ids(spec: SynthSpec) -> np.ndarray:
    """(P, 2) array of duplicate id pairs in coincident-pairs mode."""
    if spec.mode != "coincident-pairs":
        raise ValueError("pair ids are only defined for coincident-pairs mode")
    pairs = spec.count // 2
    return np.stack(
        [np.arange(pairs, dtype=np.int64), np.arange(pairs, 2 * pairs, dtype=np.int64)],
        axis=1,
    )


def _gen_pairs(rng: SplitMix64, spec: SynthSpec) -> list[dict]:
    pairs = spec.count // 2
    extra = spec.count - 2 * pairs
    e = spec.extent
    bases = [
        _base_row(rng, spec, [rng.uniform(-0.6 * e, 0.6 * e) for _ in range(3)])
        for _ in range(pairs)
    ]
    copies = [dict(b) for b in bases]
    singles = [
        _base_row(rng, spec, [rng.uniform(-0.6 * e, 0.6 * e) for _ in range(3)])
        for _ in range(extra)
    ]
    return bases + copies + singles


def generate(spec: SynthSpec) -> tuple[GaussianScene, ViewSet]:
    """Build the scene and camera rig for a spec. Same spec, same bits."""
    rng = SplitMix64(spec.seed)
    if spec.mode == "random":
        rows = _gen_random(rng, spec)
        views = _orbit_views(spec, _spread(spec.n_views, 25.0))
    elif spec.mode == "layered":
        rows = _gen_layered(rng, spec)
        views = _orbit_views(spec, _spread(spec.n_views, 25.0))
    elif spec.mode == "wall-occluder":
        rows = _gen_wall(rng, spec)
        # narrow same-side arc so the wall occludes in every view
        views = _orbit_views(spec, _spread(spec.n_views, 8.0), elevation_deg=6.0)
    else:
        rows = _gen_pairs(rng, spec)
        views = _orbit_views(spec, _spread(spec.n_views, 25.0))
    return _scene_from_rows(rows), views
