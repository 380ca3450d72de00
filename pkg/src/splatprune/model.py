"""Scene container and binary PLY codec for Gaussian-splat point clouds.

A scene is a flat array-of-attributes record of M Gaussians. All attributes
are stored raw (pre-activation), exactly as they appear on disk: log-scales,
opacity logits, unnormalized quaternions. Activations are applied lazily at
projection time so that load/save round-trips are bit-exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SH_REST_COUNT = 45  # degree-3 harmonics: (16 - 1) coefficients x 3 channels

# Vertex property names, in the exact on-disk order. 62 float32 per vertex.
PLY_PROPERTIES: tuple[str, ...] = (
    ("x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2")
    + tuple(f"f_rest_{i}" for i in range(SH_REST_COUNT))
    + ("opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3")
)
_BYTES_PER_VERTEX = 4 * len(PLY_PROPERTIES)


class PlyParseError(ValueError):
    """Malformed splat PLY. The message carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _as_f32(a, shape, name: str) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float32)
    if out.shape != shape:
        raise ValueError(f"{name}: expected shape {shape}, got {out.shape}")
    return out


@dataclass(frozen=True, eq=False)
class Gaussian:
    """One splat record, raw attributes (no activations applied)."""

    position: np.ndarray      # (3,) world position
    rotation: np.ndarray      # (4,) quaternion, (w, x, y, z), not normalized
    log_scale: np.ndarray     # (3,) per-axis log scale
    opacity_logit: float      # opacity before sigmoid
    sh_dc: np.ndarray         # (3,) DC harmonic coefficients
    sh_rest: np.ndarray       # (45,) higher-order coefficients, channel-major


@dataclass(eq=False)
class GaussianScene:
    """Array-of-attributes scene of M Gaussians with stable ids 0..M-1.

    Attributes mirror the splat PLY layout. ``normals`` is carried for
    format fidelity only; nothing downstream reads it.
    """

    positions: np.ndarray       # (M, 3) float32
    normals: np.ndarray         # (M, 3) float32, unused but preserved
    sh_dc: np.ndarray           # (M, 3) float32
    sh_rest: np.ndarray         # (M, 45) float32, channel-major [R*15, G*15, B*15]
    opacity_logit: np.ndarray   # (M,) float32
    log_scale: np.ndarray       # (M, 3) float32
    rotation: np.ndarray        # (M, 4) float32, (w, x, y, z)
    comments: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        m = int(np.asarray(self.positions).shape[0])
        if m == 0:
            raise ValueError("scene must contain at least one Gaussian")
        self.positions = _as_f32(self.positions, (m, 3), "positions")
        self.normals = _as_f32(self.normals, (m, 3), "normals")
        self.sh_dc = _as_f32(self.sh_dc, (m, 3), "sh_dc")
        self.sh_rest = _as_f32(self.sh_rest, (m, SH_REST_COUNT), "sh_rest")
        self.opacity_logit = _as_f32(self.opacity_logit, (m,), "opacity_logit")
        self.log_scale = _as_f32(self.log_scale, (m, 3), "log_scale")
        self.rotation = _as_f32(self.rotation, (m, 4), "rotation")
        self.comments = tuple(self.comments)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self), dtype=np.int64)

    def gaussian(self, gid: int) -> Gaussian:
        """Single-record view, raw attributes copied out."""
        if not 0 <= gid < len(self):
            raise IndexError(f"gaussian id {gid} out of range [0, {len(self)})")
        return Gaussian(
            position=self.positions[gid].copy(),
            rotation=self.rotation[gid].copy(),
            log_scale=self.log_scale[gid].copy(),
            opacity_logit=float(self.opacity_logit[gid]),
            sh_dc=self.sh_dc[gid].copy(),
            sh_rest=self.sh_rest[gid].copy(),
        )

    def copy(self) -> "GaussianScene":
        return GaussianScene(
            positions=self.positions.copy(),
            normals=self.normals.copy(),
            sh_dc=self.sh_dc.copy(),
            sh_rest=self.sh_rest.copy(),
            opacity_logit=self.opacity_logit.copy(),
            log_scale=self.log_scale.copy(),
            rotation=self.rotation.copy(),
            comments=self.comments,
        )


def subset(scene: GaussianScene, keep) -> tuple[GaussianScene, dict[int, int]]:
    """Restrict a scene to the given ids, re-densifying to 0..K-1.

    Relative order of survivors is preserved (ascending original id). Returns
    the new scene plus an old-id -> new-id mapping.

    Raises
    ------
    ValueError
        If ``keep`` is empty, contains duplicates, or references unknown ids.
    """
    keep = np.asarray(list(keep), dtype=np.int64)
    if keep.size == 0:
        raise ValueError("subset: keep set is empty")
    if np.unique(keep).size != keep.size:
        raise ValueError("subset: keep set contains duplicate ids")
    bad = keep[(keep < 0) | (keep >= len(scene))]
    if bad.size:
        raise ValueError(f"subset: unknown ids {sorted(int(b) for b in bad)}")
    keep = np.sort(keep)
    out = GaussianScene(
        positions=scene.positions[keep],
        normals=scene.normals[keep],
        sh_dc=scene.sh_dc[keep],
        sh_rest=scene.sh_rest[keep],
        opacity_logit=scene.opacity_logit[keep],
        log_scale=scene.log_scale[keep],
        rotation=scene.rotation[keep],
        comments=scene.comments,
    )
    mapping = {int(old): new for new, old in enumerate(keep)}
    return out, mapping


def _parse_header(data: bytes, path: str) -> tuple[int, int, tuple[str, ...]]:
    """Parse and validate the PLY header. Returns (count, payload offset, comments)."""
    offset = 0
    lines: list[tuple[str, int]] = []  # (line text, byte offset of line start)
    while True:
        end = data.find(b"\n", offset)
        if end < 0:
            raise PlyParseError(f"{path}: header not terminated by end_header", offset)
        try:
            text = data[offset:end].decode("ascii").rstrip("\r")
        except UnicodeDecodeError:
            raise PlyParseError(f"{path}: non-ascii bytes in header", offset) from None
        lines.append((text, offset))
        offset = end + 1
        if text == "end_header":
            break
        if offset > 65536:
            raise PlyParseError(f"{path}: header exceeds 64 KiB without end_header", offset)

    if lines[0][0] != "ply":
        raise PlyParseError(f"{path}: not a PLY file, expected magic 'ply'", lines[0][1])
    if lines[1][0] != "format binary_little_endian 1.0":
        raise PlyParseError(
            f"{path}: unsupported format {lines[1][0]!r}, "
            "expected 'format binary_little_endian 1.0'",
            lines[1][1],
        )

    comments: list[str] = []
    count = -1
    props: list[str] = []
    for text, off in lines[2:-1]:
        if text.startswith("comment ") or text.startswith("obj_info "):
            comments.append(text.split(" ", 1)[1])
            continue
        if text.startswith("element "):
            if count >= 0:
                raise PlyParseError(f"{path}: unexpected second element {text!r}", off)
            fields = text.split()
            if len(fields) != 3 or fields[1] != "vertex":
                raise PlyParseError(f"{path}: expected 'element vertex <count>', got {text!r}", off)
            try:
                count = int(fields[2])
            except ValueError:
                raise PlyParseError(f"{path}: bad vertex count in {text!r}", off) from None
            if count <= 0:
                raise PlyParseError(f"{path}: vertex count must be positive, got {count}", off)
            continue
        if text.startswith("property "):
            if count < 0:
                raise PlyParseError(f"{path}: property before element vertex", off)
            fields = text.split()
            if len(fields) != 3 or fields[1] not in ("float", "float32"):
                raise PlyParseError(f"{path}: expected 'property float <name>', got {text!r}", off)
            idx = len(props)
            expected = PLY_PROPERTIES[idx] if idx < len(PLY_PROPERTIES) else None
            if fields[2] != expected:
                raise PlyParseError(
                    f"{path}: property {idx} is {fields[2]!r}, expected {expected!r}", off
                )
            props.append(fields[2])
            continue
        raise PlyParseError(f"{path}: unrecognized header line {text!r}", off)

    if count < 0:
        raise PlyParseError(f"{path}: missing 'element vertex' declaration", lines[-1][1])
    if len(props) != len(PLY_PROPERTIES):
        raise PlyParseError(
            f"{path}: missing required property {PLY_PROPERTIES[len(props)]!r} "
            f"(got {len(props)} of {len(PLY_PROPERTIES)})",
            lines[-1][1],
        )
    return count, offset, tuple(comments)


def load_ply(path) -> GaussianScene:
    """Load a splat scene from a binary little-endian PLY file.

    The vertex layout is fixed: position, normal, 3 DC + 45 rest harmonic
    coefficients, opacity logit, 3 log-scales, 4 quaternion components, all
    float32. Any deviation raises :class:`PlyParseError` with a byte offset.
    """
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    count, payload_off, comments = _parse_header(data, path)

    need = count * _BYTES_PER_VERTEX
    have = len(data) - payload_off
    if have < need:
        raise PlyParseError(
            f"{path}: truncated payload, expected {need} bytes for {count} vertices, "
            f"found {have}",
            payload_off + have,
        )
    if have > need:
        raise PlyParseError(
            f"{path}: {have - need} trailing bytes after vertex payload",
            payload_off + need,
        )

    raw = np.frombuffer(data, dtype="<f4", count=count * len(PLY_PROPERTIES), offset=payload_off)
    raw = raw.reshape(count, len(PLY_PROPERTIES)).copy()
    return GaussianScene(
        positions=raw[:, 0:3],
        normals=raw[:, 3:6],
        sh_dc=raw[:, 6:9],
        sh_rest=raw[:, 9:54],
        opacity_logit=raw[:, 54],
        log_scale=raw[:, 55:58],
        rotation=raw[:, 58:62],
        comments=comments,
    )


def save_ply(scene: GaussianScene, path) -> None:
    """Write a scene as binary little-endian PLY, the inverse of :func:`load_ply`.

    Saving a loaded canonical file reproduces it byte for byte (header
    comments are re-emitted in order).
    """
    if len(scene) == 0:
        raise ValueError("refusing to save an empty scene")
    header = ["ply", "format binary_little_endian 1.0"]
    header += [f"comment {c}" for c in scene.comments]
    header.append(f"element vertex {len(scene)}")
    header += [f"property float {name}" for name in PLY_PROPERTIES]
    header.append("end_header")

    raw = np.empty((len(scene), len(PLY_PROPERTIES)), dtype="<f4")
    raw[:, 0:3] = scene.positions
    raw[:, 3:6] = scene.normals
    raw[:, 6:9] = scene.sh_dc
    raw[:, 9:54] = scene.sh_rest
    raw[:, 54] = scene.opacity_logit
    raw[:, 55:58] = scene.log_scale
    raw[:, 58:62] = scene.rotation

    with open(str(path), "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(raw.tobytes())
