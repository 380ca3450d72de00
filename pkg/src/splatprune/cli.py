"""Command-line front end.

Subcommands: synth, render, quantify, prune, eval, audit. Every run writes a
manifest JSON next to its primary output recording the command, parameters,
inputs, outputs, and wall time. Exit codes: 0 success, 2 bad input or usage,
1 anything unexpected.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .camera import ViewsValidationError, load_views, save_views
from .metrics import eval_views
from .model import PlyParseError, load_ply, save_ply
from .oracle import audit
from .prune import PruneConfig, iterative_prune, prune_ratio
from .quant import (
    QuantConstants,
    histogram,
    histogram_csv_rows,
    quantify_scene,
    write_scores_csv,
)
from .raster import DEFAULT_N_MAX, render
from .synth import MODES, SynthSpec, generate


def _parse_background(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) == 1:
        v = float(parts[0])
        return (v, v, v)
    if len(parts) != 3:
        raise ValueError(f"background must be one value or r,g,b, got {text!r}")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def _dtype_of(precision: str):
    return np.float32 if precision == "f32" else np.float64


def _write_manifest(primary_out: Path, command: str, params: dict, inputs: list, outputs: list, wall: float) -> None:
    manifest = {
        "tool": "splatprune",
        "version": __version__,
        "command": command,
        "params": params,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_time_seconds": wall,
    }
    path = primary_out.with_name(primary_out.name + ".manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _save_png(image: np.ndarray, path: Path) -> None:
    from PIL import Image

    u8 = (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(str(path))


def _save_raw(image: np.ndarray, path: Path) -> None:
    # row-major H*W*3 little-endian float32, no header
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(image, dtype="<f4").tobytes())


def cmd_synth(args) -> int:
    spec = SynthSpec(
        seed=args.seed,
        count=args.count,
        mode=args.mode,
        extent=args.extent,
        n_views=args.n_views,
        width=args.width,
        height=args.height,
    )
    t0 = time.perf_counter()
    scene, views = generate(spec)
    out_scene = Path(args.out_scene)
    out_views = Path(args.out_views)
    out_scene.parent.mkdir(parents=True, exist_ok=True)
    out_views.parent.mkdir(parents=True, exist_ok=True)
    save_ply(scene, out_scene)
    save_views(views, out_views)
    _write_manifest(
        out_scene,
        "synth",
        {
            "seed": args.seed,
            "count": args.count,
            "mode": args.mode,
            "extent": args.extent,
            "n_views": args.n_views,
            "width": args.width,
            "height": args.height,
        },
        [],
        [out_scene, out_views],
        time.perf_counter() - t0,
    )
    print(f"wrote {out_scene} ({len(scene)} gaussians) and {out_views} ({len(views)} views)")
    return 0


def cmd_render(args) -> int:
    t0 = time.perf_counter()
    scene = load_ply(args.scene)
    views = load_views(args.views)
    background = _parse_background(args.background)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dtype = _dtype_of(args.precision)

    def render_one(view):
        out = render(scene, view, background, dtype=dtype, n_max=args.n_max, sh_degree=args.sh_degree)
        if args.format == "png":
            path = out_dir / f"{view.name}.png"
            _save_png(out.image, path)
        else:
            path = out_dir / f"{view.name}.raw"
            _save_raw(out.image, path)
        return path

    if args.threads > 1 and len(views) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            outputs = list(pool.map(render_one, views))
    else:
        outputs = [render_one(v) for v in views]
    primary = out_dir / "render"
    _write_manifest(
        primary,
        "render",
        {
            "background": list(background),
            "format": args.format,
            "n_max": args.n_max,
            "sh_degree": args.sh_degree,
            "precision": args.precision,
            "threads": args.threads,
        },
        [args.scene, args.views],
        outputs,
        time.perf_counter() - t0,
    )
    print(f"rendered {len(views)} views to {out_dir}")
    return 0


def cmd_quantify(args) -> int:
    t0 = time.perf_counter()
    scene = load_ply(args.scene)
    views = load_views(args.views)
    background = _parse_background(args.background)
    consts = QuantConstants(epsilon=args.epsilon, n_max=args.n_max)
    dtype = _dtype_of(args.precision)

    buffer = quantify_scene(
        scene,
        views,
        consts,
        background,
        dtype=dtype,
        sh_degree=args.sh_degree,
        threads=args.threads,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    metadata = {
        "epsilon": args.epsilon,
        "n_max": args.n_max,
        "background": ",".join(repr(float(b)) for b in background),
        "precision": args.precision,
        "views": len(views),
        "gaussians": len(scene),
        "sh_degree": args.sh_degree,
    }
    write_scores_csv(buffer, out, metadata)
    outputs = [out]
    if args.histogram:
        hist_path = Path(args.histogram)
        rows = histogram_csv_rows(histogram(buffer, bins=args.histogram_bins))
        with open(hist_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["log10_lo", "log10_hi", "count"])
            writer.writerows(rows)
        outputs.append(hist_path)
    _write_manifest(
        out,
        "quantify",
        {**metadata, "threads": args.threads},
        [args.scene, args.views],
        outputs,
        time.perf_counter() - t0,
    )
    print(f"quantified {len(scene)} gaussians over {len(views)} views -> {out}")
    return 0


def cmd_prune(args) -> int:
    t0 = time.perf_counter()
    config = PruneConfig(ratio=args.ratio, budget=args.budget, cycles=args.cycles)
    scene = load_ply(args.scene)
    views = load_views(args.views)
    background = _parse_background(args.background)
    consts = QuantConstants(epsilon=args.epsilon, n_max=args.n_max)
    dtype = _dtype_of(args.precision)

    if config.ratio is not None:
        buffer = quantify_scene(
            scene, views, consts, background, dtype=dtype, sh_degree=args.sh_degree, threads=args.threads
        )
        pruned, report = prune_ratio(scene, buffer, config.ratio)
    else:
        pruned, report = iterative_prune(
            scene,
            views,
            config.budget,
            config.cycles,
            consts,
            background,
            dtype=dtype,
            sh_degree=args.sh_degree,
            threads=args.threads,
        )

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_ply(pruned, out)
    outputs = [out]
    if args.report:
        report.to_json(args.report)
        outputs.append(Path(args.report))
    _write_manifest(
        out,
        "prune",
        {
            "ratio": args.ratio,
            "budget": args.budget,
            "cycles": args.cycles,
            "epsilon": args.epsilon,
            "n_max": args.n_max,
            "background": list(background),
            "precision": args.precision,
            "threads": args.threads,
        },
        [args.scene, args.views],
        outputs,
        time.perf_counter() - t0,
    )
    print(
        f"pruned {len(scene)} -> {len(pruned)} gaussians "
        f"(removed {len(report.removed_ids_total)}) -> {out}"
    )
    return 0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    scene_a = load_ply(args.scene_a)
    scene_b = load_ply(args.scene_b)
    views = load_views(args.views)
    background = _parse_background(args.background)
    report = eval_views(
        scene_a, scene_b, views, background, dtype=_dtype_of(args.precision), sh_degree=args.sh_degree
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_json(out)
    _write_manifest(
        out,
        "eval",
        {"background": list(background), "precision": args.precision, "sh_degree": args.sh_degree},
        [args.scene_a, args.scene_b, args.views],
        [out],
        time.perf_counter() - t0,
    )
    print(report.format_table())
    return 0


def cmd_audit(args) -> int:
    t0 = time.perf_counter()
    scene = load_ply(args.scene)
    views = load_views(args.views)
    background = _parse_background(args.background)
    consts = QuantConstants(epsilon=args.epsilon, n_max=args.n_max)
    report = audit(
        scene,
        views,
        consts,
        background,
        dtype=_dtype_of(args.precision),
        sh_degree=args.sh_degree,
        max_gaussians=args.max_gaussians,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(report.csv_rows())
    summary_path = Path(args.summary) if args.summary else out.with_suffix(".json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(report.summary(), fh, indent=2)
        fh.write("\n")
    _write_manifest(
        out,
        "audit",
        {
            "epsilon": args.epsilon,
            "n_max": args.n_max,
            "background": list(background),
            "precision": args.precision,
            "max_gaussians": args.max_gaussians,
        },
        [args.scene, args.views],
        [out, summary_path],
        time.perf_counter() - t0,
    )
    s = report.summary()
    print(
        f"audited {s['gaussians']} gaussians: max rel discrepancy "
        f"{s['max_rel_discrepancy']:.3e} ({s['flagged_pixels']} flagged pixels)"
    )
    return 0


def _add_common_render_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--background", default="0", help="background as one value or r,g,b (default 0)")
    p.add_argument("--sh-degree", type=int, default=3, choices=(0, 1, 2, 3), help="harmonic bands to evaluate")
    p.add_argument("--n-max", type=int, default=DEFAULT_N_MAX, help="per-pixel blended-contribution cap")
    p.add_argument("--precision", choices=("f32", "f64"), default="f32", help="pipeline float width")
    p.add_argument("--threads", type=int, default=1, help="views rendered concurrently; results are identical")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatprune",
        description="Contribution-aware scoring and pruning for Gaussian-splat scenes",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic scene and camera rig")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--mode", choices=MODES, default="layered")
    p.add_argument("--extent", type=float, default=1.0)
    p.add_argument("--n-views", type=int, default=3)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--out-scene", required=True)
    p.add_argument("--out-views", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="render every view to PNG or raw float32")
    p.add_argument("--scene", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=("png", "raw"), default="png")
    _add_common_render_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("quantify", help="accumulate per-gaussian removal errors into scores CSV")
    p.add_argument("--scene", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--out", required=True, help="scores CSV path")
    p.add_argument("--epsilon", type=float, default=QuantConstants().epsilon)
    p.add_argument("--histogram", help="optional log-histogram CSV path")
    p.add_argument("--histogram-bins", type=int, default=30)
    _add_common_render_flags(p)
    p.set_defaults(func=cmd_quantify)

    p = sub.add_parser("prune", help="remove low-error gaussians by ratio or budget")
    p.add_argument("--scene", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--out", required=True, help="pruned scene PLY path")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ratio", type=float, help="fraction of gaussians to drop")
    group.add_argument("--budget", type=float, help="total removal-error budget")
    p.add_argument("--cycles", type=int, default=1, help="re-quantification cycles (budget mode)")
    p.add_argument("--epsilon", type=float, default=QuantConstants().epsilon)
    p.add_argument("--report", help="optional prune-report JSON path")
    _add_common_render_flags(p)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("eval", help="image metrics between two scenes over shared views")
    p.add_argument("--scene-a", required=True)
    p.add_argument("--scene-b", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--out", required=True, help="metrics JSON path")
    _add_common_render_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("audit", help="compare analytic scores against leave-one-out re-rendering")
    p.add_argument("--scene", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--out", required=True, help="per-gaussian comparison CSV path")
    p.add_argument("--summary", help="summary JSON path (default: CSV path with .json)")
    p.add_argument("--epsilon", type=float, default=QuantConstants().epsilon)
    p.add_argument("--max-gaussians", type=int, default=200)
    _add_common_render_flags(p)
    p.set_defaults(func=cmd_audit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PlyParseError, ViewsValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
