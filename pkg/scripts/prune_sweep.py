#!/usr/bin/env python3
"""Prune-ratio sweep: score-ranked removal against random removal.

For each ratio the scene loses the same number of Gaussians twice, once by
ascending removal-error rank and once uniformly at random (mean over
--draws seeded draws), and both reduced scenes are scored against the
original renders. Prints one table row per ratio.
"""

import argparse

import numpy as np

from splatprune.metrics import eval_views
from splatprune.model import subset
from splatprune.prune import prune_ratio
from splatprune.quant import QuantConstants, quantify_scene
from splatprune.synth import SplitMix64, SynthSpec, generate


def random_keep(seed: int, m: int, n_remove: int) -> np.ndarray:
    rng = SplitMix64(seed)
    ids = np.arange(m, dtype=np.int64)
    for i in range(m - 1, 0, -1):
        j = int(rng.next_u64() % (i + 1))
        ids[i], ids[j] = ids[j], ids[i]
    return np.sort(ids[n_remove:])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--mode", default="layered")
    ap.add_argument("--draws", type=int, default=3, help="random baselines per ratio")
    ap.add_argument(
        "--ratios", type=float, nargs="+", default=(0.1, 0.25, 0.5, 0.75, 0.9)
    )
    args = ap.parse_args()

    background = np.zeros(3)
    scene, views = generate(SynthSpec(seed=args.seed, count=args.count, mode=args.mode))
    buf = quantify_scene(scene, views, QuantConstants(), background)
    m = len(scene)
    print(f"{m} gaussians, {len(views)} views ({args.mode}, seed {args.seed})")
    print(f"{'ratio':>6} {'kept':>6} {'ranked psnr':>12} {'random psnr':>12} {'gain db':>8}")

    for ratio in args.ratios:
        ranked_scene, _ = prune_ratio(scene, buf, ratio)
        ranked = eval_views(scene, ranked_scene, views, background)

        n_remove = int(np.floor(ratio * m))
        rand_psnrs = []
        for draw in range(args.draws):
            keep = random_keep(1_000_003 * args.seed + 97 * draw + n_remove, m, n_remove)
            reduced, _ = subset(scene, keep)
            rand_psnrs.append(eval_views(scene, reduced, views, background).mean_psnr)
        rand_mean = float(np.mean(rand_psnrs))

        print(
            f"{ratio:>6.2f} {m - n_remove:>6d} {ranked.mean_psnr:>12.2f} "
            f"{rand_mean:>12.2f} {ranked.mean_psnr - rand_mean:>8.2f}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
