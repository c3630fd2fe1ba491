"""Top-1 manipulation success of the heuristic, random and ground-truth maps on a labeled dataset.

Pools every episode of a configuration into one floor cloud, then reports the
per-configuration outcome for the ground-truth map on configurations that have
at least one feasible grid sample.

    python scripts/msr_ordering.py /tmp/ds --split test
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from navafford import datastore as ds
from navafford import pipeline
from navafford.evaluate import msr, predict_heuristic, predict_random
from navafford.rng import derive_seed


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("root", type=Path)
    ap.add_argument("--split", default="test")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    manifest = ds.read_manifest(args.root)
    top1: dict[str, list[float]] = {"heuristic": [], "random": []}
    gt_rows = []
    for s, c, eps in pipeline.iter_configs(manifest, args.split):
        world, robot = pipeline.load_world(args.root, s, c)
        tid = world.config.focus_target
        episodes = [ds.read_episode(ds.episode_dir(args.root, s, c, e)) for e in eps]
        cloud, gt = pipeline.pool_config([e.floor_cloud for e in episodes], [e.dense.values for e in episodes])
        if len(cloud) == 0:
            continue
        target = world.target(tid)
        top1["heuristic"].append(msr(predict_heuristic(cloud, robot, world, tid).values, cloud, robot, world, tid, 1).top1)
        rnd = predict_random(cloud, derive_seed(args.seed, "predict", s, c), target.floor_xy, target.normal,
                             robot.arm_reach)
        top1["random"].append(msr(rnd.values, cloud, robot, world, tid, 1).top1)
        successes = int(episodes[0].sparse.values.sum())
        if successes:
            best = int(np.argmax(gt))
            gt_rows.append({"scene": s, "config": c, "successes": successes,
                            "top1": msr(gt, cloud, robot, world, tid, 1).top1,
                            "argmax_value": round(float(gt[best]), 4)})
    print(json.dumps({
        "configurations": len(top1["heuristic"]),
        "heuristic_top1": float(np.mean(top1["heuristic"])),
        "random_top1": float(np.mean(top1["random"])),
        "ground_truth_top1": float(np.mean([r["top1"] for r in gt_rows])) if gt_rows else None,
        "ground_truth_rows": gt_rows,
    }, indent=2))


if __name__ == "__main__":
    main()
