"""Generate a dataset and compare its counts with the full-scale totals, scaled by scene count.

    python scripts/dataset_counts.py --scenes 10 --out /tmp/ds
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from navafford import datastore as ds
from navafford import pipeline

FULL_SCENES, FULL_CONFIGS, FULL_EPISODES = 569, 14_155, 127_343


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--scenes", type=int, default=10)
    ap.add_argument("--configs-per-scene", type=int, default=25)
    ap.add_argument("--views", type=int, default=10)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--label", action="store_true", help="also label and interpolate")
    args = ap.parse_args()

    cfg = pipeline.PipelineConfig(seed=args.seed, scenes=args.scenes, configs_per_scene=args.configs_per_scene,
                                  views=args.views, jobs=args.jobs, out=args.out)
    t0 = time.perf_counter()
    (pipeline.run_all if args.label else pipeline.generate)(cfg)
    seconds = time.perf_counter() - t0

    counts = ds.stats(ds.read_manifest(args.out), args.out)
    scale = args.scenes / FULL_SCENES
    configs = sum(r["configurations"] for r in counts.values())
    episodes = sum(r["episodes"] for r in counts.values())
    print(json.dumps({
        "splits": counts,
        "configurations": {"got": configs, "expected": round(FULL_CONFIGS * scale, 1)},
        "episodes": {"got": episodes, "expected": round(FULL_EPISODES * scale, 1)},
        "seconds": round(seconds, 1),
    }, indent=2))


if __name__ == "__main__":
    main()
