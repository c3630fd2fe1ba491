"""Command-line entry point.

Every command prints one JSON document on stdout; logs go to stderr as
``key=value`` lines. Exit codes: 0 ok, 2 usage, 3 data error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import datastore as ds
from . import pipeline
from .evaluate import write_per_scene_csv
from .labeler import load_robots
from .scenegen import AssetCatalog, SceneGenError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message, stream=sys.stderr)
        sys.exit(EXIT_USAGE)


def _emit_error(kind: str, message: str, stream=None, **extra) -> None:
    print(ds.dump_json({"error": kind, "message": message, **extra}), end="", file=stream or sys.stdout)


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=10)
    p.add_argument("--configs-per-scene", type=int, default=25)
    p.add_argument("--views", type=int, default=10)
    p.add_argument("--robot", default=None, help="force one robot for every configuration")
    p.add_argument("--robots-file", type=Path, default=None, help="JSON robot table")
    p.add_argument("--catalog", type=Path, default=None, help="JSON asset catalog")
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=120)
    p.add_argument("--focal", type=float, default=120.0)
    p.add_argument("--zmax", type=float, default=0.02)
    p.add_argument("--train-fraction", type=float, default=pipeline.TRAIN_FRACTION)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)


def _add_interp_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--sigma", type=float, default=0.10)
    p.add_argument("--theta", type=float, default=0.05)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="navafford", description="Synthetic navigation-affordance dataset tools.")
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logs on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, text in (("generate", "render scenes, configurations and episodes"),
                       ("run", "generate, label and interpolate in one go")):
        p = sub.add_parser(name, help=text)
        _add_dataset_flags(p)
        _add_interp_flags(p)
        p.add_argument("--spacing", type=float, default=0.10)
        p.add_argument("--lambda", dest="lam", type=float, default=0.7,
                       help="zero-label weight recorded with the dataset parameters")

    p = sub.add_parser("label", help="run the feasibility trials for every configuration")
    p.add_argument("dataset", type=Path)
    p.add_argument("--robot", default=None)
    p.add_argument("--robots-file", type=Path, default=None)
    p.add_argument("--spacing", type=float, default=0.10)

    p = sub.add_parser("interpolate", help="densify sparse labels onto each floor cloud")
    p.add_argument("dataset", type=Path)
    _add_interp_flags(p)

    p = sub.add_parser("predict", help="write reference predictions mirroring the dataset tree")
    p.add_argument("dataset", type=Path)
    p.add_argument("--kind", choices=pipeline.PREDICTORS, default="heuristic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", choices=("train", "test"), default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="map metrics of predictions against ground truth")
    p.add_argument("pred_dir", type=Path)
    p.add_argument("gt_dir", type=Path)
    p.add_argument("--split", choices=("train", "test"), default=None)
    p.add_argument("--csv", type=Path, default=None, help="also write the per-scene table")
    p.add_argument("--lambda", dest="lam", type=float, default=0.7, help="zero-label weight for weighted MSE")
    p.add_argument("--seed", type=int, default=0, help="seed of the zero-label weight draws")

    p = sub.add_parser("msr", help="manipulation success rate of predictions")
    p.add_argument("pred_dir", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--split", choices=("train", "test"), default=None)

    p = sub.add_parser("stats", help="split statistics, cross-checked against disk")
    p.add_argument("dataset", type=Path)
    return parser


def _robots(args) -> dict:
    return load_robots(args.robots_file) if getattr(args, "robots_file", None) else pipeline.default_robots()


def _pipeline_config(args) -> pipeline.PipelineConfig:
    kw = dict(seed=args.seed, scenes=args.scenes, configs_per_scene=args.configs_per_scene, views=args.views,
              robot=args.robot, zmax=args.zmax, train_fraction=args.train_fraction, width=args.width,
              height=args.height, focal=args.focal, out=args.out, robots=_robots(args))
    if args.jobs is not None:
        kw["jobs"] = args.jobs
    if args.catalog is not None:
        kw["catalog"] = AssetCatalog.load(args.catalog)
    for name in ("k", "sigma", "theta", "spacing", "lam"):
        if hasattr(args, name):
            kw[name] = getattr(args, name)
    cfg = pipeline.PipelineConfig(**kw)
    cfg.validate()
    return cfg


def _stats_doc(root: Path) -> dict:
    manifest = ds.read_manifest(root)
    return {"dataset": str(root), "splits": ds.stats(manifest, root)}


def run(args) -> dict:
    cmd = args.command
    if cmd in ("generate", "run"):
        cfg = _pipeline_config(args)
        (pipeline.run_all if cmd == "run" else pipeline.generate)(cfg)
        return _stats_doc(cfg.out)
    if cmd == "label":
        robots = _robots(args)
        if args.robot is not None and args.robot not in robots:
            raise ValueError(f"unknown robot {args.robot!r}")
        if args.spacing <= 0:
            raise ValueError("spacing must be positive")
        trials = pipeline.label(args.dataset, robots[args.robot] if args.robot else None, args.spacing)
        return {"dataset": str(args.dataset), "trials": trials}
    if cmd == "interpolate":
        if args.k < 1 or args.sigma <= 0 or args.theta <= 0:
            raise ValueError("need k >= 1, sigma > 0, theta > 0")
        n = pipeline.interpolate(args.dataset, args.k, args.sigma, args.theta)
        return {"dataset": str(args.dataset), "episodes": n,
                "params": {"k": args.k, "sigma": args.sigma, "theta": args.theta}}
    if cmd == "predict":
        n = pipeline.predict(args.dataset, args.out, args.kind, args.seed, args.split)
        return {"kind": args.kind, "out": str(args.out), "episodes": n}
    if cmd == "eval":
        if not 0 < args.lam < 1:
            raise ValueError("lambda must lie in (0, 1)")
        report = pipeline.evaluate_dirs(args.pred_dir, args.gt_dir, args.split, args.lam, args.seed)
        if args.csv is not None:
            write_per_scene_csv(report, args.csv)
        return report.to_dict()
    if cmd == "msr":
        if args.top < 1:
            raise ValueError("--top must be >= 1")
        return pipeline.msr_dirs(args.pred_dir, args.dataset, args.top, args.split).to_dict()
    if cmd == "stats":
        return _stats_doc(args.dataset)
    raise AssertionError(cmd)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="level=%(levelname)s logger=%(name)s %(message)s")
    try:
        doc = run(args)
    except ds.DiskMismatch as exc:
        _emit_error("data", str(exc), discrepancies=exc.discrepancies)
        return EXIT_DATA
    except ds.DatastoreError as exc:
        _emit_error("data", str(exc), path=exc.path, offset=exc.offset)
        return EXIT_DATA
    except (SceneGenError, KeyError, json.JSONDecodeError) as exc:
        _emit_error("data", str(exc))
        return EXIT_DATA
    except ValueError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    except OSError as exc:
        _emit_error("io", str(exc), path=getattr(exc, "filename", None))
        return EXIT_IO
    print(ds.dump_json(doc), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
