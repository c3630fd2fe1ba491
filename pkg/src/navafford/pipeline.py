"""End-to-end stages over a dataset root: generate, label, interpolate, predict, evaluate."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import affordance, datastore as ds
from .evaluate import (DEFAULT_LAMBDA, MetricsReport, MsrReport, aggregate, mean_msr, metrics, msr,
                       predict_heuristic, predict_random)
from .geom import FLOOR_Z_MAX, CameraIntrinsics, PointCloud, RigidTransform, backproject, extract_floor, render_depth
from .labeler import (GRID_SPACING, VIEWS_PER_CONFIG, RobotSpec, default_robots, label_configuration,
                      sample_viewpoints)
from .rng import derive_rng, derive_seed
from .scenegen import (AssetCatalog, Configuration, SceneSpec, World, default_catalog,
                       generate_configurations, generate_scene)

log = logging.getLogger(__name__)

TRAIN_FRACTION = 456 / 569


@dataclass
class PipelineConfig:
    seed: int = 0
    scenes: int = 10
    configs_per_scene: int = 25
    views: int = VIEWS_PER_CONFIG
    robot: str | None = None
    k: int = affordance.DEFAULT_K
    sigma: float = affordance.DEFAULT_SIGMA
    theta: float = affordance.DEFAULT_THETA
    spacing: float = GRID_SPACING
    zmax: float = FLOOR_Z_MAX
    lam: float = DEFAULT_LAMBDA
    train_fraction: float = TRAIN_FRACTION
    width: int = 160
    height: int = 120
    focal: float = 120.0
    out: Path = Path("dataset")
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)
    catalog: AssetCatalog = field(default_factory=default_catalog, repr=False)
    robots: dict[str, RobotSpec] = field(default_factory=default_robots, repr=False)

    def validate(self) -> None:
        checks = [
            (self.scenes >= 1, "scenes must be >= 1"),
            (self.configs_per_scene >= 1, "configs-per-scene must be >= 1"),
            (self.views >= 1, "views must be >= 1"),
            (self.k >= 1, "k must be >= 1"),
            (self.sigma > 0, "sigma must be positive"),
            (self.theta > 0, "theta must be positive"),
            (self.spacing > 0, "spacing must be positive"),
            (self.zmax > 0, "zmax must be positive"),
            (0 < self.lam < 1, "lambda must lie in (0, 1)"),
            (0 < self.train_fraction < 1, "train fraction must lie in (0, 1)"),
            (self.jobs >= 1, "jobs must be >= 1"),
            (self.robot is None or self.robot in self.robots, f"unknown robot {self.robot!r}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        CameraIntrinsics.centered(self.width, self.height, self.focal)

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.centered(self.width, self.height, self.focal)

    def params(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("out", "jobs", "catalog", "robots")}
        d["catalog"] = self.catalog.to_dict()
        d["robots"] = {n: r.to_dict() for n, r in sorted(self.robots.items())}
        return d


@dataclass
class ConfigPlan:
    config: Configuration
    robot: RobotSpec
    poses: list[RigidTransform]


def pick_robot(cfg: PipelineConfig, scene_id: int, config_id: int) -> RobotSpec:
    if cfg.robot is not None:
        return cfg.robots[cfg.robot]
    names = sorted(cfg.robots)
    return cfg.robots[names[int(derive_rng(cfg.seed, "robot", scene_id, config_id).integers(len(names)))]]


def plan_scene(cfg: PipelineConfig, scene_id: int) -> tuple[SceneSpec, list[ConfigPlan]]:
    """Scene layout, configurations, robots and camera poses; no rendering."""
    scene = generate_scene(cfg.seed, cfg.catalog, scene_id)
    plans = []
    for config in generate_configurations(scene, cfg.seed, cfg.configs_per_scene, cfg.catalog):
        world = World(scene, config)
        poses = []
        if config.focus_target >= 0:
            poses = sample_viewpoints(world, config.focus_target,
                                      derive_seed(cfg.seed, "views", scene_id, config.config_id),
                                      cfg.views, cfg.intrinsics)
        plans.append(ConfigPlan(config, pick_robot(cfg, scene_id, config.config_id), poses))
    return scene, plans


def build_episode(world: World, robot: RobotSpec, pose: RigidTransform, intr: CameraIntrinsics,
                  episode_id: int, zmax: float = FLOOR_Z_MAX) -> ds.Episode:
    depth, ids = render_depth(world.boxes, pose, intr)
    target_id = world.config.focus_target
    cloud = ds.attach_feature_channels(backproject(depth, ids, intr, pose), target_id, world.obstacle_ids)
    return ds.Episode(world.scene.scene_id, world.config.config_id, episode_id, pose, intr, depth, ids,
                      cloud, extract_floor(cloud, zmax), robot, target_id, world.obstacle_ids)


def _write_config_json(path: Path, config: Configuration, robot: RobotSpec) -> None:
    d = config.to_dict()
    d["robot"] = robot.to_dict()
    ds.write_json(path, d)


def generate_scene_dir(cfg: PipelineConfig, scene_id: int) -> dict[int, list[int]]:
    scene, plans = plan_scene(cfg, scene_id)
    root = Path(cfg.out)
    sdir = ds.scene_dir(root, scene_id)
    sdir.mkdir(parents=True, exist_ok=True)
    ds.write_json(sdir / "scene.json", scene.to_dict())
    result = {}
    for plan in plans:
        cid = plan.config.config_id
        cdir = ds.config_dir(root, scene_id, cid)
        cdir.mkdir(parents=True, exist_ok=True)
        _write_config_json(cdir / "config.json", plan.config, plan.robot)
        world = World(scene, plan.config)
        for eid, pose in enumerate(plan.poses):
            ep = build_episode(world, plan.robot, pose, cfg.intrinsics, eid, cfg.zmax)
            ds.write_episode(ep, ds.episode_dir(root, scene_id, cid, eid))
        result[cid] = list(range(len(plan.poses)))
        dropped = cfg.views - len(plan.poses)
        if dropped:
            log.info("event=views_dropped scene=%d config=%d dropped=%d", scene_id, cid, dropped)
    log.info("event=scene_done scene=%d configs=%d episodes=%d", scene_id, len(result),
             sum(len(v) for v in result.values()))
    return result


def _run_scenes(fn, cfg: PipelineConfig, scene_ids: list[int]) -> list:
    if cfg.jobs <= 1 or len(scene_ids) <= 1:
        return [fn(cfg, s) for s in scene_ids]
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(fn, [cfg] * len(scene_ids), scene_ids))


def generate(cfg: PipelineConfig) -> Path:
    """Render every episode and write the dataset tree plus manifest; returns the manifest path."""
    cfg.validate()
    root = Path(cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    scene_ids = list(range(cfg.scenes))
    results = _run_scenes(generate_scene_dir, cfg, scene_ids)
    manifest = ds.DatasetManifest(cfg.seed, dict(zip(scene_ids, results)), params=cfg.params())
    manifest = ds.split_dataset(manifest, cfg.train_fraction, cfg.seed) if cfg.scenes >= 2 else manifest
    return ds.write_manifest(root, manifest)


# ---------------------------------------------------------------- reading back

def load_world(root: Path, scene_id: int, config_id: int) -> tuple[World, RobotSpec]:
    scene = SceneSpec.from_dict(json.loads((ds.scene_dir(root, scene_id) / "scene.json").read_text()))
    cdata = json.loads((ds.config_dir(root, scene_id, config_id) / "config.json").read_text())
    return World(scene, Configuration.from_dict(cdata)), RobotSpec.from_dict(cdata["robot"])


def iter_configs(manifest: ds.DatasetManifest, split: str | None = None) -> Iterator[tuple[int, int, list[int]]]:
    for s in sorted(manifest.scenes):
        if split is not None and manifest.splits.get(s) != split:
            continue
        for c in sorted(manifest.scenes[s]):
            yield s, c, manifest.scenes[s][c]


def _rewrite_meta(ep_dir: Path, **updates) -> None:
    meta = ds.read_meta(ep_dir)
    meta.update(updates)
    ds.write_json(ep_dir / "meta.json", meta)


def label(root: Path | str, robot: RobotSpec | None = None, spacing: float = GRID_SPACING) -> int:
    """Run the feasibility trials per configuration and store them in each episode; returns trial count."""
    root = Path(root)
    manifest = ds.read_manifest(root)
    trials = 0
    for s, c, eps in iter_configs(manifest):
        world, cfg_robot = load_world(root, s, c)
        r = robot or cfg_robot
        if world.config.focus_target < 0:
            continue
        sparse = label_configuration(r, world, world.config.focus_target, spacing)
        trials += len(sparse)
        for e in eps:
            ep_dir = ds.episode_dir(root, s, c, e)
            ds.write_sparse(ep_dir, sparse)
            if r != cfg_robot:
                _rewrite_meta(ep_dir, robot=r.to_dict())
        log.info("event=labeled scene=%d config=%d samples=%d successes=%d", s, c, len(sparse),
                 int(sparse.values.sum()))
    return trials


def interpolate(root: Path | str, k: int = affordance.DEFAULT_K, sigma: float = affordance.DEFAULT_SIGMA,
                theta: float = affordance.DEFAULT_THETA) -> int:
    """Write the dense map (and the thresholded sample association) for every labeled episode."""
    root = Path(root)
    manifest = ds.read_manifest(root)
    done = 0
    for s, c, e in manifest.episodes():
        ep_dir = ds.episode_dir(root, s, c, e)
        ep = ds.read_episode(ep_dir)
        if ep.sparse is None:
            raise ds.DatastoreError("episode has no sparse labels; run label first", ep_dir)
        dense = affordance.interpolate_sparse(ep.sparse, ep.floor_cloud, k, sigma)
        dense.theta = theta
        ds.write_dense(ep_dir, dense)
        ds.write_array(ep_dir / "assoc.bin", affordance.associate(ep.sparse, ep.floor_cloud, ep.pose, theta))
        _rewrite_meta(ep_dir, dense_params={"k": k, "sigma": sigma, "theta": theta})
        done += 1
    return done


def run_all(cfg: PipelineConfig) -> Path:
    path = generate(cfg)
    label(cfg.out, cfg.robots[cfg.robot] if cfg.robot else None, cfg.spacing)
    interpolate(cfg.out, cfg.k, cfg.sigma, cfg.theta)
    return path


# ---------------------------------------------------------------- predictions + evaluation

PREDICTORS = ("heuristic", "random", "gt")


def predict_episode(kind: str, ep: ds.Episode, world: World, seed: int = 0) -> affordance.DenseAffordanceMap:
    target = world.target(ep.target_id)
    if kind == "heuristic":
        return predict_heuristic(ep.floor_cloud, ep.robot, world, ep.target_id)
    if kind == "random":
        s = derive_seed(seed, "predict", ep.scene_id, ep.config_id, ep.episode_id)
        return predict_random(ep.floor_cloud, s, target.floor_xy, target.normal, ep.robot.arm_reach)
    if kind == "gt":
        if ep.dense is None:
            raise ds.DatastoreError("episode has no dense map", f"episode {ep.scene_id}/{ep.config_id}/{ep.episode_id}")
        return ep.dense
    raise ValueError(f"unknown predictor {kind!r}; choose from {PREDICTORS}")


def predict(root: Path | str, out: Path | str, kind: str, seed: int = 0, split: str | None = None) -> int:
    """Write ``dense.bin`` predictions in a tree mirroring the dataset layout."""
    root, out = Path(root), Path(out)
    manifest = ds.read_manifest(root)
    n = 0
    for s, c, eps in iter_configs(manifest, split):
        world, _ = load_world(root, s, c)
        for e in eps:
            ep = ds.read_episode(ds.episode_dir(root, s, c, e))
            pred = predict_episode(kind, ep, world, seed)
            target = ds.episode_dir(out, s, c, e)
            target.mkdir(parents=True, exist_ok=True)
            ds.write_dense(target, pred)
            n += 1
    return n


def evaluate_dirs(pred_root: Path | str, gt_root: Path | str, split: str | None = None,
                  lam: float | None = DEFAULT_LAMBDA, seed: int = 0) -> MetricsReport:
    pred_root, gt_root = Path(pred_root), Path(gt_root)
    manifest = ds.read_manifest(gt_root)
    reports = []
    for s, c, e in manifest.episodes(split):
        gt = ds.read_dense(ds.episode_dir(gt_root, s, c, e))
        pred = ds.read_dense(ds.episode_dir(pred_root, s, c, e))
        if len(gt) == 0 and len(pred) == 0:
            log.info("event=eval_skip scene=%d config=%d episode=%d reason=no_floor", s, c, e)
            continue
        ep_seed = derive_seed(seed, "wmse", s, c, e)
        reports.append((s, metrics(pred, gt, lam, ep_seed)))
    return aggregate(reports)


def pool_config(floors: list[PointCloud], preds: list[np.ndarray]) -> tuple[PointCloud, np.ndarray]:
    """Concatenate the floor clouds and predictions of one configuration's episodes."""
    if not floors:
        return PointCloud(np.zeros((0, 3))), np.zeros(0)
    cloud = PointCloud(np.vstack([f.points for f in floors]))
    return cloud, np.concatenate([np.asarray(p, dtype=np.float64) for p in preds])


def msr_dirs(pred_root: Path | str, root: Path | str, top_k: int = 5, split: str | None = None) -> MsrReport:
    """MSR per configuration, ranking the pooled floor points of all its views; averaged over configurations."""
    pred_root, root = Path(pred_root), Path(root)
    manifest = ds.read_manifest(root)
    reports = []
    for s, c, eps in iter_configs(manifest, split):
        world, _ = load_world(root, s, c)
        floors, preds, robot = [], [], None
        for e in eps:
            ep = ds.read_episode(ds.episode_dir(root, s, c, e))
            floors.append(ep.floor_cloud)
            preds.append(ds.read_dense(ds.episode_dir(pred_root, s, c, e)))
            robot = ep.robot
        cloud, values = pool_config(floors, preds)
        if len(cloud) == 0:
            log.info("event=msr_skip scene=%d config=%d reason=no_floor", s, c)
            continue
        reports.append(msr(values, cloud, robot, world, world.config.focus_target, top_k))
    return mean_msr(reports)
