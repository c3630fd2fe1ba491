"""Affordance-map metrics, the weighted MSE loss, manipulation success rate,
and two reference predictors (uniform random and a geometric heuristic)."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .affordance import DenseAffordanceMap
from .geom import PointCloud
from .labeler import GRID_SPACING, RobotSpec, _point_rect_dist, feasible_many
from .rng import derive_rng
from .scenegen import World

DEFAULT_LAMBDA = 0.7
ZERO_WEIGHT_PROB = 0.5


@dataclass
class MetricsReport:
    rmse: float
    log_mse: float
    pcc: float | None
    sim: float | None
    count: int = 1
    per_scene: dict[int, dict] = field(default_factory=dict)
    weighted_mse: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_scene"] = {str(k): v for k, v in sorted(self.per_scene.items())}
        return d


@dataclass
class MsrReport:
    top1: float
    top5: float
    trials: int = 1
    k: int = 5

    def to_dict(self) -> dict:
        return asdict(self)


def _values(x) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, DenseAffordanceMap) else x, dtype=np.float64)


def pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.sum(da * da)) * float(np.sum(db * db)))
    if denom == 0.0:
        return None
    return float(np.clip(np.sum(da * db) / denom, -1.0, 1.0))


def cosine(a: np.ndarray, b: np.ndarray) -> float | None:
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        return None
    return float(np.clip(np.dot(a, b) / denom, -1.0, 1.0))


def metrics(pred, gt, lam: float | None = None, seed: int = 0) -> MetricsReport:
    """RMSE, logMSE, Pearson correlation and whole-vector cosine similarity.

    PCC (zero variance) and SIM (zero norm) come back as ``None`` when undefined.
    With ``lam`` given, the weighted MSE under that zero-label weight is filled in too.
    """
    p, g = _values(pred), _values(gt)
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: pred {p.shape} vs gt {g.shape}")
    if p.size == 0:
        raise ValueError("empty maps")
    if (p < 0).any() or (g < 0).any():
        raise ValueError("metrics expect non-negative affordance values")
    diff = g - p
    rmse = math.sqrt(float(np.mean(diff * diff)))
    ld = np.log1p(g) - np.log1p(p)
    wmse = weighted_mse(p, g, lam, seed) if lam is not None else None
    return MetricsReport(rmse, float(np.mean(ld * ld)), pearson(p, g), cosine(p, g), weighted_mse=wmse)


def aggregate(reports: Iterable[tuple[int, MetricsReport]]) -> MetricsReport:
    """Mean of per-episode metrics, overall and per scene; undefined entries are skipped."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")

    def fold(rs: list[MetricsReport]) -> dict:
        out = {"count": len(rs)}
        for name in ("rmse", "log_mse", "pcc", "sim", "weighted_mse"):
            vals = [getattr(r, name) for r in rs if getattr(r, name) is not None]
            out[name] = float(np.mean(vals)) if vals else None
        return out

    by_scene: dict[int, list[MetricsReport]] = {}
    for scene_id, r in reports:
        by_scene.setdefault(scene_id, []).append(r)
    total = fold([r for _, r in reports])
    return MetricsReport(total["rmse"], total["log_mse"], total["pcc"], total["sim"], total["count"],
                         {s: fold(rs) for s, rs in sorted(by_scene.items())}, total["weighted_mse"])


def write_per_scene_csv(report: MetricsReport, path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ("rmse", "log_mse", "pcc", "sim", "weighted_mse")
        w.writerow(["scene_id", "episodes", *cols])
        for s, row in sorted(report.per_scene.items()):
            w.writerow([s, row["count"]] + ["" if row.get(k) is None else repr(row[k]) for k in cols])


def zero_weight_mask(gt: np.ndarray, lam: float, seed: int) -> np.ndarray:
    """Per-element weights: ``lam`` on half (in expectation) of the zero-label elements, else 1."""
    draws = derive_rng(seed, "wmse").random(len(gt)) < ZERO_WEIGHT_PROB
    return np.where((gt == 0) & draws, lam, 1.0)


def weighted_mse(pred, gt, lam: float = DEFAULT_LAMBDA, seed: int = 0) -> float:
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    p, g = _values(pred), _values(gt)
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: pred {p.shape} vs gt {g.shape}")
    w = zero_weight_mask(g, lam, seed)
    return float(np.mean(w * (p - g) ** 2))


def top_indices(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values; ties go to the lower index."""
    values = np.asarray(values, dtype=np.float64)
    order = np.lexsort((np.arange(len(values)), -values))
    return order[:k]


def msr(pred, floor: PointCloud, robot: RobotSpec, world: World, target_id: int,
        top_k: int = 5) -> MsrReport:
    """Re-run the feasibility oracle at the top-ranked floor points of a prediction."""
    v = _values(pred)
    if len(v) == 0 or len(floor) == 0:
        raise ValueError("empty affordance map")
    if len(v) != len(floor):
        raise ValueError("prediction is not aligned with the floor cloud")
    best = top_indices(v, max(top_k, 1))
    ok = feasible_many(robot, floor.points[best, :2], world, target_id)
    return MsrReport(float(ok[0]), float(ok[:top_k].mean()), 1, top_k)


def mean_msr(reports: Iterable[MsrReport]) -> MsrReport:
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    return MsrReport(float(np.mean([r.top1 for r in reports])), float(np.mean([r.top5 for r in reports])),
                     sum(r.trials for r in reports), reports[0].k)


# ---------------------------------------------------------------- reference predictors

def operational_mask(floor: PointCloud, target_floor, normal, reach: float) -> np.ndarray:
    """Floor points inside the half-disc of radius ``reach`` in front of the target."""
    rel = floor.points[:, :2] - np.asarray(target_floor, dtype=np.float64)
    return (np.hypot(rel[:, 0], rel[:, 1]) <= reach) & (rel @ np.asarray(normal, dtype=np.float64) > 0)


def predict_random(floor: PointCloud, seed: int, target_floor, normal, reach: float) -> DenseAffordanceMap:
    """Uniform [0, 1) scores inside the robot's operational half-disc, 0 elsewhere."""
    draws = derive_rng(seed, "random-predictor").random(len(floor))
    inside = operational_mask(floor, target_floor, normal, reach)
    return DenseAffordanceMap(np.where(inside, draws, 0.0))


def reach_band(distance: np.ndarray, lo: float, hi: float, taper: float = GRID_SPACING) -> np.ndarray:
    """1 on [lo, hi], falling linearly to 0 over ``taper`` on either side."""
    d = np.asarray(distance, dtype=np.float64)
    below = np.clip(1.0 - (lo - d) / taper, 0.0, 1.0)
    above = np.clip(1.0 - (d - hi) / taper, 0.0, 1.0)
    return np.where(d < lo, below, np.where(d > hi, above, 1.0))


def heuristic_scores(points_xy: np.ndarray, robot: RobotSpec, world: World, target_id: int) -> np.ndarray:
    """Unnormalized reach-band x clearance score at floor positions."""
    xy = np.asarray(points_xy, dtype=np.float64).reshape(-1, 2)
    tpos = np.asarray(world.target(target_id).position, dtype=np.float64)
    shoulder = np.column_stack([xy, np.full(len(xy), robot.base_height)])
    band = reach_band(np.linalg.norm(shoulder - tpos, axis=1), robot.min_reach, robot.arm_reach)
    solids = world.solid_footprints()
    gap = _point_rect_dist(xy, solids).min(axis=1) if len(solids) else np.full(len(xy), np.inf)
    clearance = np.minimum(gap, robot.base_radius) / robot.base_radius
    return band * clearance


def predict_heuristic(floor: PointCloud, robot: RobotSpec, world: World, target_id: int) -> DenseAffordanceMap:
    """Geometric stand-in for a learned predictor: reach band times obstacle clearance, max-normalized."""
    s = heuristic_scores(floor.points[:, :2], robot, world, target_id)
    top = s.max() if len(s) else 0.0
    return DenseAffordanceMap(s / top if top > 0 else s)
