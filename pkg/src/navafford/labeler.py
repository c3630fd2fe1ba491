"""Viewpoint sampling and the geometric manipulation-feasibility oracle.

The oracle stands in for a physics grasp trial. A base position succeeds iff

(a) the base disc clears every wall, furniture and obstacle footprint,
(b) the shoulder-to-target distance lies within the arm's reach band, and
(c) the straight floor corridor from base to target, inflated by the
    end-effector's approach half-width, clears every obstacle footprint.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .geom import CameraIntrinsics, RigidTransform, cast_rays, pixel_directions, project
from .rng import derive_rng
from .scenegen import World

log = logging.getLogger(__name__)

END_EFFECTORS = ("gripper", "suction")
APPROACH_HALF_WIDTH = {"gripper": 0.08, "suction": 0.04}
GRID_SPACING = 0.10
VIEWS_PER_CONFIG = 10
LATERAL_RANGE = (0.0, 1.5)
FORWARD_RANGE = (1.5, 3.8)
VIEW_RETRIES = 25
CAMERA_HEIGHT = 1.5


@dataclass(frozen=True)
class RobotSpec:
    name: str
    arm_reach: float
    base_height: float
    base_radius: float
    end_effector: str
    min_reach: float = 0.15

    def __post_init__(self):
        if not 0 <= self.min_reach < self.arm_reach:
            raise ValueError(f"{self.name}: need 0 <= min_reach < arm_reach")
        if self.base_radius <= 0:
            raise ValueError(f"{self.name}: base_radius must be positive")
        if self.end_effector not in END_EFFECTORS:
            raise ValueError(f"{self.name}: unknown end effector {self.end_effector!r}")

    @property
    def approach_half_width(self) -> float:
        return APPROACH_HALF_WIDTH[self.end_effector]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RobotSpec:
        return cls(**d)


def default_robots() -> dict[str, RobotSpec]:
    robots = [
        RobotSpec("flexiv", 0.80, 0.30, 0.25, "gripper"),
        RobotSpec("panda", 0.85, 0.30, 0.25, "gripper"),
        RobotSpec("ur5e", 0.85, 0.30, 0.25, "suction"),
        RobotSpec("xarm6", 0.70, 0.45, 0.25, "gripper"),
    ]
    return {r.name: r for r in robots}


def load_robots(path: str | Path) -> dict[str, RobotSpec]:
    data = json.loads(Path(path).read_text())
    robots = [RobotSpec.from_dict(d) for d in data["robots"]]
    return {r.name: r for r in robots}


@dataclass
class SparseAffordance:
    positions: np.ndarray  # (m, 2) floor xy, world frame
    values: np.ndarray  # (m,) in {0, 1}
    robot: RobotSpec
    target_id: int

    def __len__(self) -> int:
        return len(self.values)


# ---------------------------------------------------------------- viewpoints

def _view_pose(world: World, target_id: int, lateral: float, forward: float,
               side: int, height: float) -> tuple[RigidTransform, np.ndarray]:
    t = world.target(target_id)
    n = np.asarray(t.normal, dtype=np.float64)
    tangent = np.array([-n[1], n[0]])
    xy = t.floor_xy + forward * n + side * lateral * tangent
    eye = np.array([xy[0], xy[1], height])
    return RigidTransform.look_at(eye, world.aim_point(target_id)), eye


def target_visible(world: World, target_id: int, pose: RigidTransform, intr: CameraIntrinsics) -> bool:
    """True iff the pixel nearest the target's projection exists and sees the target first."""
    if any(b.contains(pose.translation) for b in world.boxes):
        return False
    uv = project(world.aim_point(target_id), intr, pose)
    u, v = int(np.rint(uv[0])), int(np.rint(uv[1]))
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        return False
    d = pixel_directions(intr)[v, u]
    _, ids = cast_rays(world.boxes, pose.translation, d[None, :] @ pose.rotation.T)
    return int(ids[0]) == target_id


def sample_viewpoints(world: World, target_id: int, seed: int, k: int = VIEWS_PER_CONFIG,
                      intr: CameraIntrinsics | None = None, camera_height: float = CAMERA_HEIGHT,
                      retries: int = VIEW_RETRIES) -> list[RigidTransform]:
    """Up to ``k`` camera poses around the target, alternating sides, moving outward.

    Forward distances are drawn for all slots up front and sorted, so the views
    step away from the target. A slot whose view cannot see the target is
    redrawn at a fresh random position up to ``retries`` times, then dropped.
    """
    world.target(target_id)
    intr = intr or CameraIntrinsics.centered()
    rng = derive_rng(seed, "views", target_id)
    forwards = np.sort(rng.uniform(*FORWARD_RANGE, size=k))
    laterals = rng.uniform(*LATERAL_RANGE, size=k)
    poses = []
    for slot in range(k):
        side = 1 if slot % 2 == 0 else -1
        lateral, forward = laterals[slot], forwards[slot]
        for attempt in range(retries + 1):
            if attempt:
                lateral, forward = rng.uniform(*LATERAL_RANGE), rng.uniform(*FORWARD_RANGE)
            pose, _ = _view_pose(world, target_id, lateral, forward, side, camera_height)
            if target_visible(world, target_id, pose, intr):
                poses.append(pose)
                break
        else:
            log.info("event=view_drop scene=%d config=%d target=%d slot=%d",
                     world.config.scene_id, world.config.config_id, target_id, slot)
    return poses


# ---------------------------------------------------------------- base grid

def sample_base_grid(target_floor, normal, reach: float, spacing: float = GRID_SPACING) -> np.ndarray:
    """Grid points within ``reach`` of the target with ``(p - target) . normal < 0``.

    The lattice is anchored at the target's floor projection and returned in
    row-major order (y outer, x inner, both ascending). Shape (m, 2).
    """
    if reach <= 0 or spacing <= 0:
        raise ValueError("reach and spacing must be positive")
    t = np.asarray(target_floor, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    m = int(math.floor(reach / spacing + 1e-9))
    idx = np.arange(-m, m + 1)
    jj, ii = np.meshgrid(idx, idx, indexing="ij")
    offsets = np.stack([ii.ravel() * spacing, jj.ravel() * spacing], axis=1)
    # integer lattice test avoids dropping exact boundary points to rounding
    inside = (ii.ravel() ** 2 + jj.ravel() ** 2) * spacing**2 <= reach**2 * (1 + 1e-12)
    front = offsets @ n < -1e-12 * spacing
    return t + offsets[inside & front]


# ---------------------------------------------------------------- feasibility

def _point_rect_dist(p: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """(n, r) distance from points (n, 2) to rectangles (r, 4)."""
    dx = np.maximum(np.maximum(rects[None, :, 0] - p[:, None, 0], 0.0), p[:, None, 0] - rects[None, :, 2])
    dy = np.maximum(np.maximum(rects[None, :, 1] - p[:, None, 1], 0.0), p[:, None, 1] - rects[None, :, 3])
    return np.hypot(dx, dy)


def _point_segment_dist(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasted distance from points q to segments ab (last axis = xy)."""
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 0, np.sum((q - a) * ab, axis=-1) / denom, 0.0)
    s = np.clip(s, 0.0, 1.0)
    proj = a + s[..., None] * ab
    return np.linalg.norm(q - proj, axis=-1)


def _segment_hits_rect(a: np.ndarray, b: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """(n, r) Liang-Barsky test: does segment a->b (n, 2) pass through rect (r, 4)."""
    d = (b - a)[:, None, :]
    a = a[:, None, :]
    lo, hi = rects[None, :, 0:2], rects[None, :, 2:4]
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - a) / d
        t2 = (hi - a) / d
    par = d == 0
    inside_par = (a >= lo) & (a <= hi)
    t_min = np.where(par, np.where(inside_par, -np.inf, np.inf), np.minimum(t1, t2))
    t_max = np.where(par, np.where(inside_par, np.inf, -np.inf), np.maximum(t1, t2))
    enter = np.maximum(np.max(t_min, axis=-1), 0.0)
    leave = np.minimum(np.min(t_max, axis=-1), 1.0)
    return enter <= leave


def segment_rect_distance(a: np.ndarray, b: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """(n, r) distance between segments a->b and axis-aligned rectangles."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    rects = np.asarray(rects, dtype=np.float64).reshape(-1, 4)
    if len(rects) == 0:
        return np.full((len(a), 0), np.inf)
    dist = np.minimum(_point_rect_dist(a, rects), _point_rect_dist(b, rects))
    corners = np.stack([rects[:, [0, 1]], rects[:, [2, 1]], rects[:, [2, 3]], rects[:, [0, 3]]], axis=1)
    cd = _point_segment_dist(corners[None, :, :, :], a[:, None, None, :], b[:, None, None, :])
    dist = np.minimum(dist, cd.min(axis=-1))
    return np.where(_segment_hits_rect(a, b, rects), 0.0, dist)


def feasible_many(robot: RobotSpec, bases: np.ndarray, world: World, target_id: int) -> np.ndarray:
    """Vectorized oracle over (n, 2) base positions; returns uint8 (n,)."""
    target = world.target(target_id)
    bases = np.asarray(bases, dtype=np.float64).reshape(-1, 2)
    tpos = np.asarray(target.position, dtype=np.float64)

    solids = world.solid_footprints()
    clear = np.all(_point_rect_dist(bases, solids) >= robot.base_radius, axis=1)

    shoulder = np.column_stack([bases, np.full(len(bases), robot.base_height)])
    reach = np.linalg.norm(shoulder - tpos, axis=1)
    in_reach = (reach >= robot.min_reach) & (reach <= robot.arm_reach)

    obstacles = world.obstacle_footprints()
    tfloor = np.broadcast_to(tpos[:2], bases.shape)
    corridor = segment_rect_distance(bases, tfloor, obstacles)
    open_path = np.all(corridor >= robot.approach_half_width, axis=1)
    return (clear & in_reach & open_path).astype(np.uint8)


def feasible(robot: RobotSpec, base, world: World, target_id: int) -> int:
    return int(feasible_many(robot, np.asarray(base, dtype=np.float64)[None, :], world, target_id)[0])


def label_configuration(robot: RobotSpec, world: World, target_id: int,
                        spacing: float = GRID_SPACING) -> SparseAffordance:
    target = world.target(target_id)
    # grid keeps points with (p - t) . normal < 0; targets' normals point into the room
    away = -np.asarray(target.normal, dtype=np.float64)
    grid = sample_base_grid(target.floor_xy, away, robot.arm_reach, spacing)
    values = feasible_many(robot, grid, world, target_id)
    return SparseAffordance(grid, values, robot, target_id)
