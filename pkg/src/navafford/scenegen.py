"""Seeded procedural kitchens: furniture along one wall, targets on counters,
obstacles scattered in front of each target.

World layout: the wall is the line y = 0 with the room at y > 0; furniture is
packed left to right from x = 0, its back against the wall. All solids are
axis-aligned boxes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geom import Box
from .rng import derive_rng

log = logging.getLogger(__name__)

CATEGORIES = ("rigid-target", "articulated-target", "obstacle", "furniture")
MOUNTS = ("countertop", "floor")

COUNTER_HEIGHT = 0.9
WALL_LENGTH = 6.0
OBSTACLE_RADIUS = 1.2
PLACEMENT_ATTEMPTS = 100

WALL_ID = 0
FURNITURE_ID0 = 1
RIGID_ID0 = 100
OBSTACLE_ID0 = 200


class SceneGenError(ValueError):
    pass


@dataclass(frozen=True)
class AssetEntry:
    category: str
    name: str
    width: float
    depth: float
    height: float
    mount: str
    kind: str = ""

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.mount not in MOUNTS:
            raise ValueError(f"unknown mount {self.mount!r}")
        if min(self.width, self.depth, self.height) <= 0:
            raise ValueError(f"asset {self.name!r} has a non-positive dimension")
        if not self.kind:
            object.__setattr__(self, "kind", self.name)


@dataclass(frozen=True)
class AssetCatalog:
    entries: tuple[AssetEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("asset names must be unique")

    def validate(self, require_all: bool = True) -> None:
        present = {e.category for e in self.entries}
        missing = [c for c in CATEGORIES if c not in present]
        if require_all and missing:
            raise ValueError(f"catalog lacks categories: {missing}")

    def of(self, *categories: str) -> list[AssetEntry]:
        return [e for e in self.entries if e.category in categories]

    def get(self, name: str) -> AssetEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"entries": [asdict(e) for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> AssetCatalog:
        return cls(tuple(AssetEntry(**e) for e in d["entries"]))

    @classmethod
    def load(cls, path: str | Path) -> AssetCatalog:
        cat = cls.from_dict(json.loads(Path(path).read_text()))
        cat.validate()
        return cat


def default_catalog() -> AssetCatalog:
    F, A, R, O = CATEGORIES[3], CATEGORIES[1], CATEGORIES[0], CATEGORIES[2]
    rows = [
        (F, "counter_a", 0.80, 0.60, 0.90, "floor", "counter"),
        (F, "counter_b", 0.60, 0.60, 0.90, "floor", "counter"),
        (F, "sink_a", 0.90, 0.60, 0.90, "floor", "sink"),
        (F, "sink_b", 0.80, 0.60, 0.90, "floor", "sink"),
        (F, "fridge_a", 0.80, 0.70, 1.80, "floor", "fridge"),
        (F, "fridge_b", 0.70, 0.70, 1.70, "floor", "fridge"),
        (A, "cabinet_a", 0.60, 0.60, 0.90, "floor", "cabinet"),
        (A, "cabinet_b", 0.80, 0.60, 0.90, "floor", "cabinet"),
        (A, "dishwasher_a", 0.60, 0.60, 0.90, "floor", "dishwasher"),
        (A, "oven_counter_a", 0.60, 0.60, 0.90, "floor", "oven_counter"),
        (A, "oven_counter_b", 0.70, 0.60, 0.90, "floor", "oven_counter"),
        (R, "bottle_a", 0.08, 0.08, 0.25, "countertop", "bottle"),
        (R, "pot_a", 0.25, 0.25, 0.15, "countertop", "pot"),
        (R, "fruit_a", 0.08, 0.08, 0.08, "countertop", "fruit"),
        (R, "medicine_bottle_a", 0.05, 0.05, 0.10, "countertop", "medicine_bottle"),
        (R, "vegetable_a", 0.12, 0.12, 0.10, "countertop", "vegetable"),
        (O, "chair_a", 0.45, 0.45, 0.90, "floor", "chair"),
        (O, "trolley_a", 0.50, 0.40, 0.90, "floor", "trolley"),
        (O, "bin_a", 0.35, 0.35, 0.60, "floor", "bin"),
        (O, "table_a", 0.80, 0.60, 0.75, "floor", "table"),
        (O, "cart_a", 0.60, 0.40, 0.80, "floor", "cart"),
    ]
    return AssetCatalog(tuple(AssetEntry(c, n, w, d, h, m, k) for c, n, w, d, h, m, k in rows))


@dataclass(frozen=True)
class FurniturePlacement:
    asset: AssetEntry
    offset: float

    @property
    def interval(self) -> tuple[float, float]:
        return (self.offset, self.offset + self.asset.width)


@dataclass(frozen=True)
class Target:
    id: int
    asset: AssetEntry
    position: tuple[float, float, float]
    normal: tuple[float, float]
    articulated: bool

    @property
    def floor_xy(self) -> np.ndarray:
        return np.array(self.position[:2])


@dataclass(frozen=True)
class Obstacle:
    id: int
    asset: AssetEntry
    position: tuple[float, float]
    yaw: float

    @property
    def footprint(self) -> tuple[float, float, float, float]:
        w, d = self.asset.width, self.asset.depth
        if round(self.yaw / (np.pi / 2)) % 2:
            w, d = d, w
        x, y = self.position
        return (x - w / 2, y - d / 2, x + w / 2, y + d / 2)


@dataclass(frozen=True)
class SceneSpec:
    scene_id: int
    wall_length: float
    counter_height: float
    furniture: tuple[FurniturePlacement, ...]
    articulated_targets: tuple[Target, ...]

    def furniture_box(self, i: int) -> Box:
        f = self.furniture[i]
        a = f.asset
        return Box(FURNITURE_ID0 + i, (f.offset, 0.0, 0.0), (f.offset + a.width, a.depth, a.height))

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "wall_length": self.wall_length,
            "counter_height": self.counter_height,
            "furniture": [{"asset": asdict(f.asset), "offset": f.offset} for f in self.furniture],
            "articulated_targets": [_target_dict(t) for t in self.articulated_targets],
        }

    @classmethod
    def from_dict(cls, d: dict) -> SceneSpec:
        return cls(
            int(d["scene_id"]), float(d["wall_length"]), float(d["counter_height"]),
            tuple(FurniturePlacement(AssetEntry(**f["asset"]), float(f["offset"])) for f in d["furniture"]),
            tuple(_target_from(t) for t in d["articulated_targets"]),
        )


@dataclass(frozen=True)
class Configuration:
    config_id: int
    scene_id: int
    targets: tuple[Target, ...]
    obstacles: tuple[Obstacle, ...]
    focus_target: int

    @property
    def rigid_targets(self) -> list[Target]:
        return [t for t in self.targets if not t.articulated]

    def to_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "scene_id": self.scene_id,
            "focus_target": self.focus_target,
            "targets": [_target_dict(t) for t in self.targets],
            "obstacles": [{"id": o.id, "asset": asdict(o.asset), "position": list(o.position),
                           "yaw": o.yaw} for o in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Configuration:
        obstacles = tuple(Obstacle(int(o["id"]), AssetEntry(**o["asset"]), tuple(o["position"]),
                                   float(o["yaw"])) for o in d["obstacles"])
        return cls(int(d["config_id"]), int(d["scene_id"]),
                   tuple(_target_from(t) for t in d["targets"]), obstacles, int(d["focus_target"]))


def _target_dict(t: Target) -> dict:
    return {"id": t.id, "asset": asdict(t.asset), "position": list(t.position),
            "normal": list(t.normal), "articulated": t.articulated}


def _target_from(d: dict) -> Target:
    return Target(int(d["id"]), AssetEntry(**d["asset"]), tuple(float(x) for x in d["position"]),
                  tuple(float(x) for x in d["normal"]), bool(d["articulated"]))


@dataclass
class World:
    """Everything solid in one configuration of one scene, in world coordinates."""

    scene: SceneSpec
    config: Configuration
    boxes: list[Box] = field(init=False)

    def __post_init__(self):
        boxes = [Box(WALL_ID, (-20.0, -0.2, 0.0), (self.scene.wall_length + 20.0, 0.0, 2.5))]
        boxes += [self.scene.furniture_box(i) for i in range(len(self.scene.furniture))]
        for t in self.config.rigid_targets:
            a = t.asset
            x, y, z = t.position
            boxes.append(Box(t.id, (x - a.width / 2, y - a.depth / 2, z),
                             (x + a.width / 2, y + a.depth / 2, z + a.height)))
        for o in self.config.obstacles:
            x0, y0, x1, y1 = o.footprint
            boxes.append(Box(o.id, (x0, y0, 0.0), (x1, y1, o.asset.height)))
        self.boxes = boxes

    @property
    def obstacle_ids(self) -> list[int]:
        return [o.id for o in self.config.obstacles]

    def target(self, target_id: int) -> Target:
        for t in self.config.targets:
            if t.id == target_id:
                return t
        raise KeyError(f"unknown target id {target_id}")

    def box(self, box_id: int) -> Box:
        for b in self.boxes:
            if b.id == box_id and b.id != WALL_ID:
                return b
        raise KeyError(f"unknown box id {box_id}")

    def aim_point(self, target_id: int) -> np.ndarray:
        """Point a camera should look at: the handle for articulated targets, else the box center."""
        t = self.target(target_id)
        if t.articulated:
            return np.array(t.position)
        return self.box(target_id).center

    def obstacle_footprints(self) -> np.ndarray:
        return np.array([o.footprint for o in self.config.obstacles], dtype=np.float64).reshape(-1, 4)

    def static_footprints(self) -> np.ndarray:
        """Footprints of the wall and furniture."""
        fps = [b.footprint for b in self.boxes if b.id == WALL_ID or FURNITURE_ID0 <= b.id < RIGID_ID0]
        return np.array(fps, dtype=np.float64).reshape(-1, 4)

    def solid_footprints(self) -> np.ndarray:
        return np.vstack([self.static_footprints(), self.obstacle_footprints()])


def _rects_overlap(a: Sequence[float], b: Sequence[float]) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def generate_scene(seed: int, catalog: AssetCatalog, scene_id: int = 0,
                   wall_length: float = WALL_LENGTH, counter_height: float = COUNTER_HEIGHT) -> SceneSpec:
    """Shuffle furniture kinds, pick one instance per kind and pack them along the wall."""
    rng = derive_rng(seed, "scene", scene_id)
    pool = catalog.of("furniture", "articulated-target")
    pool = [e for e in pool if e.mount == "floor"]
    kinds = sorted({e.kind for e in pool})
    order = [kinds[i] for i in rng.permutation(len(kinds))]

    placements = []
    offset = 0.0
    for kind in order:
        instances = [e for e in pool if e.kind == kind]
        asset = instances[int(rng.integers(len(instances)))]
        placements.append(FurniturePlacement(asset, offset))
        offset += asset.width
    if offset > wall_length + 1e-9:
        listing = ", ".join(f"{p.asset.name}@[{p.interval[0]:.2f},{p.interval[1]:.2f}]" for p in placements)
        raise SceneGenError(f"furniture overflows the {wall_length} m wall by "
                            f"{offset - wall_length:.3f} m: {listing}")

    articulated = []
    for i, p in enumerate(placements):
        if p.asset.category != "articulated-target":
            continue
        a = p.asset
        handle_z = min(0.75 * a.height, 1.2)
        articulated.append(Target(FURNITURE_ID0 + i, a, (p.offset + a.width / 2, a.depth, handle_z),
                                  (0.0, 1.0), True))
    return SceneSpec(int(scene_id), float(wall_length), float(counter_height),
                     tuple(placements), tuple(articulated))


def _counter_slots(scene: SceneSpec) -> list[int]:
    return [i for i, f in enumerate(scene.furniture)
            if abs(f.asset.height - scene.counter_height) < 1e-9]


def generate_configurations(scene: SceneSpec, seed: int, count: int,
                            catalog: AssetCatalog) -> list[Configuration]:
    """Place 1-3 rigid targets on countertops and 1-3 obstacles in front of every target."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rigid_pool = catalog.of("rigid-target")
    obstacle_pool = catalog.of("obstacle")
    slots = _counter_slots(scene)
    furniture_fps = [scene.furniture_box(i).footprint for i in range(len(scene.furniture))]
    configs = []
    for cid in range(count):
        rng = derive_rng(seed, "config", scene.scene_id, cid)
        rigid: list[Target] = []
        n_rigid = int(rng.integers(1, 4)) if rigid_pool and slots else 0
        for j in range(n_rigid):
            t = _place_rigid(rng, scene, slots, rigid_pool, rigid, RIGID_ID0 + j)
            if t is None:
                log.info("event=rigid_drop scene=%d config=%d slot=%d", scene.scene_id, cid, j)
            else:
                rigid.append(t)
        targets = tuple(rigid) + scene.articulated_targets

        obstacles: list[Obstacle] = []
        placed_fps = list(furniture_fps)
        for t in targets:
            n_obs = int(rng.integers(1, 4)) if obstacle_pool else 0
            for _ in range(n_obs):
                o = _place_obstacle(rng, t, obstacle_pool, placed_fps, OBSTACLE_ID0 + len(obstacles))
                if o is None:
                    log.info("event=obstacle_drop scene=%d config=%d target=%d",
                             scene.scene_id, cid, t.id)
                    continue
                obstacles.append(o)
                placed_fps.append(o.footprint)
        focus = targets[int(rng.integers(len(targets)))].id if targets else -1
        configs.append(Configuration(cid, scene.scene_id, targets, tuple(obstacles), focus))
    return configs


def _place_rigid(rng: np.random.Generator, scene: SceneSpec, slots: list[int],
                 pool: list[AssetEntry], placed: list[Target], tid: int) -> Target | None:
    asset = pool[int(rng.integers(len(pool)))]
    hw, hd = asset.width / 2, asset.depth / 2
    for _ in range(PLACEMENT_ATTEMPTS):
        f = scene.furniture[slots[int(rng.integers(len(slots)))]]
        lo_x, hi_x = f.offset + hw + 0.02, f.offset + f.asset.width - hw - 0.02
        lo_y, hi_y = f.asset.depth - 0.25, f.asset.depth - hd - 0.03
        if lo_x > hi_x or lo_y > hi_y:
            continue
        x, y = float(rng.uniform(lo_x, hi_x)), float(rng.uniform(lo_y, hi_y))
        fp = (x - hw, y - hd, x + hw, y + hd)
        if any(_rects_overlap(fp, _target_fp(t)) for t in placed):
            continue
        return Target(tid, asset, (x, y, scene.counter_height), (0.0, 1.0), False)
    return None


def _target_fp(t: Target) -> tuple[float, float, float, float]:
    x, y, _ = t.position
    return (x - t.asset.width / 2, y - t.asset.depth / 2, x + t.asset.width / 2, y + t.asset.depth / 2)


def _place_obstacle(rng: np.random.Generator, target: Target, pool: list[AssetEntry],
                    placed_fps: list, oid: int) -> Obstacle | None:
    asset = pool[int(rng.integers(len(pool)))]
    n = np.asarray(target.normal)
    tangent = np.array([n[1], -n[0]])
    center = target.floor_xy
    for _ in range(PLACEMENT_ATTEMPTS):
        r = OBSTACLE_RADIUS * np.sqrt(rng.uniform())
        phi = rng.uniform(0.0, np.pi)
        xy = center + r * (np.sin(phi) * n + np.cos(phi) * tangent)
        yaw = float(rng.integers(2)) * (np.pi / 2)
        o = Obstacle(oid, asset, (float(xy[0]), float(xy[1])), yaw)
        fp = o.footprint
        if fp[1] < 0.0 or any(_rects_overlap(fp, other) for other in placed_fps):
            continue
        return o
    return None


def footprints_disjoint(fps: Iterable[Sequence[float]]) -> bool:
    fps = list(fps)
    return not any(_rects_overlap(fps[i], fps[j])
                   for i in range(len(fps)) for j in range(i + 1, len(fps)))
