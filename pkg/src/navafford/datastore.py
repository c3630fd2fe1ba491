"""On-disk dataset: binary arrays, episode directories, manifest and splits.

Binary array file (all little-endian)::

    offset  size      field
    0       4         magic b"MMKA"
    4       4         u32 format version (1)
    8       4         u32 element type (1 = float32, 2 = uint32)
    12      4         u32 number of dimensions d
    16      8*d       u64 dimension sizes
    16+8d   ...       packed payload, row-major

Depth pixels without a hit are stored as the bit pattern 0xFFFFFFFF (a NaN).

Layout::

    <root>/manifest.json
    <root>/scene_<id>/scene.json
    <root>/scene_<id>/config_<id>/config.json
    <root>/scene_<id>/config_<id>/episode_<id>/{depth,ids,cloud,floor,sparse,dense}.bin, meta.json
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .affordance import DenseAffordanceMap
from .geom import CameraIntrinsics, PointCloud, RigidTransform
from .labeler import RobotSpec, SparseAffordance
from .rng import derive_rng

MAGIC = b"MMKA"
FORMAT_VERSION = 1
MANIFEST_VERSION = 1
TYPE_F32 = 1
TYPE_U32 = 2
_DTYPES = {TYPE_F32: np.dtype("<f4"), TYPE_U32: np.dtype("<u4")}
NO_HIT_BITS = 0xFFFFFFFF

CLOUD_CHANNELS = ("id", "target", "obstacle")
BASE_FILES = ("depth.bin", "ids.bin", "cloud.bin", "floor.bin", "meta.json")


class DatastoreError(Exception):
    def __init__(self, message: str, path: Path | str | None = None, offset: int | None = None):
        self.path = str(path) if path is not None else None
        self.offset = offset
        where = ""
        if path is not None:
            where = f" [{path}" + (f" @ byte {offset}" if offset is not None else "") + "]"
        super().__init__(message + where)


class MagicMismatch(DatastoreError):
    pass


class VersionMismatch(DatastoreError):
    pass


class LengthMismatch(DatastoreError):
    pass


class DiskMismatch(DatastoreError):
    def __init__(self, discrepancies: list[str]):
        self.discrepancies = discrepancies
        super().__init__("dataset on disk disagrees with manifest: " + "; ".join(discrepancies))


# ---------------------------------------------------------------- arrays

def encode_array(arr: np.ndarray, elem_type: int) -> bytes:
    dtype = _DTYPES[elem_type]
    a = np.asarray(arr)
    if elem_type == TYPE_F32:
        a32 = a.astype(dtype)
        bits = a32.view("<u4").copy()
        bits[~np.isfinite(a32)] = NO_HIT_BITS
        payload = bits.tobytes()
    else:
        payload = a.astype(dtype).tobytes()
    header = MAGIC + struct.pack("<III", FORMAT_VERSION, elem_type, a.ndim)
    header += struct.pack(f"<{a.ndim}Q", *a.shape)
    return header + payload


def decode_array(data: bytes, path: Path | str = "<bytes>") -> np.ndarray:
    if len(data) < 16:
        raise LengthMismatch(f"header truncated ({len(data)} bytes)", path, len(data))
    if data[:4] != MAGIC:
        raise MagicMismatch(f"bad magic {data[:4]!r}, expected {MAGIC!r}", path, 0)
    version, elem_type, ndim = struct.unpack_from("<III", data, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported format version {version}", path, 4)
    if elem_type not in _DTYPES:
        raise DatastoreError(f"unknown element type {elem_type}", path, 8)
    hdr = 16 + 8 * ndim
    if len(data) < hdr:
        raise LengthMismatch(f"dimension table truncated", path, len(data))
    shape = struct.unpack_from(f"<{ndim}Q", data, 16)
    expected = int(np.prod(shape, dtype=np.int64)) * 4
    if len(data) - hdr != expected:
        raise LengthMismatch(f"payload is {len(data) - hdr} bytes, header says {expected}", path, hdr)
    return np.frombuffer(data, dtype=_DTYPES[elem_type], offset=hdr).reshape(shape)


def write_array(path: Path, arr: np.ndarray, elem_type: int = TYPE_F32) -> None:
    Path(path).write_bytes(encode_array(arr, elem_type))


def read_array(path: Path) -> np.ndarray:
    return decode_array(Path(path).read_bytes(), path)


def dump_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path: Path, obj: Any) -> None:
    Path(path).write_text(dump_json(obj))


# ---------------------------------------------------------------- episodes

@dataclass
class Episode:
    scene_id: int
    config_id: int
    episode_id: int
    pose: RigidTransform
    intrinsics: CameraIntrinsics
    depth: np.ndarray
    ids: np.ndarray
    global_cloud: PointCloud
    floor_cloud: PointCloud
    robot: RobotSpec
    target_id: int
    obstacle_ids: list[int] = field(default_factory=list)
    sparse: SparseAffordance | None = None
    dense: DenseAffordanceMap | None = None

    def meta(self) -> dict:
        d = {
            "format_version": FORMAT_VERSION,
            "scene_id": self.scene_id,
            "config_id": self.config_id,
            "episode_id": self.episode_id,
            "pose": {"rotation": self.pose.rotation.tolist(),
                     "translation": self.pose.translation.tolist()},
            "intrinsics": self.intrinsics.to_dict(),
            "robot": self.robot.to_dict(),
            "target_id": self.target_id,
            "obstacle_ids": list(self.obstacle_ids),
        }
        if self.dense is not None:
            d["dense_params"] = {"k": self.dense.k, "sigma": self.dense.sigma, "theta": self.dense.theta}
        return d


def attach_feature_channels(cloud: PointCloud, target_id: int, obstacle_ids) -> PointCloud:
    """Append a target channel (1 on the target) and an obstacle channel (-1 on obstacles)."""
    if "id" not in cloud.channel_names:
        raise ValueError("cloud has no instance-id channel")
    ids = cloud.channel("id")
    target = (ids == target_id).astype(np.float64)
    obstacle = -np.isin(ids, np.asarray(list(obstacle_ids), dtype=np.float64)).astype(np.float64)
    return cloud.with_channels(("target", "obstacle"), np.column_stack([target, obstacle]))


def _cloud_array(cloud: PointCloud) -> np.ndarray:
    return np.hstack([cloud.points, cloud.channels])


def _cloud_from(arr: np.ndarray, path: Path) -> PointCloud:
    if arr.ndim != 2 or arr.shape[1] != 3 + len(CLOUD_CHANNELS):
        raise LengthMismatch(f"cloud array has shape {arr.shape}", path)
    a = arr.astype(np.float64)
    return PointCloud(a[:, :3], a[:, 3:], CLOUD_CHANNELS)


def write_sparse(ep_dir: Path, sparse: SparseAffordance) -> None:
    arr = np.column_stack([sparse.positions, sparse.values]).reshape(-1, 3)
    write_array(ep_dir / "sparse.bin", arr)


def write_dense(ep_dir: Path, dense: DenseAffordanceMap) -> None:
    write_array(ep_dir / "dense.bin", dense.values)


def write_episode(e: Episode, ep_dir: Path | str) -> None:
    ep_dir = Path(ep_dir)
    ep_dir.mkdir(parents=True, exist_ok=True)
    if e.global_cloud.channel_names != CLOUD_CHANNELS or e.floor_cloud.channel_names != CLOUD_CHANNELS:
        raise ValueError(f"episode clouds must carry channels {CLOUD_CHANNELS}")
    write_array(ep_dir / "depth.bin", e.depth)
    write_array(ep_dir / "ids.bin", e.ids, TYPE_U32)
    write_array(ep_dir / "cloud.bin", _cloud_array(e.global_cloud))
    write_array(ep_dir / "floor.bin", _cloud_array(e.floor_cloud))
    if e.sparse is not None:
        write_sparse(ep_dir, e.sparse)
    if e.dense is not None:
        if len(e.dense) != len(e.floor_cloud):
            raise ValueError("dense map length differs from the floor cloud")
        write_dense(ep_dir, e.dense)
    write_json(ep_dir / "meta.json", e.meta())


def read_meta(ep_dir: Path) -> dict:
    path = Path(ep_dir) / "meta.json"
    meta = json.loads(path.read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported episode version {meta.get('format_version')}", path)
    return meta


def read_episode(ep_dir: Path | str) -> Episode:
    ep_dir = Path(ep_dir)
    meta = read_meta(ep_dir)
    intr = CameraIntrinsics.from_dict(meta["intrinsics"])
    pose = RigidTransform(np.array(meta["pose"]["rotation"]), np.array(meta["pose"]["translation"]))
    robot = RobotSpec.from_dict(meta["robot"])

    depth = read_array(ep_dir / "depth.bin").astype(np.float64)
    ids = read_array(ep_dir / "ids.bin").astype(np.uint32)
    if depth.shape != (intr.height, intr.width) or ids.shape != depth.shape:
        raise LengthMismatch(f"image shape {depth.shape}/{ids.shape} differs from intrinsics",
                             ep_dir / "depth.bin")
    cloud = _cloud_from(read_array(ep_dir / "cloud.bin"), ep_dir / "cloud.bin")
    floor = _cloud_from(read_array(ep_dir / "floor.bin"), ep_dir / "floor.bin")

    sparse = None
    if (ep_dir / "sparse.bin").exists():
        s = read_array(ep_dir / "sparse.bin").astype(np.float64).reshape(-1, 3)
        sparse = SparseAffordance(s[:, :2], s[:, 2].astype(np.uint8), robot, int(meta["target_id"]))
    dense = None
    if (ep_dir / "dense.bin").exists():
        path = ep_dir / "dense.bin"
        v = read_array(path).astype(np.float64)
        if v.shape != (len(floor),):
            raise LengthMismatch(f"dense map has {v.shape} values for {len(floor)} floor points", path)
        p = meta.get("dense_params", {})
        dense = DenseAffordanceMap(v, int(p.get("k", 8)), float(p.get("sigma", 0.1)),
                                   float(p.get("theta", 0.05)))
    return Episode(int(meta["scene_id"]), int(meta["config_id"]), int(meta["episode_id"]), pose, intr,
                   depth, ids, cloud, floor, robot, int(meta["target_id"]),
                   list(meta.get("obstacle_ids", [])), sparse, dense)


def read_dense(ep_dir: Path) -> np.ndarray:
    return read_array(Path(ep_dir) / "dense.bin").astype(np.float64)


# ---------------------------------------------------------------- layout + manifest

def scene_dir(root: Path, scene_id: int) -> Path:
    return Path(root) / f"scene_{scene_id:06d}"


def config_dir(root: Path, scene_id: int, config_id: int) -> Path:
    return scene_dir(root, scene_id) / f"config_{config_id:04d}"


def episode_dir(root: Path, scene_id: int, config_id: int, episode_id: int) -> Path:
    return config_dir(root, scene_id, config_id) / f"episode_{episode_id:02d}"


@dataclass
class DatasetManifest:
    seed: int
    scenes: dict[int, dict[int, list[int]]]  # scene -> config -> episode ids
    splits: dict[int, str] = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    version: int = MANIFEST_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "seed": self.seed,
            "params": self.params,
            "scenes": {str(s): {"split": self.splits.get(s, "unassigned"),
                                "configs": {str(c): eps for c, eps in sorted(cfgs.items())}}
                       for s, cfgs in sorted(self.scenes.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> DatasetManifest:
        if d.get("version") != MANIFEST_VERSION:
            raise VersionMismatch(f"unsupported manifest version {d.get('version')}")
        scenes, splits = {}, {}
        for s, entry in d["scenes"].items():
            scenes[int(s)] = {int(c): [int(e) for e in eps] for c, eps in entry["configs"].items()}
            if entry.get("split") in ("train", "test"):
                splits[int(s)] = entry["split"]
        return cls(int(d["seed"]), scenes, splits, d.get("params", {}))

    def episodes(self, split: str | None = None):
        """Yield (scene, config, episode) ids in sorted order."""
        for s in sorted(self.scenes):
            if split is not None and self.splits.get(s) != split:
                continue
            for c in sorted(self.scenes[s]):
                for e in self.scenes[s][c]:
                    yield s, c, e


def write_manifest(root: Path, manifest: DatasetManifest) -> Path:
    path = Path(root) / "manifest.json"
    write_json(path, manifest.to_dict())
    return path


def read_manifest(root: Path | str) -> DatasetManifest:
    return DatasetManifest.from_dict(json.loads((Path(root) / "manifest.json").read_text()))


def split_dataset(manifest: DatasetManifest, train_fraction: float, seed: int) -> DatasetManifest:
    """Partition scenes (never episodes) into train and test."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    scene_ids = sorted(manifest.scenes)
    if len(scene_ids) < 2:
        raise ValueError("need at least 2 scenes to split")
    n_train = min(max(int(round(train_fraction * len(scene_ids))), 1), len(scene_ids) - 1)
    perm = derive_rng(seed, "split").permutation(len(scene_ids))
    train = {scene_ids[i] for i in perm[:n_train]}
    splits = {s: ("train" if s in train else "test") for s in scene_ids}
    return DatasetManifest(manifest.seed, manifest.scenes, splits, manifest.params, manifest.version)


def stats(manifest: DatasetManifest, root: Path | str | None = None) -> dict[str, dict[str, int]]:
    """Scene/configuration/episode counts per split, cross-checked against disk when ``root`` is given."""
    out: dict[str, dict[str, int]] = {}
    for s, cfgs in manifest.scenes.items():
        row = out.setdefault(manifest.splits.get(s, "unassigned"),
                             {"scenes": 0, "configurations": 0, "episodes": 0})
        row["scenes"] += 1
        row["configurations"] += len(cfgs)
        row["episodes"] += sum(len(e) for e in cfgs.values())
    if root is not None:
        problems = disk_discrepancies(manifest, Path(root))
        if problems:
            raise DiskMismatch(problems)
    return dict(sorted(out.items()))


def disk_discrepancies(manifest: DatasetManifest, root: Path) -> list[str]:
    problems = []
    expected_scenes = {scene_dir(root, s).name for s in manifest.scenes}
    on_disk = {p.name for p in root.glob("scene_*") if p.is_dir()}
    problems += [f"scene dir not in manifest: {n}" for n in sorted(on_disk - expected_scenes)]
    for s, cfgs in sorted(manifest.scenes.items()):
        sdir = scene_dir(root, s)
        if not (sdir / "scene.json").is_file():
            problems.append(f"missing {sdir.name}/scene.json")
        expected_cfgs = {config_dir(root, s, c).name for c in cfgs}
        disk_cfgs = {p.name for p in sdir.glob("config_*") if p.is_dir()}
        problems += [f"config dir not in manifest: {sdir.name}/{n}" for n in sorted(disk_cfgs - expected_cfgs)]
        for c, eps in sorted(cfgs.items()):
            cdir = config_dir(root, s, c)
            if not (cdir / "config.json").is_file():
                problems.append(f"missing {sdir.name}/{cdir.name}/config.json")
            expected_eps = {episode_dir(root, s, c, e).name for e in eps}
            disk_eps = {p.name for p in cdir.glob("episode_*") if p.is_dir()}
            for n in sorted(expected_eps - disk_eps):
                problems.append(f"missing episode {sdir.name}/{cdir.name}/{n}")
            for n in sorted(disk_eps - expected_eps):
                problems.append(f"episode dir not in manifest: {sdir.name}/{cdir.name}/{n}")
            for n in sorted(expected_eps & disk_eps):
                missing = [f for f in BASE_FILES if not (cdir / n / f).is_file()]
                if missing:
                    problems.append(f"{sdir.name}/{cdir.name}/{n} lacks {missing}")
    return problems
