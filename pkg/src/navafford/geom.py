"""Rigid transforms, pinhole camera, box-world depth rendering and back-projection.

Conventions
-----------
* World frame: z up, floor is the plane z = 0.
* Camera frame: OpenCV style, x right, y down, z along the optical axis.
* A camera pose is the camera-to-world transform.
* Pixel (u, v) has its center at continuous image coordinates (u, v), so the
  image center of a W x H image is ((W - 1) / 2, (H - 1) / 2).
* Depth is the z coordinate of the hit point in the camera frame (not the
  Euclidean ray length). Pixels without a hit hold NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ORTHO_DRIFT_TOL = 1e-12
FLOOR_Z_MAX = 0.02


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> RigidTransform:
        return cls(np.eye(3), np.array([x, y, z], dtype=np.float64))

    @classmethod
    def rot_z(cls, theta: float, translation: Sequence[float] = (0.0, 0.0, 0.0)) -> RigidTransform:
        c, s = np.cos(theta), np.sin(theta)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(r, np.asarray(translation, dtype=np.float64))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> RigidTransform:
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def look_at(cls, eye: Sequence[float], target: Sequence[float],
                up: Sequence[float] = (0.0, 0.0, 1.0)) -> RigidTransform:
        """Camera-to-world pose at ``eye`` whose optical axis points at ``target``."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        norm = np.linalg.norm(right)
        if norm < 1e-9:
            raise ValueError("look_at: viewing direction is parallel to the up vector")
        right /= norm
        down = np.cross(forward, right)
        return cls(np.column_stack([right, down, forward]), eye)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> RigidTransform:
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a single 3-vector or an (n, 3) array of points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)


def _reorthonormalize(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """The transform that applies ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    if np.abs(r.T @ r - np.eye(3)).max() > ORTHO_DRIFT_TOL:
        r = _reorthonormalize(r)
    return RigidTransform(r, a.rotation @ b.translation + a.translation)


def transform_point(t: RigidTransform, p: Sequence[float]) -> np.ndarray:
    return t.apply(np.asarray(p, dtype=np.float64))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"degenerate intrinsics: fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside the image")

    @classmethod
    def centered(cls, width: int = 160, height: int = 120, focal: float = 120.0) -> CameraIntrinsics:
        return cls(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> CameraIntrinsics:
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


@dataclass(frozen=True)
class Box:
    """Axis-aligned solid with an instance id (0 means background)."""

    id: int
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    @property
    def footprint(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) on the floor."""
        return (self.lo[0], self.lo[1], self.hi[0], self.hi[1])

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2.0

    def contains(self, p: Sequence[float]) -> bool:
        return all(lo < x < hi for lo, x, hi in zip(self.lo, p, self.hi))


@dataclass
class PointCloud:
    """World-frame points with optional named per-point channels."""

    points: np.ndarray
    channels: np.ndarray | None = None
    channel_names: tuple[str, ...] = ()

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        n = len(self.points)
        if self.channels is None:
            self.channels = np.zeros((n, len(self.channel_names)))
        self.channels = np.asarray(self.channels, dtype=np.float64).reshape(n, len(self.channel_names))

    def __len__(self) -> int:
        return len(self.points)

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.channels[:, self.channel_names.index(name)]
        except ValueError:
            raise KeyError(f"point cloud has no channel {name!r}") from None

    def subset(self, mask: np.ndarray) -> PointCloud:
        return PointCloud(self.points[mask], self.channels[mask], self.channel_names)

    def with_channels(self, names: Sequence[str], values: np.ndarray) -> PointCloud:
        values = np.asarray(values, dtype=np.float64).reshape(len(self), -1)
        return PointCloud(self.points, np.hstack([self.channels, values]),
                          self.channel_names + tuple(names))


def pixel_directions(intr: CameraIntrinsics) -> np.ndarray:
    """(H, W, 3) camera-frame ray directions with unit z, one per pixel center."""
    v, u = np.mgrid[0:intr.height, 0:intr.width].astype(np.float64)
    return np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)


def cast_rays(boxes: Sequence[Box], origin: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit of rays ``origin + t * dirs`` (t > 0) against the floor and ``boxes``.

    Returns ``(t, ids)``; ``t`` is NaN where nothing is hit. On equal ``t`` the
    floor wins, then boxes in the given order.
    """
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    o = np.asarray(origin, dtype=np.float64)
    n = len(dirs)
    cand_t = np.full((len(boxes) + 1, n), np.inf)
    cand_id = np.zeros(len(boxes) + 1, dtype=np.uint32)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_floor = -o[2] / dirs[:, 2]
        cand_t[0] = np.where((dirs[:, 2] < 0) & (t_floor > 0), t_floor, np.inf)
        inv = 1.0 / dirs
        for i, b in enumerate(boxes):
            t1 = (np.asarray(b.lo) - o) * inv
            t2 = (np.asarray(b.hi) - o) * inv
            t_near = np.fmax.reduce(np.fmin(t1, t2), axis=1)
            t_far = np.fmin.reduce(np.fmax(t1, t2), axis=1)
            hit = (t_far >= t_near) & (t_near > 0)
            cand_t[i + 1] = np.where(hit, t_near, np.inf)
            cand_id[i + 1] = b.id

    best = np.argmin(cand_t, axis=0)
    t = cand_t[best, np.arange(n)]
    ids = np.where(np.isfinite(t), cand_id[best], 0).astype(np.uint32)
    t = np.where(np.isfinite(t), t, np.nan)
    return t, ids


def render_depth(boxes: Sequence[Box], pose: RigidTransform,
                 intr: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Render ``(depth, ids)`` images of the box world seen from ``pose``.

    ``depth`` is float64 (H, W) z-depth with NaN for no hit; ``ids`` is uint32.
    """
    if not (intr.fx > 0 and intr.fy > 0):
        raise ValueError("degenerate intrinsics")
    dirs_cam = pixel_directions(intr).reshape(-1, 3)
    # with unit camera-z directions the ray parameter equals the z-depth
    t, ids = cast_rays(boxes, pose.translation, dirs_cam @ pose.rotation.T)
    return t.reshape(intr.height, intr.width), ids.reshape(intr.height, intr.width)


def backproject(depth: np.ndarray, ids: np.ndarray, intr: CameraIntrinsics,
                pose: RigidTransform) -> PointCloud:
    """World-frame cloud of every finite-depth pixel, row-major, with an ``id`` channel."""
    depth = np.asarray(depth)
    ids = np.asarray(ids)
    if depth.shape != ids.shape or depth.shape != (intr.height, intr.width):
        raise ValueError(f"shape mismatch: depth {depth.shape}, ids {ids.shape}, "
                         f"intrinsics {(intr.height, intr.width)}")
    valid = np.isfinite(depth)
    pts_cam = pixel_directions(intr)[valid] * depth[valid][:, None]
    return PointCloud(pose.apply(pts_cam), ids[valid].astype(np.float64)[:, None], ("id",))


def project(points: np.ndarray, intr: CameraIntrinsics, pose: RigidTransform) -> np.ndarray:
    """Continuous pixel coordinates (u, v) of world points; (n, 2) or (2,)."""
    pc = pose.inverse().apply(points)
    u = intr.fx * pc[..., 0] / pc[..., 2] + intr.cx
    v = intr.fy * pc[..., 1] / pc[..., 2] + intr.cy
    return np.stack([u, v], axis=-1)


def extract_floor(cloud: PointCloud, z_max: float = FLOOR_Z_MAX) -> PointCloud:
    if z_max <= 0:
        raise ValueError("z_max must be positive")
    return cloud.subset(cloud.points[:, 2] < z_max)
