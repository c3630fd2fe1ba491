"""Sparse trial outcomes to floor-cloud labels, and Gaussian kNN densification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geom import PointCloud, RigidTransform, compose
from .labeler import SparseAffordance

DEFAULT_K = 8
DEFAULT_SIGMA = 0.10
DEFAULT_THETA = 0.05
_TIE_RTOL = 1e-9


@dataclass
class DenseAffordanceMap:
    values: np.ndarray
    k: int = DEFAULT_K
    sigma: float = DEFAULT_SIGMA
    theta: float = DEFAULT_THETA

    def __len__(self) -> int:
        return len(self.values)


def base_from_camera(cam_pose: RigidTransform) -> RigidTransform:
    """Camera-to-base transform for the robot carrying the camera.

    The base frame sits on the floor under the camera, x along the horizontal
    component of the optical axis, z up.
    """
    fwd = cam_pose.rotation[:, 2].copy()
    fwd[2] = 0.0
    yaw = np.arctan2(fwd[1], fwd[0])
    c = cam_pose.translation
    world_from_base = RigidTransform.rot_z(yaw, (c[0], c[1], 0.0))
    return compose(world_from_base.inverse(), cam_pose)


def sample_points_3d(sparse: SparseAffordance) -> np.ndarray:
    return np.column_stack([sparse.positions, np.zeros(len(sparse))])


def associate(sparse: SparseAffordance, floor: PointCloud, cam_pose: RigidTransform,
              theta: float = DEFAULT_THETA) -> np.ndarray:
    """Give each floor point the value of its nearest sample if closer than ``theta``, else 0.

    Samples and floor points are both mapped world -> camera -> robot base
    first; distances are frame independent, the base frame is where the
    labels live. Exact distance ties go to the lower sample index.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    out = np.zeros(len(floor))
    if len(sparse) == 0 or len(floor) == 0:
        return out
    cam_from_world = cam_pose.inverse()
    base_from_world = compose(base_from_camera(cam_pose), cam_from_world)
    samples = base_from_world.apply(sample_points_3d(sparse))
    pts = base_from_world.apply(floor.points)

    kk = min(len(sparse), 8)
    tree = cKDTree(samples)
    _, idx = tree.query(pts, k=kk, distance_upper_bound=theta * (1 + _TIE_RTOL))
    idx = np.asarray(idx).reshape(len(pts), kk)
    found = idx < len(samples)
    safe = np.where(found, idx, 0)
    d = np.sqrt(np.sum((samples[safe] - pts[:, None, :]) ** 2, axis=-1))
    d = np.where(found & (d < theta), d, np.inf)
    order = np.lexsort((safe, d), axis=1)[:, 0]
    rows = np.arange(len(pts))
    hit = np.isfinite(d[rows, order])
    out[hit] = np.asarray(sparse.values, dtype=np.float64)[safe[rows, order]][hit]
    return out


def gaussian_weight(distance, sigma: float):
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.asarray(distance, dtype=np.float64)
    return np.exp(-(d * d) / (2.0 * sigma * sigma))


def knn_indices(samples: np.ndarray, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """The k nearest samples per query, ordered by (distance, index).

    Returns ``(idx, sqdist)`` both (n, k). Rows whose k-th neighbor distance is
    shared by samples the tree did not return are resolved by brute force so
    exact ties always go to the lower sample index.
    """
    m = len(samples)
    if k >= m:
        sq = np.sum((queries[:, None, :] - samples[None, :, :]) ** 2, axis=-1)
        idx = np.broadcast_to(np.arange(m), sq.shape)
        order = np.lexsort((idx, sq), axis=1)
        return np.take_along_axis(idx, order, 1), np.take_along_axis(sq, order, 1)
    tree = cKDTree(samples)
    _, idx = tree.query(queries, k=k)
    idx = np.asarray(idx).reshape(len(queries), k)
    sq = np.sum((samples[idx] - queries[:, None, :]) ** 2, axis=-1)
    kth = sq.max(axis=1)
    radius = np.sqrt(kth) * (1 + _TIE_RTOL) + 1e-15
    counts = tree.query_ball_point(queries, r=radius, return_length=True)
    tie_rows = np.nonzero(counts > k)[0]
    for i in tie_rows:
        d_all = np.sum((samples - queries[i]) ** 2, axis=1)
        order = np.argsort(d_all, kind="stable")[:k]
        idx[i], sq[i] = order, d_all[order]
    order = np.lexsort((idx, sq), axis=1)
    return np.take_along_axis(idx, order, 1), np.take_along_axis(sq, order, 1)


def interpolate(positions: np.ndarray, values: np.ndarray, floor: PointCloud,
                k: int = DEFAULT_K, sigma: float = DEFAULT_SIGMA) -> DenseAffordanceMap:
    """Gaussian-weighted mean of the k nearest labeled samples at every floor point.

    ``positions`` are sample floor coordinates, (m, 2) or (m, 3); 2-D
    positions are lifted to z = 0. The weights are shifted by the nearest
    neighbor's exponent, which cancels in the ratio and keeps tiny sigmas
    from underflowing to 0/0.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    n = len(floor)
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0 or n == 0:
        return DenseAffordanceMap(np.zeros(n), k, sigma)
    pos = np.asarray(positions, dtype=np.float64)
    if pos.shape[1] == 2:
        pos = np.column_stack([pos, np.zeros(len(pos))])

    idx, sq = knn_indices(pos, floor.points, k)
    w = np.exp(-(sq - sq[:, :1]) / (2.0 * sigma * sigma))
    v = values[idx]
    lo, hi = v.min(axis=1), v.max(axis=1)
    # offsetting by the neighbor minimum makes constant neighborhoods exact
    dense = lo + np.sum(w * (v - lo[:, None]), axis=1) / np.sum(w, axis=1)
    return DenseAffordanceMap(np.clip(dense, lo, hi), k, sigma)


def interpolate_sparse(sparse: SparseAffordance, floor: PointCloud, k: int = DEFAULT_K,
                       sigma: float = DEFAULT_SIGMA) -> DenseAffordanceMap:
    return interpolate(sparse.positions, sparse.values, floor, k, sigma)
