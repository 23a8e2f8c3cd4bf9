"""Synthetic two-view scenes with known geometry and inlier labels."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from ..core import CorrespondenceSet, EstimationModel, Intrinsics, ModelKind, skew

MAX_ATTEMPTS = 100


@dataclass
class SyntheticSceneSpec:
    kind: ModelKind = ModelKind.FUNDAMENTAL
    n_points: int = 1000
    inlier_ratio: float = 0.5
    noise_px: float = 0.5
    image_size: tuple = (1000.0, 750.0)
    mode: str = "global"              # "global" or "clustered"
    clusters: int = 4
    cluster_spread: float = 0.04      # blob std as a fraction of the image width
    plane_fraction: float = 0.0       # share of inliers on one plane (F/E scenes)
    max_rotation_deg: float = 15.0
    baseline: tuple = (0.3, 1.0)
    depth: tuple = (4.0, 12.0)
    focal: Optional[float] = None     # default: image width
    with_quality: bool = False
    seed: int = 0

    def __post_init__(self):
        self.kind = ModelKind.parse(self.kind)
        self.image_size = tuple(float(v) for v in self.image_size)
        self.baseline = tuple(float(v) for v in self.baseline)
        self.depth = tuple(float(v) for v in self.depth)
        if not 0 < self.inlier_ratio <= 1:
            raise ValueError(f"inlier ratio must lie in (0, 1], got {self.inlier_ratio}")
        if self.noise_px < 0:
            raise ValueError("noise must be nonnegative")
        if self.mode not in ("global", "clustered"):
            raise ValueError(f"unknown localization mode {self.mode!r}")
        if not 0 <= self.plane_fraction <= 1:
            raise ValueError("plane fraction must lie in [0, 1]")
        if self.n_points < self.kind.minimal_sample_size:
            raise ValueError("too few points for the model kind")
        if self.clusters < 1:
            raise ValueError("need at least one cluster")

    @property
    def inlier_count(self) -> int:
        return int(round(self.inlier_ratio * self.n_points))


@dataclass
class SyntheticProblem:
    data: CorrespondenceSet
    gt_model: EstimationModel
    gt_mask: np.ndarray
    intrinsics: Optional[Intrinsics] = None
    clean_pts1: np.ndarray = field(default=None, repr=False)
    clean_pts2: np.ndarray = field(default=None, repr=False)
    plane_mask: np.ndarray = field(default=None, repr=False)  # inliers on the dominant plane
    spec: Optional[SyntheticSceneSpec] = None


def _camera(spec: SyntheticSceneSpec) -> np.ndarray:
    w, h = spec.image_size
    f = w if spec.focal is None else spec.focal
    return np.array([[f, 0.0, w / 2.0], [0.0, f, h / 2.0], [0.0, 0.0, 1.0]])


def _pose(spec: SyntheticSceneSpec, rng: np.random.Generator):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rng.uniform(0.25, 1.0) * spec.max_rotation_deg)
    R = Rotation.from_rotvec(angle * axis).as_matrix()
    direction = rng.normal(size=3)
    direction[2] *= 0.3  # mostly sideways motion
    direction /= np.linalg.norm(direction)
    t = rng.uniform(*spec.baseline) * direction
    return R, t


def _pixels(spec: SyntheticSceneSpec, rng: np.random.Generator, n: int, centers) -> np.ndarray:
    w, h = spec.image_size
    if centers is None:
        return rng.uniform([0.0, 0.0], [w, h], size=(n, 2))
    which = rng.integers(len(centers), size=n)
    return centers[which] + rng.normal(scale=spec.cluster_spread * w, size=(n, 2))


def _inside(pts: np.ndarray, size) -> np.ndarray:
    return (pts[:, 0] >= 0) & (pts[:, 0] < size[0]) & (pts[:, 1] >= 0) & (pts[:, 1] < size[1])


def _project(K, X):
    x = X @ K.T
    return x[:, :2] / x[:, 2:3]


def _plane(spec: SyntheticSceneSpec, rng: np.random.Generator):
    normal = np.array([0.0, 0.0, 1.0]) + 0.3 * rng.normal(size=3)
    normal /= np.linalg.norm(normal)
    d = np.mean(spec.depth) * normal[2]
    return normal, d  # points X with normal . X = d


def _backproject(K_inv, px, depth=None, plane=None):
    rays = np.column_stack([px, np.ones(len(px))]) @ K_inv.T
    if plane is not None:
        normal, d = plane
        depth = d / (rays @ normal)
    return rays * depth[:, None]


def generate_synthetic(spec: SyntheticSceneSpec) -> SyntheticProblem:
    """Draw a random scene: correspondences, ground-truth model and inlier mask."""
    rng = np.random.default_rng(spec.seed)
    K = _camera(spec)
    K_inv = np.linalg.inv(K)
    w, h = spec.image_size
    n_in = spec.inlier_count
    centers = None
    if spec.mode == "clustered":
        margin = 0.15
        centers = rng.uniform([margin * w, margin * h], [(1 - margin) * w, (1 - margin) * h],
                              size=(spec.clusters, 2))

    for _ in range(MAX_ATTEMPTS):
        R, t = _pose(spec, rng)
        if spec.kind is ModelKind.HOMOGRAPHY:
            plane = _plane(spec, rng)
            n_plane, n_free = n_in, 0
        else:
            plane = _plane(spec, rng) if spec.plane_fraction > 0 else None
            n_plane = int(round(spec.plane_fraction * n_in))
            n_free = n_in - n_plane
        pts1, pts2 = [], []
        for count, on_plane in ((n_plane, True), (n_free, False)):
            got, tries = 0, 0
            while got < count and tries < MAX_ATTEMPTS:
                tries += 1
                px = _pixels(spec, rng, 2 * (count - got) + 16, centers)
                px = px[_inside(px, spec.image_size)]
                if on_plane:
                    X = _backproject(K_inv, px, plane=plane)
                else:
                    X = _backproject(K_inv, px, depth=rng.uniform(*spec.depth, size=len(px)))
                X2 = X @ R.T + t
                ok = (X[:, 2] > 0.1) & (X2[:, 2] > 0.1)
                q = np.full((len(px), 2), -1.0)
                q[ok] = _project(K, X2[ok])
                ok &= _inside(q, spec.image_size)
                take = np.flatnonzero(ok)[: count - got]
                pts1.append(px[take])
                pts2.append(q[take])
                got += take.size
            if got < count:
                break
        else:
            break
    else:
        raise ValueError("infeasible scene: could not place enough visible inliers")

    clean1 = np.concatenate(pts1) if pts1 else np.empty((0, 2))
    clean2 = np.concatenate(pts2) if pts2 else np.empty((0, 2))
    if spec.kind is ModelKind.HOMOGRAPHY:
        normal, d = plane
        G = K @ (R + np.outer(t, normal) / d) @ K_inv
        gt = EstimationModel(ModelKind.HOMOGRAPHY, G)
    else:
        E = skew(t) @ R
        if spec.kind is ModelKind.ESSENTIAL:
            gt = EstimationModel(ModelKind.ESSENTIAL, E)
        else:
            gt = EstimationModel(ModelKind.FUNDAMENTAL, K_inv.T @ E @ K_inv)

    n_out = spec.n_points - n_in
    noisy1 = clean1 + rng.normal(scale=spec.noise_px, size=clean1.shape)
    noisy2 = clean2 + rng.normal(scale=spec.noise_px, size=clean2.shape)
    out1 = rng.uniform([0.0, 0.0], [w, h], size=(n_out, 2))
    out2 = rng.uniform([0.0, 0.0], [w, h], size=(n_out, 2))
    perm = rng.permutation(spec.n_points)
    all1 = np.concatenate([noisy1, out1])[perm]
    all2 = np.concatenate([noisy2, out2])[perm]
    mask = np.concatenate([np.ones(n_in, bool), np.zeros(n_out, bool)])[perm]
    plane_mask = (np.arange(spec.n_points) < n_plane)[perm]
    quality = None
    if spec.with_quality:
        quality = np.where(mask, 1.0, 0.0) + rng.normal(scale=0.5, size=spec.n_points)
    data = CorrespondenceSet(all1, all2, spec.image_size, spec.image_size, quality)
    inv = np.argsort(perm)
    clean_all1 = np.full((spec.n_points, 2), np.nan)
    clean_all2 = np.full((spec.n_points, 2), np.nan)
    clean_all1[inv[:n_in]] = clean1
    clean_all2[inv[:n_in]] = clean2
    intrinsics = Intrinsics(K, K) if spec.kind is ModelKind.ESSENTIAL else None
    return SyntheticProblem(data, gt, mask, intrinsics, clean_all1, clean_all2, plane_mask, spec)
