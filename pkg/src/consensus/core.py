"""Domain types, coordinate normalization and residual functions.

Residuals are distances (never squared) so thresholds can be given in pixels.
Every vectorized residual takes ``(N, 2)`` point arrays and returns an ``(N,)``
array; a non-computable residual is reported as ``+inf`` and simply scores
as an outlier.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

FLAGGED_INF = math.inf

_DENOM_EPS = 1e-15
_W_EPS = 1e-12
_DET_EPS = 1e-12


class ModelKind(str, enum.Enum):
    HOMOGRAPHY = "homography"
    FUNDAMENTAL = "fundamental"
    ESSENTIAL = "essential"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        aliases = {"h": cls.HOMOGRAPHY, "f": cls.FUNDAMENTAL, "e": cls.ESSENTIAL}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        return cls(key)

    @property
    def minimal_sample_size(self) -> int:
        return {"homography": 4, "fundamental": 7, "essential": 5}[self.value]

    @property
    def non_minimal_sample_size(self) -> int:
        return {"homography": 4, "fundamental": 8, "essential": 8}[self.value]


class DegenerateNormalizationError(ValueError):
    pass


class NonInvertibleHomographyError(ValueError):
    pass


class ModelKindError(TypeError):
    """Raised when a residual is requested for a model of the wrong kind."""


@dataclass(frozen=True)
class Correspondence:
    x1: float
    y1: float
    x2: float
    y2: float
    prior_quality: Optional[float] = None

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x1, self.y1, self.x2, self.y2)):
            raise ValueError("correspondence coordinates must be finite")
        if self.prior_quality is not None and not math.isfinite(self.prior_quality):
            raise ValueError("prior quality must be finite")

    def swapped(self) -> "Correspondence":
        return Correspondence(self.x2, self.y2, self.x1, self.y1, self.prior_quality)


class CorrespondenceSet:
    """Matched points stored column-wise as numpy arrays.

    ``pts1`` and ``pts2`` are ``(N, 2)`` float arrays, ``quality`` is an
    optional ``(N,)`` array of a-priori scores (higher means more likely an
    inlier).
    """

    def __init__(self, pts1, pts2, image1_size=(1.0, 1.0), image2_size=None, quality=None):
        pts1 = np.array(pts1, dtype=float).reshape(-1, 2)
        pts2 = np.array(pts2, dtype=float).reshape(-1, 2)
        if pts1.shape != pts2.shape:
            raise ValueError(f"point arrays differ in shape: {pts1.shape} vs {pts2.shape}")
        if not (np.all(np.isfinite(pts1)) and np.all(np.isfinite(pts2))):
            raise ValueError("correspondence coordinates must be finite")
        image2_size = image1_size if image2_size is None else image2_size
        for size in (image1_size, image2_size):
            if len(size) != 2 or min(size) <= 0:
                raise ValueError(f"image size must be a positive (width, height), got {size}")
        if quality is not None:
            quality = np.array(quality, dtype=float).reshape(-1)
            if quality.shape[0] != pts1.shape[0]:
                raise ValueError("quality length must match the number of correspondences")
            if not np.all(np.isfinite(quality)):
                raise ValueError("prior quality must be finite")
        self.pts1 = pts1
        self.pts2 = pts2
        self.quality = quality
        self.image1_size = (float(image1_size[0]), float(image1_size[1]))
        self.image2_size = (float(image2_size[0]), float(image2_size[1]))
        for arr in (self.pts1, self.pts2, self.quality):
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def from_correspondences(cls, items: Iterable[Correspondence], image1_size=(1.0, 1.0),
                             image2_size=None) -> "CorrespondenceSet":
        items = list(items)
        pts1 = [(c.x1, c.y1) for c in items]
        pts2 = [(c.x2, c.y2) for c in items]
        quality = None
        if items and all(c.prior_quality is not None for c in items):
            quality = [c.prior_quality for c in items]
        return cls(pts1, pts2, image1_size, image2_size, quality)

    def __len__(self) -> int:
        return self.pts1.shape[0]

    def __getitem__(self, i: int) -> Correspondence:
        q = None if self.quality is None else float(self.quality[i])
        return Correspondence(*self.pts1[i], *self.pts2[i], prior_quality=q)

    @property
    def items(self) -> list[Correspondence]:
        return [self[i] for i in range(len(self))]

    def subset(self, indices) -> "CorrespondenceSet":
        indices = np.asarray(indices)
        quality = None if self.quality is None else self.quality[indices]
        return CorrespondenceSet(self.pts1[indices], self.pts2[indices],
                                 self.image1_size, self.image2_size, quality)

    @property
    def diagonal(self) -> float:
        """Diagonal of the larger image, in pixels."""
        return max(math.hypot(*self.image1_size), math.hypot(*self.image2_size))

    def validate_for(self, kind: ModelKind) -> None:
        if len(self) < kind.minimal_sample_size:
            raise ValueError(
                f"{kind.value} estimation needs at least {kind.minimal_sample_size} "
                f"correspondences, got {len(self)}")


@dataclass(frozen=True)
class EstimationModel:
    """A 3x3 model matrix stored at unit Frobenius norm."""

    kind: ModelKind
    m: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.m, dtype=float).reshape(3, 3)
        norm = np.linalg.norm(m)
        if norm > 0 and np.isfinite(norm):
            m = m / norm
        m.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))

    def __repr__(self):
        return f"EstimationModel({self.kind.value}, {np.array2string(self.m, precision=4)})"


@dataclass(frozen=True)
class Intrinsics:
    K1: np.ndarray
    K2: np.ndarray

    def __post_init__(self):
        for name in ("K1", "K2"):
            K = np.array(getattr(self, name), dtype=float).reshape(3, 3)
            if not np.allclose(K[2], [0, 0, 1]) or K[0, 0] <= 0 or K[1, 1] <= 0:
                raise ValueError(f"{name} must be upper triangular with positive focal lengths")
            if abs(K[1, 0]) > 0 or abs(K[2, 0]) > 0 or abs(K[2, 1]) > 0:
                raise ValueError(f"{name} must be upper triangular")
            K.setflags(write=False)
            object.__setattr__(self, name, K)

    @property
    def mean_focal(self) -> float:
        return float(np.mean([self.K1[0, 0], self.K1[1, 1], self.K2[0, 0], self.K2[1, 1]]))

    def normalize(self, data: CorrespondenceSet) -> CorrespondenceSet:
        """Map pixel coordinates to calibrated coordinates (multiply by K^-1)."""
        return CorrespondenceSet(apply_transform(np.linalg.inv(self.K1), data.pts1),
                                 apply_transform(np.linalg.inv(self.K2), data.pts2),
                                 data.image1_size, data.image2_size, data.quality)


# -- homogeneous helpers -------------------------------------------------------

def homogenize(pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    out = np.ones((pts.shape[0], 3))
    out[:, :2] = pts
    return out


def apply_transform(T: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply a 3x3 projective transform to ``(N, 2)`` points."""
    h = homogenize(pts) @ np.asarray(T, dtype=float).T
    with np.errstate(divide="ignore", invalid="ignore"):
        return h[:, :2] / h[:, 2:3]


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float).ravel()
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


# -- normalization ---------------------------------------------------------------

def hartley_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean radius sqrt(2)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise DegenerateNormalizationError("degenerate normalization: no points")
    centroid = pts.sum(axis=0) / pts.shape[0]
    d = pts - centroid
    mean_dist = float(np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]).sum()) / pts.shape[0]
    if not mean_dist > 1e-12 * max(1.0, float(np.abs(centroid).max())):
        raise DegenerateNormalizationError("degenerate normalization")
    s = math.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * centroid[0]],
                     [0.0, s, -s * centroid[1]],
                     [0.0, 0.0, 1.0]])


def normalize_points(data: CorrespondenceSet):
    """Hartley-normalize both images.

    Returns ``(normalized_set, T1, T2)``; a model fitted in the normalized frame
    maps back as ``H = inv(T2) @ Hn @ T1`` or ``F = T2.T @ Fn @ T1``.
    """
    if len(data) == 0:
        raise DegenerateNormalizationError("degenerate normalization: empty set")
    T1 = hartley_transform(data.pts1)
    T2 = hartley_transform(data.pts2)
    normalized = CorrespondenceSet(apply_transform(T1, data.pts1), apply_transform(T2, data.pts2),
                                   data.image1_size, data.image2_size, data.quality)
    return normalized, T1, T2


# -- residuals -------------------------------------------------------------------

def _as_matrix(model, allowed: Sequence[ModelKind]) -> np.ndarray:
    if isinstance(model, EstimationModel):
        if model.kind not in allowed:
            raise ModelKindError(
                f"residual needs a model of kind {[k.value for k in allowed]}, got {model.kind.value}")
        return model.m
    return np.asarray(model, dtype=float).reshape(3, 3)


def sampson_errors(F, pts1: np.ndarray, pts2: np.ndarray) -> np.ndarray:
    """Sampson distance of each correspondence to an epipolar model."""
    F = _as_matrix(F, (ModelKind.FUNDAMENTAL, ModelKind.ESSENTIAL))
    x1 = homogenize(pts1)
    x2 = homogenize(pts2)
    Fx1 = x1 @ F.T
    Ftx2 = x2 @ F
    num = np.einsum("ij,ij->i", x2, Fx1)
    den = Fx1[:, 0] ** 2 + Fx1[:, 1] ** 2 + Ftx2[:, 0] ** 2 + Ftx2[:, 1] ** 2
    out = np.empty(num.shape[0])
    ok = den >= _DENOM_EPS
    out[ok] = np.abs(num[ok]) / np.sqrt(den[ok])
    bad = ~ok
    out[bad] = np.where(num[bad] != 0.0, FLAGGED_INF, 0.0)
    return out


def sampson_distance(model: EstimationModel, c: Correspondence) -> float:
    return float(sampson_errors(model, [(c.x1, c.y1)], [(c.x2, c.y2)])[0])


def _point_line_distances(pts_h: np.ndarray, lines: np.ndarray) -> np.ndarray:
    norm = np.hypot(lines[:, 0], lines[:, 1])
    num = np.abs(np.einsum("ij,ij->i", pts_h, lines))
    out = np.full(num.shape[0], FLAGGED_INF)
    ok = norm >= _W_EPS
    out[ok] = num[ok] / norm[ok]
    return out


def sgd_errors(E, pts1: np.ndarray, pts2: np.ndarray) -> np.ndarray:
    """Symmetric geometric distance: root of the summed squared point-line distances."""
    E = _as_matrix(E, (ModelKind.ESSENTIAL, ModelKind.FUNDAMENTAL))
    x1 = homogenize(pts1)
    x2 = homogenize(pts2)
    d2 = _point_line_distances(x2, x1 @ E.T)
    d1 = _point_line_distances(x1, x2 @ E)
    return np.sqrt(d1 ** 2 + d2 ** 2)


def sgd_distance(model: EstimationModel, c: Correspondence) -> float:
    if model.kind is not ModelKind.ESSENTIAL:
        raise ModelKindError(f"SGD needs an essential matrix, got {model.kind.value}")
    return float(sgd_errors(model, [(c.x1, c.y1)], [(c.x2, c.y2)])[0])


def _project(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    h = pts @ H[:, :2].T + H[:, 2]
    w = h[:, 2:3]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = h[:, :2] / w
    bad = np.abs(w[:, 0]) < _W_EPS
    if bad.any():
        out[bad] = np.nan
    return out


def transfer_errors(H, pts1: np.ndarray, pts2: np.ndarray, H_inv: Optional[np.ndarray] = None) -> np.ndarray:
    """Symmetric transfer error, RMS of forward and backward reprojection."""
    H = _as_matrix(H, (ModelKind.HOMOGRAPHY,))
    if H_inv is None:
        if not abs(np.linalg.det(H)) > _DET_EPS:
            raise NonInvertibleHomographyError("non-invertible homography")
        H_inv = np.linalg.inv(H)
    pts1 = np.asarray(pts1, dtype=float).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=float).reshape(-1, 2)
    d = _project(H, pts1) - pts2
    d *= d
    b = _project(H_inv, pts2) - pts1
    b *= b
    out = np.sqrt(0.5 * (d.sum(axis=1) + b.sum(axis=1)))
    out[np.isnan(out)] = FLAGGED_INF
    return out


def h_transfer_error(model: EstimationModel, c: Correspondence) -> float:
    return float(transfer_errors(model, [(c.x1, c.y1)], [(c.x2, c.y2)])[0])


def model_residuals(model: EstimationModel, pts1: np.ndarray, pts2: np.ndarray) -> np.ndarray:
    """Residual used for scoring: transfer error for H, Sampson for F and E."""
    if model.kind is ModelKind.HOMOGRAPHY:
        return transfer_errors(model, pts1, pts2)
    return sampson_errors(model, pts1, pts2)


class ResidualFunction:
    """Residual evaluator bound to one model, reusable over point subsets.

    Caches the inverse homography so chunked evaluation (SPRT) does not
    re-invert per chunk.
    """

    def __init__(self, model: EstimationModel, pts1: np.ndarray, pts2: np.ndarray):
        self.model = model
        self.pts1 = pts1
        self.pts2 = pts2
        self._h_inv = None
        if model.kind is ModelKind.HOMOGRAPHY:
            if not abs(np.linalg.det(model.m)) > _DET_EPS:
                raise NonInvertibleHomographyError("non-invertible homography")
            self._h_inv = np.linalg.inv(model.m)

    def __call__(self, idx=None) -> np.ndarray:
        p1 = self.pts1 if idx is None else self.pts1[idx]
        p2 = self.pts2 if idx is None else self.pts2[idx]
        if self._h_inv is not None:
            return transfer_errors(self.model.m, p1, p2, H_inv=self._h_inv)
        return sampson_errors(self.model.m, p1, p2)
