"""Accuracy of an estimation run against ground-truth inliers."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..core import (CorrespondenceSet, Intrinsics, ModelKind, NonInvertibleHomographyError,
                    sampson_errors, sgd_errors, transfer_errors)

FAILURE_FRACTION = 0.01


def failure_threshold(data: CorrespondenceSet, kind, intrinsics: Optional[Intrinsics] = None) -> float:
    """1% of the image diagonal, in the units of the error metric."""
    limit = FAILURE_FRACTION * data.diagonal
    if ModelKind.parse(kind) is ModelKind.ESSENTIAL:
        if intrinsics is None:
            raise ValueError("essential-matrix errors need intrinsics")
        limit /= intrinsics.mean_focal
    return limit


@dataclass
class EvalRecord:
    pair_id: str
    method: str
    error: float
    wall_time_ms: float
    failure_limit: float
    iterations: int = 0
    inlier_count: int = 0
    failed: Optional[bool] = None

    def __post_init__(self):
        expected = not self.error <= self.failure_limit
        if self.failed is None:
            self.failed = expected
        elif bool(self.failed) != expected:
            raise ValueError("failed flag disagrees with the 1%-diagonal rule")

    def as_dict(self) -> dict:
        return asdict(self)


def model_error(kind, model_matrix: np.ndarray, data: CorrespondenceSet, gt_mask: np.ndarray,
                intrinsics: Optional[Intrinsics] = None) -> float:
    """Median Sampson (F), RMSE of transfer error (H), median SGD of calibrated points (E)."""
    kind = ModelKind.parse(kind)
    mask = np.asarray(gt_mask, dtype=bool)
    if not mask.any():
        raise ValueError("no ground-truth inliers to evaluate on")
    if kind is ModelKind.HOMOGRAPHY:
        try:
            r = transfer_errors(model_matrix, data.pts1[mask], data.pts2[mask])
        except NonInvertibleHomographyError:
            return math.inf
        return float(np.sqrt(np.mean(r * r)))
    if kind is ModelKind.FUNDAMENTAL:
        return float(np.median(sampson_errors(model_matrix, data.pts1[mask], data.pts2[mask])))
    if intrinsics is None:
        raise ValueError("essential-matrix errors need intrinsics")
    norm = intrinsics.normalize(data)
    return float(np.median(sgd_errors(model_matrix, norm.pts1[mask], norm.pts2[mask])))


def evaluate_run(result, data: CorrespondenceSet, gt_mask: np.ndarray, kind,
                 intrinsics: Optional[Intrinsics] = None, pair_id: str = "",
                 method: str = "") -> EvalRecord:
    """Score a :class:`RunResult`; a run without a model fails with infinite error."""
    limit = failure_threshold(data, kind, intrinsics)
    if result.best_model is None:
        error = math.inf
    else:
        error = model_error(kind, result.best_model.m, data, gt_mask, intrinsics)
    return EvalRecord(pair_id, method, error, 1000.0 * result.wall_time, limit,
                      result.iterations_used, result.inlier_count)
