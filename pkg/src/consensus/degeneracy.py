"""Sample and model validation, and dominant-plane (DEGENSAC) detection and recovery."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (DegenerateNormalizationError, EstimationModel, ModelKind, apply_transform,
                   hartley_transform, homogenize, sampson_errors, skew, transfer_errors)
from .solvers import COLLINEAR_EPS, refit_lsq, triangle_area

# Any five of seven points contain one of these triplets.
DEGENSAC_TRIPLETS = ((0, 1, 2), (3, 4, 5), (0, 1, 6), (3, 4, 6), (2, 5, 6))
DEGENSAC_MIN_ON_PLANE = 5
DEGENSAC_RECOVERY_ITERATIONS = 1000  # cap; the loop stops at the usual confidence bound
DEGENSAC_RECOVERY_CONFIDENCE = 0.99
PLANE_REFITS = 10


class DegeneracyReason(str, enum.Enum):
    H_COLLINEAR_SAMPLE = "HCollinearSample"
    H_ORIENTATION_FLIP = "HOrientationFlip"
    ORIENTED_EPIPOLAR_FAIL = "OrientedEpipolarFail"
    F_DOMINANT_PLANE = "FDominantPlane"


@dataclass(frozen=True)
class DegeneracyReport:
    degenerate: bool
    reason: Optional[DegeneracyReason] = None
    recovered_model: Optional[EstimationModel] = None
    plane_homography: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.recovered_model is not None and not self.degenerate:
            raise ValueError("only a degenerate model can carry a recovered model")


# -- homography samples --------------------------------------------------------

def _orientation(p: np.ndarray, i: int, j: int, k: int) -> float:
    return (p[j, 0] - p[i, 0]) * (p[k, 1] - p[i, 1]) - (p[j, 1] - p[i, 1]) * (p[k, 0] - p[i, 0])


def h_sample_defect(pts1, pts2) -> Optional[DegeneracyReason]:
    pts1 = np.asarray(pts1, dtype=float).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=float).reshape(-1, 2)
    try:
        n1 = apply_transform(hartley_transform(pts1), pts1)
        n2 = apply_transform(hartley_transform(pts2), pts2)
    except DegenerateNormalizationError:
        return DegeneracyReason.H_COLLINEAR_SAMPLE
    triples = list(itertools.combinations(range(pts1.shape[0]), 3))
    for p in (n1, n2):
        if any(triangle_area(p[i], p[j], p[k]) < COLLINEAR_EPS for i, j, k in triples):
            return DegeneracyReason.H_COLLINEAR_SAMPLE
    for i, j, k in triples:
        if np.sign(_orientation(n1, i, j, k)) != np.sign(_orientation(n2, i, j, k)):
            return DegeneracyReason.H_ORIENTATION_FLIP
    return None


def validate_h_sample(pts1, pts2) -> bool:
    """Reject quads with three collinear points or mismatched orientation."""
    return h_sample_defect(pts1, pts2) is None


# -- oriented epipolar constraint -----------------------------------------------

def oriented_epipolar_check(model, pts1, pts2) -> bool:
    """All correspondences must lie on the same side of the epipole.

    The per-point sign is ``(e' x x2) . (F x1)``; ``e'`` spans the left
    nullspace of F. A matrix of rank below two has no epipole and fails.
    """
    F = model.m if isinstance(model, EstimationModel) else np.asarray(model, dtype=float)
    # e' is orthogonal to every column of F; take the best-conditioned column cross product
    (a0, b0, c0), (a1, b1, c1), (a2, b2, c2) = F.T.tolist()
    crosses = ((b0 * c1 - c0 * b1, c0 * a1 - a0 * c1, a0 * b1 - b0 * a1),
               (b0 * c2 - c0 * b2, c0 * a2 - a0 * c2, a0 * b2 - b0 * a2),
               (b1 * c2 - c1 * b2, c1 * a2 - a1 * c2, a1 * b2 - b1 * a2))
    e = max(crosses, key=lambda c: c[0] * c[0] + c[1] * c[1] + c[2] * c[2])
    if not sum(x * x for x in e) > 1e-20 * float(np.sum(F * F)) ** 2:
        return False
    p1 = np.asarray(pts1, dtype=float).reshape(-1, 2)
    p2 = np.asarray(pts2, dtype=float).reshape(-1, 2)
    u, v = p2[:, 0], p2[:, 1]
    # e x (u, v, 1), expanded
    c0, c1, c2 = e[1] - e[2] * v, e[2] * u - e[0], e[0] * v - e[1] * u
    l = p1 @ F[:, :2].T + F[:, 2]
    signs = c0 * l[:, 0] + c1 * l[:, 1] + c2 * l[:, 2]
    return bool(np.all(signs >= 0) or np.all(signs <= 0))


# -- DEGENSAC ------------------------------------------------------------------------

def plane_homography(F: np.ndarray, pts1: np.ndarray, pts2: np.ndarray) -> Optional[np.ndarray]:
    """Homography induced by the plane through three correspondences consistent with F."""
    U, s, _ = np.linalg.svd(F)
    e2 = U[:, 2]
    A = skew(e2) @ F
    x1 = homogenize(pts1)
    x2 = homogenize(pts2)
    b = np.empty(3)
    for i in range(3):
        c = np.cross(x2[i], e2)
        nn = c @ c
        if nn < 1e-24:
            return None
        b[i] = np.cross(x2[i], A @ x1[i]) @ c / nn
    try:
        v = np.linalg.solve(x1, b)
    except np.linalg.LinAlgError:
        return None
    H = A - np.outer(e2, v)
    if not np.all(np.isfinite(H)) or abs(np.linalg.det(H / np.linalg.norm(H))) < 1e-12:
        return None
    return H


def _msac(residuals: np.ndarray, threshold: float) -> float:
    return float(np.sum(np.minimum(residuals * residuals, threshold * threshold)))


def degensac_check_and_recover(model: EstimationModel, sample: np.ndarray, pts1: np.ndarray,
                               pts2: np.ndarray, threshold: float,
                               h_threshold: Optional[float] = None,
                               rng: Optional[np.random.Generator] = None,
                               iterations: int = DEGENSAC_RECOVERY_ITERATIONS) -> DegeneracyReport:
    """Detect a seven-point F explained by a plane and recover F by plane and parallax.

    ``sample`` indexes the seven correspondences the model was estimated from;
    ``threshold`` is the epipolar (Sampson) threshold, ``h_threshold`` the
    transfer-error threshold of the plane test (default twice ``threshold``).
    """
    if model.kind is not ModelKind.FUNDAMENTAL:
        raise ValueError("DEGENSAC applies to fundamental matrices")
    h_threshold = 2.0 * threshold if h_threshold is None else h_threshold
    rng = np.random.default_rng(0) if rng is None else rng
    sample = np.asarray(sample)
    s1, s2 = pts1[sample], pts2[sample]

    best_H, best_support = None, -1
    for triplet in DEGENSAC_TRIPLETS:
        H = plane_homography(model.m, s1[list(triplet)], s2[list(triplet)])
        if H is None:
            continue
        support = int(np.count_nonzero(transfer_errors(H, s1, s2) < h_threshold))
        if support > best_support:
            best_H, best_support = H, support
    if best_H is None or best_support < DEGENSAC_MIN_ON_PLANE:
        return DegeneracyReport(False)

    H = best_H
    on_plane = transfer_errors(H, pts1, pts2) < h_threshold
    # a homography from three noisy points is rough; refit while the plane grows
    for _ in range(PLANE_REFITS):
        refined = refit_lsq(ModelKind.HOMOGRAPHY, pts1[on_plane], pts2[on_plane])
        if not refined:
            break
        H_ref = refined[0].m
        on_plane_ref = transfer_errors(H_ref, pts1, pts2) < h_threshold
        if np.count_nonzero(on_plane_ref) <= np.count_nonzero(on_plane):
            break
        H, on_plane = H_ref, on_plane_ref
    off_plane = np.flatnonzero(~on_plane)
    if off_plane.size < 2:
        return DegeneracyReport(True, DegeneracyReason.F_DOMINANT_PLANE, plane_homography=H)

    base_cost = _msac(sampson_errors(model.m, pts1, pts2), threshold)
    best_cost, best_F = base_cost, None
    Hx1 = homogenize(pts1[off_plane]) @ H.T
    x2 = homogenize(pts2[off_plane])
    log_miss = np.log(1.0 - DEGENSAC_RECOVERY_CONFIDENCE)
    needed = iterations
    for k in range(iterations):
        if k >= needed:
            break
        i, j = rng.choice(off_plane.size, size=2, replace=False)
        e2 = np.cross(np.cross(Hx1[i], x2[i]), np.cross(Hx1[j], x2[j]))
        if not np.linalg.norm(e2) > 0:
            continue
        F = skew(e2) @ H
        norm = np.linalg.norm(F)
        if not norm > 0:
            continue
        F = F / norm
        res = sampson_errors(F, pts1, pts2)
        cost = _msac(res, threshold)
        if cost < best_cost:
            best_cost, best_F = cost, F
            # parallax pairs drawn so far suffice once an all-inlier pair was likely seen
            ratio = np.count_nonzero(res[off_plane] < threshold) / off_plane.size
            if ratio >= 1.0:
                needed = k + 1
            elif ratio > 0.0:
                needed = min(iterations, int(np.ceil(log_miss / np.log1p(-ratio * ratio))))
    recovered = None if best_F is None else EstimationModel(ModelKind.FUNDAMENTAL, best_F)
    return DegeneracyReport(True, DegeneracyReason.F_DOMINANT_PLANE, recovered, H)
