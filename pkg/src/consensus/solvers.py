"""Minimal and non-minimal estimators for homographies, fundamental and essential matrices.

All solvers take ``(N, 2)`` arrays of points in image 1 and image 2 and return a
list of :class:`EstimationModel` (possibly empty). Essential-matrix solvers
expect calibrated coordinates (already multiplied by ``K^-1``).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import (DegenerateNormalizationError, EstimationModel, ModelKind,
                   apply_transform, hartley_transform)
from .numerics import TOLERANCES, real_roots

COLLINEAR_EPS = 1e-8


@dataclass(frozen=True)
class SolverSpec:
    kind: ModelKind
    minimal_sample_size: int
    max_models: int


SOLVER_SPECS = {
    ModelKind.HOMOGRAPHY: SolverSpec(ModelKind.HOMOGRAPHY, 4, 1),
    ModelKind.FUNDAMENTAL: SolverSpec(ModelKind.FUNDAMENTAL, 7, 3),
    ModelKind.ESSENTIAL: SolverSpec(ModelKind.ESSENTIAL, 5, 10),
}


def _normalize_pair(pts1, pts2):
    T1 = hartley_transform(pts1)
    T2 = hartley_transform(pts2)
    # similarities: skip the homogeneous division
    return pts1 * T1[0, 0] + T1[:2, 2], pts2 * T2[0, 0] + T2[:2, 2], T1, T2


def _similarity_inverse(T: np.ndarray) -> np.ndarray:
    s = T[0, 0]
    return np.array([[1.0 / s, 0.0, -T[0, 2] / s], [0.0, 1.0 / s, -T[1, 2] / s], [0.0, 0.0, 1.0]])


def _epipolar_rows(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Rows of ``kron(x2, x1)`` so that ``A @ vec(F) = x2^T F x1`` (row-major F)."""
    x1 = np.hstack([p1, np.ones((p1.shape[0], 1))])
    x2 = np.hstack([p2, np.ones((p2.shape[0], 1))])
    return (x2[:, :, None] * x1[:, None, :]).reshape(-1, 9)


def _homography_rows(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    n = p1.shape[0]
    A = np.zeros((n, 2, 9))
    A[:, 0, 0:2] = -p1
    A[:, 0, 2] = -1.0
    A[:, 1, 3:5] = -p1
    A[:, 1, 5] = -1.0
    A[:, :, 6:8] = p2[:, :, None] * p1[:, None, :]
    A[:, :, 8] = p2
    return A.reshape(-1, 9)


def triangle_area(a, b, c) -> float:
    return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


_TRIPLETS: dict = {}


def has_collinear_triplet(pts: np.ndarray, eps: float = COLLINEAR_EPS) -> bool:
    n = pts.shape[0]
    if n < 3:
        return False
    if n not in _TRIPLETS:
        _TRIPLETS[n] = np.array(list(itertools.combinations(range(n), 3))).T
    i, j, k = _TRIPLETS[n]
    a, b, c = pts[i], pts[j], pts[k]
    area = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                        - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    return bool(np.any(area < eps))


# -- homography ------------------------------------------------------------------

def _dlt(pts1, pts2, weights=None):
    try:
        n1, n2, T1, T2 = _normalize_pair(pts1, pts2)
    except DegenerateNormalizationError:
        return None, None, None
    A = _homography_rows(n1, n2)
    if weights is not None:
        A = A * np.repeat(np.sqrt(weights), 2)[:, None]
    _, s, vt = np.linalg.svd(A)
    Hn = vt[-1].reshape(3, 3)
    H = _similarity_inverse(T2) @ Hn @ T1
    return H, (n1, n2), s


_QUAD_TRIPLETS = np.array(list(itertools.combinations(range(4), 3))).T
_SQRT2 = np.sqrt(2.0)


def solve_h_4pt(pts1, pts2) -> list[EstimationModel]:
    """Normalized four-point DLT; empty for samples with three collinear points."""
    pts1 = np.asarray(pts1, dtype=float).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=float).reshape(-1, 2)
    if pts1.shape[0] != 4:
        raise ValueError("the four-point solver needs exactly 4 correspondences")
    # both images at once: centroids, mean radii, normalized points
    P = np.stack([pts1, pts2])
    c = P.sum(axis=1) / 4.0
    d = P - c[:, None, :]
    radius = np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2).sum(axis=1) / 4.0
    if not np.all(radius > 1e-12 * np.maximum(1.0, np.abs(c).max(axis=1))):
        return []
    scale = _SQRT2 / radius
    n = d * scale[:, None, None]
    i, j, k = _QUAD_TRIPLETS
    a, b, e = n[:, i], n[:, j], n[:, k]
    area = 0.5 * np.abs((b[..., 0] - a[..., 0]) * (e[..., 1] - a[..., 1])
                        - (b[..., 1] - a[..., 1]) * (e[..., 0] - a[..., 0]))
    if np.any(area < COLLINEAR_EPS):
        return []
    _, _, vt = np.linalg.svd(_homography_rows(n[0], n[1]))
    Hn = vt[-1].reshape(3, 3)
    T1 = np.array([[scale[0], 0.0, -scale[0] * c[0, 0]], [0.0, scale[0], -scale[0] * c[0, 1]],
                   [0.0, 0.0, 1.0]])
    T2_inv = np.array([[1.0 / scale[1], 0.0, c[1, 0]], [0.0, 1.0 / scale[1], c[1, 1]],
                       [0.0, 0.0, 1.0]])
    H = T2_inv @ Hn @ T1
    if not np.all(np.isfinite(H)):
        return []
    return [EstimationModel(ModelKind.HOMOGRAPHY, H)]


# -- fundamental matrix ----------------------------------------------------------

# Inverse Vandermonde for sampling a cubic at alpha = 0, 1, -1, 2.
_CUBIC_NODES = np.array([0.0, 1.0, -1.0, 2.0])
_CUBIC_VANDER_INV = np.linalg.inv(np.vander(_CUBIC_NODES, 4))


def solve_f_7pt(pts1, pts2) -> list[EstimationModel]:
    """Seven-point algorithm: up to three rank-2 matrices through the sample."""
    pts1 = np.asarray(pts1, dtype=float).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=float).reshape(-1, 2)
    if pts1.shape[0] != 7:
        raise ValueError("the seven-point solver needs exactly 7 correspondences")
    try:
        n1, n2, T1, T2 = _normalize_pair(pts1, pts2)
    except DegenerateNormalizationError:
        return []
    A = _epipolar_rows(n1, n2)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    if s[6] <= TOLERANCES["rank_rel"] * s[0]:
        return []
    F1 = vt[-1].reshape(3, 3)
    F2 = vt[-2].reshape(3, 3)
    D = F1 - F2
    dets = [np.linalg.det(F2 + a * D) for a in _CUBIC_NODES]
    coeffs = _CUBIC_VANDER_INV @ np.array(dets)
    try:
        alphas = real_roots(coeffs)
    except ValueError:
        return []
    models = []
    for a in alphas:
        Fn = F2 + a * D
        F = T2.T @ Fn @ T1
        if np.all(np.isfinite(F)):
            models.append(EstimationModel(ModelKind.FUNDAMENTAL, F))
    return models[:3]


def _linear_epipolar_fit(pts1, pts2, weights=None):
    """Unconstrained normalized 8-point fit; returns (F_pixel, singular values) or None."""
    try:
        n1, n2, T1, T2 = _normalize_pair(pts1, pts2)
    except DegenerateNormalizationError:
        return None
    A = _epipolar_rows(n1, n2)
    if weights is not None:
        A = A * np.sqrt(weights)[:, None]
    if A.shape[0] < 9:
        A = np.vstack([A, np.zeros((9 - A.shape[0], 9))])
    _, s, vt = np.linalg.svd(A)
    # rank below 6 means fewer than ~6 distinct constraints (coincident points)
    if s[5] <= TOLERANCES["rank_rel"] * s[0]:
        return None
    return vt[-1].reshape(3, 3), T1, T2


def enforce_rank2(F: np.ndarray) -> np.ndarray:
    U, s, Vt = np.linalg.svd(F)
    return U @ np.diag([s[0], s[1], 0.0]) @ Vt


def solve_f_8pt(pts1, pts2, weights=None) -> list[EstimationModel]:
    """Normalized eight-point least squares followed by rank-2 projection."""
    pts1 = np.asarray(pts1, dtype=float).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=float).reshape(-1, 2)
    if pts1.shape[0] < 8:
        raise ValueError("the eight-point solver needs at least 8 correspondences")
    fit = _linear_epipolar_fit(pts1, pts2, weights)
    if fit is None:
        return []
    Fn, T1, T2 = fit
    F = enforce_rank2(T2.T @ enforce_rank2(Fn) @ T1)
    if not np.all(np.isfinite(F)):
        return []
    return [EstimationModel(ModelKind.FUNDAMENTAL, F)]


# -- essential matrix ------------------------------------------------------------

def _build_monomial_map():
    # Ordered triples (a, b, c) over variables (x, y, z, 1) -> index of the cubic
    # monomial; the first ten columns are the true cubics, the last ten form the
    # quotient-ring basis [x^2, xy, xz, y^2, yz, z^2, x, y, z, 1].
    monomials = [(0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 1, 1), (0, 1, 2), (0, 2, 2),
                 (1, 1, 1), (1, 1, 2), (1, 2, 2), (2, 2, 2),
                 (0, 0, 3), (0, 1, 3), (0, 2, 3), (1, 1, 3), (1, 2, 3), (2, 2, 3),
                 (0, 3, 3), (1, 3, 3), (2, 3, 3), (3, 3, 3)]
    index = {m: i for i, m in enumerate(monomials)}
    S = np.zeros((64, 20))
    for row, triple in enumerate(itertools.product(range(4), repeat=3)):
        S[row, index[tuple(sorted(triple))]] = 1.0
    return S


_MONOMIAL_MAP = _build_monomial_map()
_LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in itertools.permutations(range(3)):
    _LEVI_CIVITA[_i, _j, _k] = np.linalg.det(np.eye(3)[[_i, _j, _k]])


def essential_constraint_matrix(basis: np.ndarray) -> np.ndarray:
    """10x20 coefficients of ``det(E) = 0`` and ``2 E E^T E - tr(E E^T) E = 0``.

    ``basis`` holds four 3x3 matrices; ``E = x*B0 + y*B1 + z*B2 + B3``.
    """
    B = basis.reshape(4, 3, 3)
    det_t = np.einsum("ijk,ai,bj,ck->abc", _LEVI_CIVITA, B[:, 0], B[:, 1], B[:, 2])
    P = np.einsum("aij,bkj->abik", B, B)
    EEtE = np.einsum("abik,ckl->abcil", P, B)
    tr = np.einsum("aij,bij->ab", B, B)
    T = 2.0 * EEtE - tr[:, :, None, None, None] * B[None, None, :, :, :]
    rows = np.concatenate([T.reshape(64, 9).T, det_t.reshape(1, 64)], axis=0)
    return rows @ _MONOMIAL_MAP


def solve_e_5pt(pts1, pts2) -> list[EstimationModel]:
    """Five-point essential matrix solver (Groebner basis / action matrix).

    Returns at most ten real solutions.
    """
    pts1 = np.asarray(pts1, dtype=float).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=float).reshape(-1, 2)
    if pts1.shape[0] != 5:
        raise ValueError("the five-point solver needs exactly 5 correspondences")
    A = _epipolar_rows(pts1, pts2)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    if s[4] <= TOLERANCES["rank_rel"] * s[0]:
        return []
    basis = vt[5:9]
    M = essential_constraint_matrix(basis)
    lead = M[:, :10]
    if np.linalg.cond(lead) > 1e12:
        return []
    try:
        G = np.linalg.solve(lead, M[:, 10:])
    except np.linalg.LinAlgError:
        return []
    action = np.zeros((10, 10))
    action[:6] = -G[:6]
    action[6, 0] = action[7, 1] = action[8, 2] = action[9, 6] = 1.0
    eigvals, eigvecs = np.linalg.eig(action)
    models = []
    for lam, v in zip(eigvals, eigvecs.T):
        if abs(lam.imag) > TOLERANCES["root_imag_rel"] * max(1.0, abs(lam)):
            continue
        v = v.real
        if abs(v[9]) < 1e-12 * np.abs(v).max():
            continue
        x, y, z = v[6] / v[9], v[7] / v[9], v[8] / v[9]
        E = (x * basis[0] + y * basis[1] + z * basis[2] + basis[3]).reshape(3, 3)
        if np.all(np.isfinite(E)):
            models.append(EstimationModel(ModelKind.ESSENTIAL, E))
    return models[:10]


def project_to_essential(M: np.ndarray) -> np.ndarray:
    """Closest matrix with singular values (s, s, 0), s the mean of the top two."""
    U, s, Vt = np.linalg.svd(np.asarray(M, dtype=float).reshape(3, 3))
    sigma = 0.5 * (s[0] + s[1])
    return U @ np.diag([sigma, sigma, 0.0]) @ Vt


# -- non-minimal refit -------------------------------------------------------------

def refit_lsq(kind, pts1, pts2, weights=None) -> list[EstimationModel]:
    """Least-squares fit on all given (inlier) points, optionally weighted."""
    kind = ModelKind.parse(kind)
    pts1 = np.asarray(pts1, dtype=float).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=float).reshape(-1, 2)
    if pts1.shape[0] < kind.non_minimal_sample_size:
        return []
    if weights is not None:
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if weights.shape[0] != pts1.shape[0] or np.any(weights < 0):
            raise ValueError("weights must be nonnegative, one per correspondence")
        if np.count_nonzero(weights) < kind.non_minimal_sample_size:
            return []
    if kind is ModelKind.HOMOGRAPHY:
        H, _, s = _dlt(pts1, pts2, weights)
        if H is None or s[7] <= TOLERANCES["rank_rel"] * s[0] or not np.all(np.isfinite(H)):
            return []
        return [EstimationModel(kind, H)]
    if kind is ModelKind.FUNDAMENTAL:
        return solve_f_8pt(pts1, pts2, weights)
    fit = _linear_epipolar_fit(pts1, pts2, weights)
    if fit is None:
        return []
    En, T1, T2 = fit
    E = project_to_essential(T2.T @ En @ T1)
    if not np.all(np.isfinite(E)):
        return []
    return [EstimationModel(kind, E)]


MINIMAL_SOLVERS = {
    ModelKind.HOMOGRAPHY: solve_h_4pt,
    ModelKind.FUNDAMENTAL: solve_f_7pt,
    ModelKind.ESSENTIAL: solve_e_5pt,
}
