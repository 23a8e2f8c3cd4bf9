"""Small dense linear algebra and real polynomial roots for the minimal solvers."""
from __future__ import annotations

import math

import numpy as np

TOLERANCES = {
    # singular values below rank_rel * s_max count as zero
    "rank_rel": 1e-10,
    # |p(r)| must stay below root_residual_rel * max|coeff|
    "root_residual_rel": 1e-6,
    "root_merge": 1e-9,
    "leading_coeff": 1e-14,
    # eigenvalues of the companion matrix with a larger imaginary part are complex
    "root_imag_rel": 1e-6,
    "lsq_condition": 1e8,
}


def nullspace(A, dim: int = 1):
    """Orthonormal basis of the (right) nullspace of ``A``.

    Returns ``(vectors, rank_deficient)`` where ``vectors`` has shape
    ``(k, n)``. Normally ``k == dim``; when the numerical nullspace is larger
    than requested every null vector is returned and ``rank_deficient`` is set.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    if dim < 1 or dim > n:
        raise ValueError(f"nullspace dimension must be in [1, {n}], got {dim}")
    if m < n:
        A_full = np.vstack([A, np.zeros((n - m, n))])
    else:
        A_full = A
    _, s, vt = np.linalg.svd(A_full)
    s_max = s[0] if s.size else 0.0
    rank = int(np.sum(s > TOLERANCES["rank_rel"] * s_max)) if s_max > 0 else 0
    null_dim = n - rank
    if null_dim > dim:
        return vt[rank:].copy(), True
    return vt[n - dim:].copy(), False


def _trim(coeffs) -> np.ndarray:
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        raise ValueError("identically zero polynomial")
    nz = np.nonzero(np.abs(c) > TOLERANCES["leading_coeff"] * scale)[0]
    return c[nz[0]:]


def _horner(c, x: float) -> float:
    acc = 0.0
    for a in c:
        acc = acc * x + a
    return acc


def _polish(c: np.ndarray, r: float, steps: int = 2) -> float:
    c = [float(a) for a in c]
    deg = len(c) - 1
    dc = [a * (deg - i) for i, a in enumerate(c[:-1])]
    best, best_val = float(r), abs(_horner(c, r))
    for _ in range(steps):
        d = _horner(dc, best)
        if d == 0.0:
            break
        cand = best - _horner(c, best) / d
        val = abs(_horner(c, cand))
        if not val < best_val:
            break
        best, best_val = cand, val
    return best


def _cubic_roots(c: np.ndarray) -> list[float]:
    a, b, cc = c[1] / c[0], c[2] / c[0], c[3] / c[0]
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + cc
    shift = -a / 3.0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    scale = (q / 2.0) ** 2 + abs(p / 3.0) ** 3
    if abs(disc) <= 1e-14 * scale or scale == 0.0:
        if abs(p) <= 1e-14 * max(1.0, abs(a) ** 2):
            return [shift]
        return [3.0 * q / p + shift, -1.5 * q / p + shift]
    if disc > 0:
        sq = math.sqrt(disc)
        t = np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq)
        return [float(t) + shift]
    rho = 2.0 * math.sqrt(-p / 3.0)
    arg = max(-1.0, min(1.0, (3.0 * q / (2.0 * p)) * math.sqrt(-3.0 / p)))
    phi = math.acos(arg) / 3.0
    return [rho * math.cos(phi - 2.0 * math.pi * k / 3.0) + shift for k in range(3)]


def real_roots(coeffs) -> list[float]:
    """Real roots of a polynomial given highest-degree coefficient first.

    Degrees up to 3 use closed forms, higher degrees the companion-matrix
    eigenvalues; every root gets Newton polishing and near-duplicates are merged.
    """
    c = _trim(coeffs)
    deg = c.size - 1
    if deg == 0:
        return []
    if deg == 1:
        roots = [-c[1] / c[0]]
    elif deg == 2:
        a, b, cc = c
        disc = b * b - 4 * a * cc
        if disc < -1e-14 * max(b * b, abs(4 * a * cc)):
            return []
        sq = math.sqrt(max(disc, 0.0))
        qv = -0.5 * (b + math.copysign(sq, b))
        roots = [qv / a] if qv == 0.0 else [qv / a, cc / qv]
    elif deg == 3:
        roots = _cubic_roots(c)
    else:
        companion = np.zeros((deg, deg))
        companion[0] = -c[1:] / c[0]
        companion[1:, :-1] = np.eye(deg - 1)
        eig = np.linalg.eigvals(companion)
        keep = np.abs(eig.imag) <= TOLERANCES["root_imag_rel"] * np.maximum(1.0, np.abs(eig))
        roots = list(eig.real[keep])

    limit = TOLERANCES["root_residual_rel"] * np.max(np.abs(c))
    out: list[float] = []
    for r in sorted(_polish(c, float(r)) for r in roots):
        if abs(np.polyval(c, r)) > limit:
            continue
        if out and abs(r - out[-1]) <= TOLERANCES["root_merge"] * max(1.0, abs(r)):
            continue
        out.append(r)
    return out


def solve_lsq(A, b=None) -> np.ndarray:
    """Least-squares solution of ``A x = b``; homogeneous (``b is None``) gives the
    unit vector minimizing ``|A x|``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    if m < n:
        raise ValueError(f"least squares needs at least as many rows as columns ({m} < {n})")
    if b is None:
        _, _, vt = np.linalg.svd(A)
        return vt[-1].copy()
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != m:
        raise ValueError("right-hand side length does not match the number of rows")
    AtA = A.T @ A
    Atb = A.T @ b
    try:
        L = np.linalg.cholesky(AtA)
        d = np.abs(np.diag(L))
        if d.min() > 0 and (d.max() / d.min()) ** 2 <= TOLERANCES["lsq_condition"]:
            y = np.linalg.solve(L, Atb)
            return np.linalg.solve(L.T, y)
    except np.linalg.LinAlgError:
        pass
    return np.linalg.lstsq(A, b, rcond=None)[0]
