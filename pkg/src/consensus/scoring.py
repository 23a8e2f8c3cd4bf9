"""Model quality functions and preemptive model verification (SPRT, T(d,d))."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import CorrespondenceSet, EstimationModel, ResidualFunction

MLESAC_EM_ITERATIONS = 3
SPRT_INITIAL_EPSILON = 0.1
SPRT_INITIAL_DELTA = 0.01
SPRT_A_TOLERANCE = 1e-3
# timing ratio t_M and mean models per sample m_S, per model kind
SPRT_COSTS = {"homography": (200.0, 1.0), "fundamental": (200.0, 2.38), "essential": (600.0, 4.0)}


class QualityKind(str, enum.Enum):
    RANSAC = "ransac"
    MSAC = "msac"
    MLESAC = "mlesac"
    LMEDS = "lmeds"


@dataclass(frozen=True)
class Score:
    """Model quality; larger ``value`` is better (costs are stored negated)."""

    value: float
    inlier_count: int
    kind: QualityKind = QualityKind.MSAC

    def better_than(self, other: Optional["Score"]) -> bool:
        """Strictly better; ties in value fall back to the inlier count and then
        keep the incumbent."""
        if other is None:
            return True
        if other.kind != self.kind:
            raise ValueError(f"cannot compare {self.kind.value} and {other.kind.value} scores")
        if self.value != other.value:
            return self.value > other.value
        return self.inlier_count > other.inlier_count


WORST_SCORES = {k: Score(-math.inf, 0, k) for k in QualityKind}


def _half_normal(r: np.ndarray, sigma: float) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        p = 2.0 / (math.sqrt(2.0 * math.pi) * sigma) * np.exp(-0.5 * (r / sigma) ** 2)
    return np.where(np.isfinite(r), p, 0.0)


def mlesac_log_likelihood(residuals: np.ndarray, threshold: float, outlier_span: float,
                          iterations: int = MLESAC_EM_ITERATIONS) -> float:
    """Inlier/outlier mixture log-likelihood, mixing weight fitted by EM from 0.5.

    Inlier distances follow a half-normal with sigma = threshold / 2, outliers
    are uniform over ``[0, outlier_span]``.
    """
    p_in = _half_normal(residuals, threshold / 2.0)
    p_out = 1.0 / outlier_span
    gamma = 0.5
    for _ in range(iterations):
        mix = gamma * p_in + (1.0 - gamma) * p_out
        gamma = float(np.mean(gamma * p_in / mix))
    return float(np.sum(np.log(gamma * p_in + (1.0 - gamma) * p_out)))


def score_residuals(kind, residuals: np.ndarray, threshold: float,
                    outlier_span: Optional[float] = None) -> Score:
    kind = QualityKind(kind)
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise ValueError("cannot score a model on an empty set")
    inliers = int(np.count_nonzero(r < threshold))
    if kind is QualityKind.RANSAC:
        return Score(float(inliers), inliers, kind)
    if kind is QualityKind.MSAC:
        return Score(-float(np.sum(np.minimum(r * r, threshold * threshold))), inliers, kind)
    if kind is QualityKind.LMEDS:
        return Score(-float(np.median(r * r)), inliers, kind)
    if outlier_span is None:
        raise ValueError("MLESAC needs the outlier span")
    return Score(mlesac_log_likelihood(r, threshold, outlier_span), inliers, kind)


def compute_quality(kind, model: EstimationModel, data: CorrespondenceSet, threshold: float,
                    outlier_span: Optional[float] = None) -> Score:
    if not threshold > 0 and QualityKind(kind) is not QualityKind.LMEDS:
        raise ValueError("threshold must be positive")
    if len(data) == 0:
        raise ValueError("cannot score a model on an empty set")
    residuals = ResidualFunction(model, data.pts1, data.pts2)()
    return score_residuals(kind, residuals, threshold, outlier_span)


def default_outlier_span(kind: str, diagonal: float) -> float:
    """Support of the uniform outlier distance: the diagonal for transfer
    errors, twice it for epipolar distances."""
    return diagonal if kind == "homography" else 2.0 * diagonal


# -- SPRT --------------------------------------------------------------------------

def sprt_threshold(epsilon: float, delta: float, t_M: float, m_S: float,
                   tol: float = SPRT_A_TOLERANCE) -> float:
    """Decision threshold ``A`` from the fixed point ``A = K + log A``."""
    C = (1.0 - delta) * math.log((1.0 - delta) / (1.0 - epsilon)) + delta * math.log(delta / epsilon)
    K = t_M * C / m_S + 1.0
    A = K + 1.0
    for _ in range(1000):
        A_next = K + math.log(A)
        if abs(A_next - A) < tol:
            return A_next
        A = A_next
    return A


@dataclass
class SprtResult:
    accepted: bool
    tested: int
    residuals: np.ndarray = field(repr=False)  # NaN where not evaluated
    threshold: float = math.inf

    @property
    def inlier_mask_partial(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.residuals < self.threshold


class SprtState:
    """Adaptive Wald test state for one estimation run.

    Holds the inlier-ratio estimate of a good model (epsilon), of a bad model
    (delta), the decision threshold ``A`` and the history of ``(A_i, k_i)``
    epochs needed by the SPRT-aware termination criterion.
    """

    def __init__(self, N: int, epsilon: float = SPRT_INITIAL_EPSILON,
                 delta: float = SPRT_INITIAL_DELTA, t_M: float = 200.0, m_S: float = 1.0,
                 rng: Optional[np.random.Generator] = None, chunk: int = 16):
        if not 0 < delta < epsilon < 1:
            raise ValueError(f"SPRT needs 0 < delta < epsilon < 1, got delta={delta}, epsilon={epsilon}")
        self.N = N
        self.epsilon = epsilon
        self.delta = delta
        self.t_M = t_M
        self.m_S = m_S
        self._delta_count = 1
        rng = np.random.default_rng() if rng is None else rng
        self.order = rng.permutation(N)
        self.chunk = chunk
        self.A = sprt_threshold(epsilon, delta, t_M, m_S)
        self.history: list[list[float]] = [[self.A, 0]]

    def _new_epoch(self):
        self.A = sprt_threshold(self.epsilon, self.delta, self.t_M, self.m_S)
        if self.history[-1][1] == 0:
            self.history[-1][0] = self.A
        else:
            self.history.append([self.A, 0])

    def record_sample(self) -> None:
        self.history[-1][1] += 1

    def verify(self, residual_fn: Callable[[np.ndarray], np.ndarray], threshold: float) -> SprtResult:
        """Evaluate points in the run's fixed random order until rejection or the end."""
        if not 0 < self.delta < self.epsilon < 1:
            raise ValueError("SPRT needs 0 < delta < epsilon < 1")
        log_in = math.log(self.delta / self.epsilon)
        log_out = math.log((1.0 - self.delta) / (1.0 - self.epsilon))
        log_A = math.log(self.A)
        residuals = np.full(self.N, np.nan)
        log_lambda = 0.0
        start, size = 0, self.chunk
        while start < self.N:
            idx = self.order[start:start + size]
            r = residual_fn(idx)
            residuals[idx] = r
            steps = np.where(r < threshold, log_in, log_out)
            path = log_lambda + np.cumsum(steps)
            over = np.nonzero(path > log_A)[0]
            if over.size:
                tested = start + int(over[0]) + 1
                return SprtResult(False, tested, residuals, threshold)
            log_lambda = float(path[-1])
            start += idx.size
            size *= 2
        return SprtResult(True, self.N, residuals, threshold)

    def update_epsilon(self, inlier_ratio: float) -> None:
        """Raise the good-model inlier ratio to that of a new best model."""
        if not 0 < inlier_ratio < 1:
            raise ValueError(f"inlier ratio must lie in (0, 1), got {inlier_ratio}")
        if inlier_ratio > self.epsilon:
            self.epsilon = inlier_ratio
            self.delta = min(self.delta, 0.5 * self.epsilon)
            self._new_epoch()

    def update_delta(self, bad_fraction: float) -> None:
        """Fold the inlier fraction of a rejected model into the running mean."""
        if not 0 < bad_fraction < 1:
            raise ValueError(f"bad-model inlier fraction must lie in (0, 1), got {bad_fraction}")
        mean = (self.delta * self._delta_count + bad_fraction) / (self._delta_count + 1)
        self._delta_count += 1
        self.delta = min(mean, 0.5 * self.epsilon)
        self._new_epoch()

    def good_sample_probability(self, epsilon: float, m: int) -> np.ndarray:
        """Per-epoch probability that a sample is all-inlier and survives the test."""
        A = np.array([h[0] for h in self.history])
        return epsilon ** m * (1.0 - 1.0 / A)


def sprt_verify(state: SprtState, model: EstimationModel, data: CorrespondenceSet,
                threshold: float) -> tuple[bool, int, np.ndarray]:
    res = state.verify(ResidualFunction(model, data.pts1, data.pts2), threshold)
    return res.accepted, res.tested, res.inlier_mask_partial


def sprt_update(state: SprtState, inlier_ratio: Optional[float] = None,
                bad_fraction: Optional[float] = None) -> SprtState:
    if (inlier_ratio is None) == (bad_fraction is None):
        raise ValueError("give exactly one of inlier_ratio or bad_fraction")
    if inlier_ratio is not None:
        state.update_epsilon(inlier_ratio)
    else:
        state.update_delta(bad_fraction)
    return state


def tdd_check(rng: np.random.Generator, residual_fn: Callable[[np.ndarray], np.ndarray], N: int,
              threshold: float, d: int = 1) -> bool:
    """T(d,d) test: accept iff ``d`` random points are all inliers."""
    if d < 1:
        raise ValueError("T(d,d) needs d >= 1")
    idx = rng.choice(N, size=min(d, N), replace=False)
    return bool(np.all(residual_fn(idx) < threshold))
