"""The hypothesize-and-verify loop with pluggable sampling, verification, quality,
degeneracy handling, local optimization and termination."""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.stats import binom

from .core import (CorrespondenceSet, EstimationModel, Intrinsics, ModelKind,
                   NonInvertibleHomographyError, ResidualFunction)
from .degeneracy import degensac_check_and_recover, h_sample_defect, oriented_epipolar_check
from .localopt import LoConfig, LoKind, lo_graphcut, lo_inner_ransac
from .neighborhood import build_grid
from .samplers import PROSAC_T_N, ProsacSampler, SamplerKind, make_sampler
from .scoring import (SPRT_COSTS, QualityKind, Score, SprtState, default_outlier_span,
                      score_residuals)
from .solvers import MINIMAL_SOLVERS, refit_lsq

DEFAULT_THRESHOLDS = {ModelKind.HOMOGRAPHY: 2.0, ModelKind.FUNDAMENTAL: 1.0, ModelKind.ESSENTIAL: 1.0}
DEFAULT_MAX_ITERATIONS = {ModelKind.HOMOGRAPHY: 10_000, ModelKind.FUNDAMENTAL: 1_000,
                          ModelKind.ESSENTIAL: 1_000}
DEFAULT_PROSAC_BETA = 0.01
PROSAC_MIN_STOP_LENGTH = 20  # smallest hypothesis pool considered for PROSAC termination


class VerifyKind(str, enum.Enum):
    NONE = "none"
    SPRT = "sprt"
    TDD = "tdd"


class TerminationKind(str, enum.Enum):
    STANDARD = "standard"
    SPRT = "sprt"
    PNAPSAC = "pnapsac"
    PROSAC = "prosac"


@dataclass
class EngineConfig:
    """Run configuration. ``threshold`` is always in pixels; essential-matrix
    runs divide it by the mean focal length."""

    kind: ModelKind = ModelKind.HOMOGRAPHY
    threshold: Optional[float] = None
    confidence: float = 0.99
    max_iterations: Optional[int] = None
    sampler: SamplerKind = SamplerKind.PNAPSAC
    quality: QualityKind = QualityKind.MSAC
    verification: VerifyKind = VerifyKind.SPRT
    lo: LoKind = LoKind.GRAPH_CUT
    termination: frozenset = frozenset({TerminationKind.SPRT, TerminationKind.PNAPSAC})
    relaxation: float = 0.1
    nonrandomness: float = 0.05
    degeneracy: bool = True
    polish: bool = True
    seed: int = 0
    tdd_points: int = 1
    lo_config: LoConfig = field(default_factory=LoConfig)
    grid_layers: int = 4
    grid_cell_px: Optional[float] = None
    sprt_t_M: Optional[float] = None
    sprt_m_S: Optional[float] = None
    outlier_span: Optional[float] = None
    prosac_T_N: float = PROSAC_T_N

    def __post_init__(self):
        self.kind = ModelKind.parse(self.kind)
        self.sampler = SamplerKind(self.sampler)
        self.quality = QualityKind(self.quality)
        self.verification = VerifyKind(self.verification)
        self.lo = LoKind(self.lo)
        self.termination = frozenset(TerminationKind(t) for t in self.termination)
        if self.threshold is None:
            self.threshold = DEFAULT_THRESHOLDS[self.kind]
        if self.max_iterations is None:
            self.max_iterations = DEFAULT_MAX_ITERATIONS[self.kind]
        if not 0 < self.confidence < 1:
            raise ValueError(f"confidence must lie in (0, 1), got {self.confidence}")
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.relaxation < 0:
            raise ValueError("relaxation must be nonnegative")
        t_M, m_S = SPRT_COSTS[self.kind.value]
        self.sprt_t_M = t_M if self.sprt_t_M is None else self.sprt_t_M
        self.sprt_m_S = m_S if self.sprt_m_S is None else self.sprt_m_S

    @property
    def active_termination(self) -> frozenset:
        active = set(self.termination)
        if self.sampler is SamplerKind.PROSAC:
            active.add(TerminationKind.PROSAC)
        return frozenset(active)


@dataclass
class RunResult:
    best_model: Optional[EstimationModel]
    inlier_mask: np.ndarray
    score: Optional[Score]
    iterations_used: int
    models_evaluated: int
    points_evaluated: int
    wall_time: float
    termination_reason: str
    lo_runs: int = 0
    best_updates: int = 0

    @property
    def inlier_count(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))


# -- termination criteria ---------------------------------------------------------------

def required_iterations_standard(epsilon: float, m: int, confidence: float, sprt=None,
                                 max_iterations: int = 2 ** 62) -> int:
    """Samples needed to draw an all-inlier sample with the given confidence.

    ``sprt`` (an :class:`SprtState` or a decision threshold ``A``) accounts for
    good samples wrongly rejected by the sequential test.
    """
    if not epsilon > 0:
        return max_iterations
    if epsilon >= 1:
        return 1
    p_good = epsilon ** m
    if sprt is not None:
        A = sprt.A if isinstance(sprt, SprtState) else float(sprt)
        p_good *= 1.0 - 1.0 / A
    if p_good >= 1.0:
        return 1
    if p_good <= 0.0:
        return max_iterations
    k = math.log(1.0 - confidence) / math.log1p(-p_good)
    return int(min(max_iterations, max(1, math.ceil(k))))


def pnapsac_relaxed_stop(inlier_count: int, N: int, m: int, confidence: float, relaxation: float,
                         k_drawn: int) -> bool:
    """Standard criterion with the inlier ratio inflated by ``1 + relaxation``."""
    if relaxation < 0:
        raise ValueError("relaxation must be nonnegative")
    eps = min(1.0, (1.0 + relaxation) * inlier_count / N)
    return k_drawn >= required_iterations_standard(eps, m, confidence)


def prosac_min_inliers(n: int, m: int, beta: float, psi: float) -> int:
    """Smallest inlier count whose binomial tail under a random model is below ``psi``."""
    if n <= m:
        return n
    k = np.arange(0, n - m + 1)
    tail = binom.sf(k - 1, n - m, beta)  # P(X >= k)
    below = np.flatnonzero(tail < psi)
    return m + int(below[0]) if below.size else n + 1


def prosac_stop(inlier_count: int, n: int, k_drawn: int, m: int, beta: float, psi: float,
                confidence: float) -> bool:
    """PROSAC non-randomness plus maximality for one hypothesis pool size ``n``."""
    if inlier_count < prosac_min_inliers(n, m, beta, psi):
        return False
    return k_drawn >= required_iterations_standard(min(1.0, inlier_count / n), m, confidence)


# -- the loop -------------------------------------------------------------------------------

class _Run:
    def __init__(self, data: CorrespondenceSet, config: EngineConfig,
                 intrinsics: Optional[Intrinsics]):
        cfg = config
        self.cfg = cfg
        self.kind = cfg.kind
        data.validate_for(self.kind)
        self.N = len(data)
        self.m = self.kind.minimal_sample_size
        threshold = float(cfg.threshold)
        span = cfg.outlier_span
        if self.kind is ModelKind.ESSENTIAL:
            if intrinsics is None:
                raise ValueError("essential-matrix estimation requires intrinsics")
            focal = intrinsics.mean_focal
            model_data = intrinsics.normalize(data)
            threshold /= focal
            if span is None:
                span = default_outlier_span(self.kind.value, data.diagonal) / focal
        else:
            model_data = data
            if span is None:
                span = default_outlier_span(self.kind.value, data.diagonal)
        self.threshold = threshold
        self.span = span
        self.pts1 = model_data.pts1
        self.pts2 = model_data.pts2

        seeds = np.random.SeedSequence(cfg.seed).spawn(5)
        rng_sampler, rng_sprt, rng_lo, rng_degen, rng_tdd = (np.random.default_rng(s) for s in seeds)
        self.rng_lo, self.rng_degen, self.rng_tdd = rng_lo, rng_degen, rng_tdd

        needs_grid = (cfg.sampler in (SamplerKind.NAPSAC, SamplerKind.PNAPSAC)
                      or cfg.lo is LoKind.GRAPH_CUT
                      or (cfg.sampler is SamplerKind.PROSAC and data.quality is None))
        self.grid = build_grid(data, cfg.grid_cell_px, cfg.grid_layers) if needs_grid else None
        if data.quality is not None:
            self.order = np.argsort(-data.quality, kind="stable")
        elif self.grid is not None:
            self.order = self.grid.density_order()
        else:
            self.order = np.arange(self.N)
        self.sampler = make_sampler(cfg.sampler, self.m, self.N, rng_sampler, grid=self.grid,
                                    order=self.order, T_N=cfg.prosac_T_N)
        self.edges = self.grid.edges(0) if cfg.lo is LoKind.GRAPH_CUT else None
        self.sprt = None
        if cfg.verification is VerifyKind.SPRT:
            self.sprt = SprtState(self.N, t_M=cfg.sprt_t_M, m_S=cfg.sprt_m_S, rng=rng_sprt)
        self.solver = MINIMAL_SOLVERS[self.kind]
        self.active = cfg.active_termination

        self.best: Optional[EstimationModel] = None
        self.best_score: Optional[Score] = None
        self.best_inliers = 0
        self.best_mask = np.zeros(self.N, dtype=bool)
        self.models_evaluated = 0
        self.points_evaluated = 0
        self.lo_runs = 0
        self.best_updates = 0
        self._log_miss = 0.0
        self._prosac_cache: dict = {}

    # -- helpers ---------------------------------------------------------------------
    def score(self, residuals: np.ndarray) -> Score:
        return score_residuals(self.cfg.quality, residuals, self.threshold, self.span)

    def residuals(self, model: EstimationModel) -> Optional[np.ndarray]:
        try:
            return ResidualFunction(model, self.pts1, self.pts2)()
        except NonInvertibleHomographyError:
            return None

    def validate_sample(self, sample: np.ndarray) -> bool:
        if not self.cfg.degeneracy or self.kind is not ModelKind.HOMOGRAPHY:
            return True
        return h_sample_defect(self.pts1[sample], self.pts2[sample]) is None

    def validate_model(self, model: EstimationModel, sample: np.ndarray) -> bool:
        if self.kind is ModelKind.HOMOGRAPHY:
            return abs(np.linalg.det(model.m)) > 1e-12
        if not self.cfg.degeneracy:
            return True
        return oriented_epipolar_check(model, self.pts1[sample], self.pts2[sample])

    def local_optimization(self, model: EstimationModel) -> EstimationModel:
        lo_cfg = self.cfg.lo_config
        if self.cfg.lo is LoKind.GRAPH_CUT:
            return lo_graphcut(model, self.pts1, self.pts2, self.edges, self.threshold, lo_cfg)
        return lo_inner_ransac(model, self.pts1, self.pts2, self.threshold, lo_cfg, self.rng_lo)

    # -- termination -----------------------------------------------------------------
    def _miss_log_probability(self) -> float:
        eps = self.best_inliers / self.N
        p = eps ** self.m
        A = np.array([h[0] for h in self.sprt.history])
        k = np.array([h[1] for h in self.sprt.history], dtype=float)
        return float(np.sum(k * np.log1p(-p * (1.0 - 1.0 / A))))

    def should_stop(self, t: int) -> Optional[str]:
        if self.best is None:
            return None
        eta = self.cfg.confidence
        eps = self.best_inliers / self.N
        for crit in sorted(self.active, key=lambda c: c.value):
            if crit is TerminationKind.STANDARD or (crit is TerminationKind.SPRT and self.sprt is None):
                if t >= required_iterations_standard(eps, self.m, eta):
                    return crit.value
            elif crit is TerminationKind.SPRT:
                if eps >= 1.0 or self._log_miss <= math.log(1.0 - eta):
                    return crit.value
            elif crit is TerminationKind.PNAPSAC:
                if pnapsac_relaxed_stop(self.best_inliers, self.N, self.m, eta,
                                        self.cfg.relaxation, t):
                    return crit.value
            elif crit is TerminationKind.PROSAC and self._prosac_satisfied(t):
                return crit.value
        return None

    def _prosac_candidates(self):
        key = self.best_updates
        if key not in self._prosac_cache:
            self._prosac_cache = {}
            beta = DEFAULT_PROSAC_BETA if self.sprt is None else self.sprt.delta
            ranked = np.cumsum(self.best_mask[self.order])
            # tiny pools pass non-randomness on the sample itself plus a point or two
            smallest = min(self.N, max(self.m + 1, PROSAC_MIN_STOP_LENGTH))
            sizes = sorted({self.N} | {int(n) for n in np.geomspace(smallest, self.N, 16)})
            rows = []
            for n in sizes:
                i_n = int(ranked[n - 1])
                if i_n >= prosac_min_inliers(n, self.m, beta, self.cfg.nonrandomness):
                    need = required_iterations_standard(min(1.0, i_n / n), self.m, self.cfg.confidence)
                    rows.append((n, need))
            self._prosac_cache[key] = rows
        return self._prosac_cache[key]

    def _prosac_satisfied(self, t: int) -> bool:
        sampler = self.sampler
        for n, need in self._prosac_candidates():
            drawn = sampler.samples_within(n) if isinstance(sampler, ProsacSampler) else t
            if drawn >= need:
                return True
        return False

    # -- bookkeeping -----------------------------------------------------------------
    def record_sample(self) -> None:
        if self.sprt is None:
            return
        self.sprt.record_sample()
        if self.best is not None:
            p = (self.best_inliers / self.N) ** self.m * (1.0 - 1.0 / self.sprt.A)
            self._log_miss += math.log1p(-p) if p < 1 else -math.inf

    def set_best(self, model: EstimationModel, score: Score, residuals: np.ndarray) -> None:
        self.best, self.best_score = model, score
        self.best_mask = residuals < self.threshold
        self.best_inliers = int(np.count_nonzero(self.best_mask))
        self.best_updates += 1
        if self.sprt is not None:
            ratio = self.best_inliers / self.N
            if 0 < ratio < 1:
                self.sprt.update_epsilon(ratio)
            elif ratio >= 1:
                self.sprt.update_epsilon(1.0 - 1.0 / (self.N + 1))
            self._log_miss = self._miss_log_probability()

    # -- per-model pipeline ------------------------------------------------------------
    def verify(self, model: EstimationModel) -> Optional[np.ndarray]:
        """Preemptive verification; returns all residuals when the model passes."""
        cfg = self.cfg
        if cfg.verification is VerifyKind.SPRT:
            try:
                fn = ResidualFunction(model, self.pts1, self.pts2)
            except NonInvertibleHomographyError:
                return None
            res = self.sprt.verify(fn, self.threshold)
            self.points_evaluated += res.tested
            if not res.accepted:
                tested = res.residuals[~np.isnan(res.residuals)]
                frac = np.count_nonzero(tested < self.threshold) / max(tested.size, 1)
                self.sprt.update_delta(min(max(frac, 1e-6), 1.0 - 1e-6))
                return None
            return res.residuals
        if cfg.verification is VerifyKind.TDD:
            try:
                fn = ResidualFunction(model, self.pts1, self.pts2)
            except NonInvertibleHomographyError:
                return None
            d = min(cfg.tdd_points, self.N)
            idx = self.rng_tdd.choice(self.N, size=d, replace=False)
            self.points_evaluated += d
            if not np.all(fn(idx) < self.threshold):
                return None
            self.points_evaluated += self.N
            return fn()
        r = self.residuals(model)
        if r is not None:
            self.points_evaluated += self.N
        return r

    def process(self, model: EstimationModel, sample: np.ndarray) -> None:
        cfg = self.cfg
        self.models_evaluated += 1
        if not self.validate_model(model, sample):
            return
        residuals = self.verify(model)
        if residuals is None:
            return
        score = self.score(residuals)
        if not score.better_than(self.best_score):
            return

        cand, cand_score, cand_res = model, score, residuals
        if cfg.degeneracy and self.kind is ModelKind.FUNDAMENTAL:
            report = degensac_check_and_recover(model, sample, self.pts1, self.pts2,
                                                self.threshold, rng=self.rng_degen)
            if report.recovered_model is not None:
                rec_res = self.residuals(report.recovered_model)
                self.points_evaluated += self.N
                rec_score = self.score(rec_res)
                if rec_score.better_than(cand_score):
                    cand, cand_score, cand_res = report.recovered_model, rec_score, rec_res
            if not cand_score.better_than(self.best_score):
                return

        if cfg.lo is not LoKind.NONE and self.lo_runs < cfg.lo_config.max_lo_runs:
            self.lo_runs += 1
            lo_model = self.local_optimization(cand)
            if lo_model is not cand and self.validate_model(lo_model, sample):
                lo_res = self.residuals(lo_model)
                if lo_res is not None:
                    self.points_evaluated += self.N
                    lo_score = self.score(lo_res)
                    if lo_score.better_than(cand_score):
                        cand, cand_score, cand_res = lo_model, lo_score, lo_res
        self.set_best(cand, cand_score, cand_res)

    def polish(self) -> None:
        if self.best is None or not self.cfg.polish:
            return
        mask = self.best_mask
        fitted = refit_lsq(self.kind, self.pts1[mask], self.pts2[mask])
        if not fitted:
            return
        res = self.residuals(fitted[0])
        if res is None:
            return
        self.points_evaluated += self.N
        score = self.score(res)
        if score.better_than(self.best_score):
            self.best, self.best_score = fitted[0], score
            self.best_mask = res < self.threshold
            self.best_inliers = int(np.count_nonzero(self.best_mask))

    def execute(self) -> RunResult:
        start = time.perf_counter()
        reason = "max_iterations"
        t = 0
        while t < self.cfg.max_iterations:
            stop = self.should_stop(t)
            if stop is not None:
                reason = stop
                break
            t += 1
            sample = self.sampler.sample()
            if not self.validate_sample(sample):
                continue
            models = self.solver(self.pts1[sample], self.pts2[sample])
            self.record_sample()
            for model in models:
                self.process(model, sample)
        self.polish()
        if self.best is None:
            reason = "exhausted"
        else:
            res = self.residuals(self.best)
            self.best_mask = res < self.threshold
        return RunResult(self.best, self.best_mask.copy(), self.best_score, t,
                         self.models_evaluated, self.points_evaluated,
                         time.perf_counter() - start, reason, self.lo_runs, self.best_updates)


def run(data: CorrespondenceSet, config: EngineConfig,
        intrinsics: Optional[Intrinsics] = None) -> RunResult:
    """Robustly estimate a model from outlier-contaminated correspondences.

    Essential matrices are returned in calibrated coordinates; the inlier mask
    always refers to ``data`` in its original order.
    """
    return _Run(data, config, intrinsics).execute()


def plain_ransac_config(kind, seed: int = 0, max_iterations: Optional[int] = None,
                        threshold: Optional[float] = None,
                        termination: Iterable = ()) -> EngineConfig:
    """Configuration with every enhancement switched off."""
    return EngineConfig(kind=kind, seed=seed, max_iterations=max_iterations, threshold=threshold,
                        sampler=SamplerKind.UNIFORM, quality=QualityKind.RANSAC,
                        verification=VerifyKind.NONE, lo=LoKind.NONE,
                        termination=frozenset(termination), degeneracy=False, polish=False)
