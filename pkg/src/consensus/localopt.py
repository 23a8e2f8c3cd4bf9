"""Local optimization of so-far-the-best models: graph-cut labeling and inner RANSAC.

Both backends only ever replace the input by a model with a strictly lower
MSAC cost, so their output is never worse than their input.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .core import EstimationModel, NonInvertibleHomographyError, ResidualFunction
from .solvers import refit_lsq

_FLOW_EPS = 1e-12


class LoKind(str, enum.Enum):
    NONE = "none"
    INNER_RANSAC = "inner"
    GRAPH_CUT = "graphcut"


@dataclass
class LoConfig:
    max_lo_iterations: int = 4
    inner_sample_factor: int = 7  # inner sample size = min(factor * m, ceil(|I| / 2))
    ils_iterations: int = 4
    spatial_weight: float = 0.1
    max_lo_runs: int = 25
    weighted: bool = True

    def __post_init__(self):
        if min(self.max_lo_iterations, self.inner_sample_factor, self.ils_iterations,
               self.max_lo_runs) < 1:
            raise ValueError("local optimization counts must be positive")
        if self.spatial_weight < 0:
            raise ValueError("spatial coherence weight must be nonnegative")


# -- max-flow / min-cut ----------------------------------------------------------------

class EnergyGraph:
    """Binary labeling energy: per-node unaries plus Potts pairwise terms.

    Label 0 (source side) is "inlier", label 1 (sink side) is "outlier".
    """

    def __init__(self, unary_inlier, unary_outlier, edges=None, weight: float = 0.0):
        self.unary_inlier = np.asarray(unary_inlier, dtype=float).reshape(-1)
        self.unary_outlier = np.asarray(unary_outlier, dtype=float).reshape(-1)
        if self.unary_inlier.shape != self.unary_outlier.shape:
            raise ValueError("unary arrays must have equal length")
        if np.any(self.unary_inlier < 0) or np.any(self.unary_outlier < 0):
            raise ValueError("unary costs must be nonnegative")
        if not (np.all(np.isfinite(self.unary_inlier)) and np.all(np.isfinite(self.unary_outlier))):
            raise ValueError("unary costs must be finite")
        if weight < 0 or not math.isfinite(weight):
            raise ValueError("Potts weight must be finite and nonnegative")
        self.edges = np.empty((0, 2), dtype=np.int64) if edges is None else \
            np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.weight = float(weight)

    def __len__(self) -> int:
        return self.unary_inlier.size

    def energy(self, inlier_labels) -> float:
        inl = np.asarray(inlier_labels, dtype=bool)
        unary = np.where(inl, self.unary_inlier, self.unary_outlier).sum()
        if self.edges.size == 0:
            return float(unary)
        cut = np.count_nonzero(inl[self.edges[:, 0]] != inl[self.edges[:, 1]])
        return float(unary + self.weight * cut)


class _Dinic:
    def __init__(self, n: int):
        self.n = n
        self.adj: list[list[int]] = [[] for _ in range(n)]
        self.to: list[int] = []
        self.cap: list[float] = []

    def add_edge(self, u: int, v: int, c_uv: float, c_vu: float = 0.0) -> None:
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(c_uv)
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(c_vu)

    def _levels(self, s: int, t: int):
        level = [-1] * self.n
        level[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for e in self.adj[u]:
                v = self.to[e]
                if level[v] < 0 and self.cap[e] > _FLOW_EPS:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level if level[t] >= 0 else None

    def _augment(self, s: int, t: int, level, it) -> float:
        # iterative DFS along the level graph, pushes one path
        path: list[int] = []
        u = s
        while True:
            if u == t:
                f = min(self.cap[e] for e in path)
                for e in path:
                    self.cap[e] -= f
                    self.cap[e ^ 1] += f
                return f
            advanced = False
            while it[u] < len(self.adj[u]):
                e = self.adj[u][it[u]]
                v = self.to[e]
                if self.cap[e] > _FLOW_EPS and level[v] == level[u] + 1:
                    path.append(e)
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if not advanced:
                if not path:
                    return 0.0
                level[u] = -1  # dead end
                e = path.pop()
                u = self.to[e ^ 1]
                it[u] += 1

    def maxflow(self, s: int, t: int) -> float:
        flow = 0.0
        while True:
            level = self._levels(s, t)
            if level is None:
                return flow
            it = [0] * self.n
            while True:
                f = self._augment(s, t, level, it)
                if f <= 0.0:
                    break
                flow += f

    def source_side(self, s: int) -> list[bool]:
        seen = [False] * self.n
        seen[s] = True
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for e in self.adj[u]:
                v = self.to[e]
                if not seen[v] and self.cap[e] > _FLOW_EPS:
                    seen[v] = True
                    queue.append(v)
        return seen


def maxflow_mincut(graph: EnergyGraph) -> tuple[float, np.ndarray]:
    """Exact minimum of the labeling energy.

    Returns ``(flow, inlier_mask)``; the flow value equals the minimum energy
    and ``inlier_mask`` marks the source side of the minimum cut. Connected
    components of the pairwise graph are solved independently.
    """
    n = len(graph)
    u_in, u_out = graph.unary_inlier, graph.unary_outlier
    # isolated nodes (and the lambda = 0 case) pick the cheaper label; ties go to the sink
    labels = u_in < u_out
    flow = float(np.minimum(u_in, u_out).sum())
    edges = graph.edges
    if edges.size == 0 or graph.weight == 0.0:
        return flow, labels
    edges = edges[edges[:, 0] != edges[:, 1]]
    adj = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    n_comp, comp = connected_components(adj, directed=False)
    sizes = np.bincount(comp, minlength=n_comp)
    comp_edges = comp[edges[:, 0]]
    order = np.argsort(comp_edges, kind="stable")
    bounds = np.searchsorted(comp_edges[order], np.arange(n_comp + 1))
    members_order = np.argsort(comp, kind="stable")
    member_bounds = np.searchsorted(comp[members_order], np.arange(n_comp + 1))
    for c in np.flatnonzero(sizes > 1):
        nodes = members_order[member_bounds[c]:member_bounds[c + 1]]
        local = {int(v): k for k, v in enumerate(nodes)}
        k = len(nodes)
        s, t = k, k + 1
        g = _Dinic(k + 2)
        for v in nodes:
            a, b = float(u_out[v]), float(u_in[v])
            m = min(a, b)
            if a - m > 0:
                g.add_edge(s, local[int(v)], a - m)
            if b - m > 0:
                g.add_edge(local[int(v)], t, b - m)
        for e in order[bounds[c]:bounds[c + 1]]:
            i, j = edges[e]
            g.add_edge(local[int(i)], local[int(j)], graph.weight, graph.weight)
        flow += g.maxflow(s, t)
        side = g.source_side(s)
        labels[nodes] = side[:k]
    return flow, labels


# -- LO backends ------------------------------------------------------------------------

def _residuals(model: EstimationModel, pts1, pts2) -> np.ndarray:
    try:
        return ResidualFunction(model, pts1, pts2)()
    except NonInvertibleHomographyError:
        return np.full(len(pts1), np.inf)


def msac_cost(model: EstimationModel, pts1, pts2, threshold: float) -> float:
    r = _residuals(model, pts1, pts2)
    return float(np.sum(np.minimum(r * r, threshold * threshold)))


def lo_graphcut(model: EstimationModel, pts1, pts2, edges, threshold: float,
                cfg: Optional[LoConfig] = None) -> EstimationModel:
    """Alternate a spatially coherent min-cut labeling with a weighted least-squares refit.

    The labeling threshold shrinks linearly from twice the threshold to it
    over the iterations; refits are kept only if their MSAC cost at the
    threshold decreases.
    """
    cfg = LoConfig() if cfg is None else cfg
    best = model
    best_cost = msac_cost(model, pts1, pts2, threshold)
    schedule = np.linspace(2.0 * threshold, threshold, cfg.max_lo_iterations)
    for th in schedule:
        r = _residuals(best, pts1, pts2)
        ratio = np.minimum(r * r / (th * th), 1.0)
        ratio[~np.isfinite(ratio)] = 1.0
        graph = EnergyGraph(ratio, 1.0 - ratio, edges, cfg.spatial_weight)
        _, inliers = maxflow_mincut(graph)
        if np.count_nonzero(inliers) < model.kind.non_minimal_sample_size:
            continue
        weights = np.maximum(1.0 - ratio[inliers], 0.0) if cfg.weighted else None
        try:
            fitted = refit_lsq(model.kind, pts1[inliers], pts2[inliers], weights)
        except ValueError:
            fitted = []
        if not fitted:
            continue
        cost = msac_cost(fitted[0], pts1, pts2, threshold)
        if cost < best_cost:
            best, best_cost = fitted[0], cost
    return best


def lo_inner_ransac(model: EstimationModel, pts1, pts2, threshold: float,
                    cfg: Optional[LoConfig] = None,
                    rng: Optional[np.random.Generator] = None) -> EstimationModel:
    """Inner RANSAC on non-minimal samples of the inliers, each refined by iterated
    least squares with a threshold shrinking from twice the threshold to it."""
    cfg = LoConfig() if cfg is None else cfg
    rng = np.random.default_rng(0) if rng is None else rng
    kind = model.kind
    nonmin = kind.non_minimal_sample_size
    best = model
    best_cost = msac_cost(model, pts1, pts2, threshold)
    inliers = np.flatnonzero(_residuals(model, pts1, pts2) < 2.0 * threshold)
    if inliers.size < nonmin:
        return model
    schedule = np.linspace(2.0 * threshold, threshold, cfg.ils_iterations)
    for _ in range(cfg.max_lo_iterations):
        size = max(nonmin, min(cfg.inner_sample_factor * kind.minimal_sample_size,
                               math.ceil(inliers.size / 2)))
        size = min(size, inliers.size)
        subset = rng.choice(inliers, size=size, replace=False)
        fitted = refit_lsq(kind, pts1[subset], pts2[subset])
        if not fitted:
            continue
        cand = fitted[0]
        for th in schedule:
            inl = _residuals(cand, pts1, pts2) < th
            if np.count_nonzero(inl) < nonmin:
                break
            refined = refit_lsq(kind, pts1[inl], pts2[inl])
            if not refined:
                break
            cand = refined[0]
        cost = msac_cost(cand, pts1, pts2, threshold)
        if cost < best_cost:
            best, best_cost = cand, cost
            inliers = np.flatnonzero(_residuals(best, pts1, pts2) < 2.0 * threshold)
    return best
