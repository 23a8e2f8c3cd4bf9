"""Minimal-sample selection: uniform, PROSAC, NAPSAC and progressive NAPSAC.

A sampler owns its random generator and iteration counter; ``sample()``
returns ``m`` distinct indices into the correspondence set. Samplers never
check geometric validity.
"""
from __future__ import annotations

import enum
import math
from typing import Optional

import numpy as np

from .neighborhood import NeighborhoodGrid

PROSAC_T_N = 200_000
PNAPSAC_GROW_EVERY = 10
PNAPSAC_BLEND_LENGTH = 100


class SamplerKind(str, enum.Enum):
    UNIFORM = "uniform"
    PROSAC = "prosac"
    NAPSAC = "napsac"
    PNAPSAC = "pnapsac"


def draw_uniform(rng: np.random.Generator, m: int, N: int) -> np.ndarray:
    """``m`` distinct indices from ``range(N)`` by a partial Fisher-Yates shuffle."""
    if N < m:
        raise ValueError(f"cannot draw {m} distinct indices from {N}")
    picks = rng.integers(np.arange(m), N)
    swapped: dict = {}  # sparse view of the shuffled index array
    for i, j in enumerate(picks.tolist()):
        vi, vj = swapped.get(i, i), swapped.get(j, j)
        swapped[i], swapped[j] = vj, vi
    return np.array([swapped.get(i, i) for i in range(m)], dtype=np.intp)


def prosac_growth(m: int, N: int, T_N: float = PROSAC_T_N) -> np.ndarray:
    """Integer PROSAC schedule ``T'_n`` for ``n = m .. N`` (element ``n - m``)."""
    if N < m:
        raise ValueError(f"population {N} is smaller than the sample size {m}")
    T_n = float(T_N)
    for i in range(m):
        T_n *= (m - i) / (N - i)
    growth = np.empty(N - m + 1, dtype=np.int64)
    growth[0] = 1
    for n in range(m, N):
        T_next = T_n * (n + 1) / (n + 1 - m)
        growth[n - m + 1] = growth[n - m] + math.ceil(T_next - T_n)
        T_n = T_next
    return growth


class UniformSampler:
    kind = SamplerKind.UNIFORM

    def __init__(self, m: int, N: int, rng: np.random.Generator):
        if N < m:
            raise ValueError(f"cannot draw {m} distinct indices from {N}")
        self.m, self.N, self.rng = m, N, rng
        self.t = 0

    def sample(self) -> np.ndarray:
        self.t += 1
        return draw_uniform(self.rng, self.m, self.N)


class ProsacSampler:
    """Samples the top-ranked points first and blends into uniform sampling.

    ``order[r]`` is the index of the point with rank ``r`` (rank 0 = best).
    With pool size ``n`` the sample is the rank ``n - 1`` point plus ``m - 1``
    points drawn from the ``n - 1`` better ones; pool ``n`` serves iterations
    ``T'_{n-1} < t <= T'_n``.
    """

    kind = SamplerKind.PROSAC

    def __init__(self, m: int, order, rng: np.random.Generator, T_N: float = PROSAC_T_N):
        self.order = np.asarray(order, dtype=np.int64)
        self.N = self.order.size
        self.m = m
        self.rng = rng
        self.growth = prosac_growth(m, self.N, T_N)
        self.n = m
        self.t = 0

    def _advance(self) -> bool:
        """Step the iteration counter; return False once past the schedule."""
        self.t += 1
        while self.n < self.N and self.t > self.growth[self.n - self.m]:
            self.n += 1
        return self.t <= self.growth[-1]

    def sample(self) -> np.ndarray:
        if not self._advance():
            return self.order[draw_uniform(self.rng, self.m, self.N)]
        ranks = np.empty(self.m, dtype=np.int64)
        ranks[: self.m - 1] = draw_uniform(self.rng, self.m - 1, self.n - 1)
        ranks[-1] = self.n - 1
        return self.order[ranks]

    def samples_within(self, n: int) -> int:
        """Samples drawn so far that were restricted to the top ``n`` ranks."""
        if n >= self.N:
            return self.t
        return int(min(self.t, self.growth[n - self.m]))


class PNapsacSampler:
    """Local sampling around a PROSAC-chosen first point from growing neighborhoods.

    Each first point keeps its own grid layer; the layer grows when the
    neighborhood cannot supply ``m - 1`` other points and after every
    ``grow_every`` samples centred on that point. Past the top layer the
    remaining points are drawn from the whole set. Independently, sample
    ``t`` is a global PROSAC sample with probability ``t / blend_length``,
    so the sampler turns into PROSAC after ``blend_length`` iterations.

    With ``progressive=False`` this is plain NAPSAC: uniform first point and a
    single fixed layer.
    """

    def __init__(self, m: int, grid: NeighborhoodGrid, rng: np.random.Generator,
                 order=None, T_N: float = PROSAC_T_N, grow_every: int = PNAPSAC_GROW_EVERY,
                 progressive: bool = True, napsac_layer: Optional[int] = None,
                 blend_length: Optional[int] = PNAPSAC_BLEND_LENGTH):
        self.m = m
        self.grid = grid
        self.N = len(grid)
        if self.N < m:
            raise ValueError(f"cannot draw {m} distinct indices from {self.N}")
        self.rng = rng
        self.progressive = progressive
        self.kind = SamplerKind.PNAPSAC if progressive else SamplerKind.NAPSAC
        self.grow_every = grow_every
        self.blend_length = blend_length
        order = grid.density_order() if order is None else order
        self._prosac = ProsacSampler(m, order, rng, T_N) if progressive else None
        if napsac_layer is None:
            napsac_layer = grid.layer_count // 2
        self.napsac_layer = napsac_layer
        self.layer = np.zeros(self.N, dtype=np.int64)
        self.uses = np.zeros(self.N, dtype=np.int64)
        self.t = 0

    def _first_point(self) -> int:
        if not self.progressive:
            return int(self.rng.integers(self.N))
        p = self._prosac
        if not p._advance():
            return int(p.order[self.rng.integers(self.N)])
        return int(p.order[p.n - 1])

    def _global_sample(self) -> np.ndarray:
        p = self._prosac
        if not p._advance():
            return p.order[draw_uniform(self.rng, self.m, self.N)]
        ranks = np.empty(self.m, dtype=np.int64)
        ranks[: self.m - 1] = draw_uniform(self.rng, self.m - 1, p.n - 1)
        ranks[-1] = p.n - 1
        return p.order[ranks]

    def sample(self) -> np.ndarray:
        self.t += 1
        if (self.progressive and self.blend_length is not None
                and self.rng.random() * self.blend_length < self.t):
            return self._global_sample()
        first = self._first_point()
        top = self.grid.layer_count
        if self.progressive:
            layer = int(self.layer[first])
            self.uses[first] += 1
        else:
            layer = self.napsac_layer
            top = layer + 1
        candidates = None
        while layer < top:
            nb = self.grid.neighbors(first, layer)
            if nb.size >= self.m - 1:
                candidates = nb
                break
            layer += 1
        if self.progressive:
            grown = layer + (1 if self.uses[first] % self.grow_every == 0 else 0)
            self.layer[first] = min(grown, self.grid.layer_count)
        out = np.empty(self.m, dtype=np.int64)
        out[0] = first
        if candidates is not None:
            out[1:] = candidates[draw_uniform(self.rng, self.m - 1, candidates.size)]
        else:
            rest = draw_uniform(self.rng, self.m - 1, self.N - 1)
            out[1:] = rest + (rest >= first)
        return out

    @property
    def growth(self):
        return None if self._prosac is None else self._prosac.growth


def make_sampler(kind, m: int, N: int, rng: np.random.Generator, grid=None, order=None,
                 T_N: float = PROSAC_T_N, grow_every: int = PNAPSAC_GROW_EVERY,
                 blend_length: Optional[int] = PNAPSAC_BLEND_LENGTH):
    kind = SamplerKind(kind)
    if kind is SamplerKind.UNIFORM:
        return UniformSampler(m, N, rng)
    if kind is SamplerKind.PROSAC:
        if order is None:
            if grid is None:
                raise ValueError("PROSAC needs a quality ordering or a neighborhood grid")
            order = grid.density_order()
        return ProsacSampler(m, order, rng, T_N)
    if grid is None:
        raise ValueError(f"{kind.value} sampling needs a neighborhood grid")
    return PNapsacSampler(m, grid, rng, order=order, T_N=T_N, grow_every=grow_every,
                          progressive=kind is SamplerKind.PNAPSAC, blend_length=blend_length)
