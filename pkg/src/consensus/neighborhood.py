"""Multi-layer uniform grid over the joint (x1, y1, x2, y2) space.

Layer ``L`` uses cells of ``base_cell_px * 2**L`` along every axis, all
anchored at the origin, so a layer-L cell is always contained in exactly one
layer-(L+1) cell and neighborhoods only grow with the layer index.
"""
from __future__ import annotations

import numpy as np

from .core import CorrespondenceSet

DEFAULT_LAYERS = 4
DEFAULT_CELLS_PER_DIAGONAL = 32


def default_cell_size(data: CorrespondenceSet) -> float:
    return data.diagonal / DEFAULT_CELLS_PER_DIAGONAL


class NeighborhoodGrid:
    def __init__(self, points4d: np.ndarray, base_cell_px: float, layer_count: int = DEFAULT_LAYERS):
        if not base_cell_px > 0:
            raise ValueError("base cell size must be positive")
        if layer_count < 1:
            raise ValueError("at least one layer is required")
        self.points = np.asarray(points4d, dtype=float).reshape(-1, 4)
        self.base_cell_px = float(base_cell_px)
        self.layer_count = int(layer_count)
        self.cell_ids = []  # per layer: (N,) int cell label
        self.buckets = []  # per layer: list of index arrays, indexed by cell label
        base = np.floor(self.points / self.base_cell_px).astype(np.int64)
        for layer in range(self.layer_count):
            coords = base >> layer  # floor division by 2**layer, exact for negatives
            _, labels, counts = np.unique(coords, axis=0, return_inverse=True, return_counts=True)
            labels = labels.reshape(-1)
            order = np.argsort(labels, kind="stable")
            splits = np.cumsum(counts)[:-1]
            self.cell_ids.append(labels)
            self.buckets.append(np.split(order, splits))
        self.density = np.array([self.buckets[0][c].size for c in self.cell_ids[0]], dtype=np.int64)

    def __len__(self) -> int:
        return self.points.shape[0]

    def cell_size(self, layer: int) -> float:
        return self.base_cell_px * (2 ** layer)

    def members(self, point_index: int, layer: int) -> np.ndarray:
        """All indices sharing the query's cell, the query included."""
        return self.buckets[layer][self.cell_ids[layer][point_index]]

    def neighbors(self, point_index: int, layer: int) -> np.ndarray:
        if not 0 <= layer < self.layer_count:
            raise IndexError(f"layer {layer} out of range [0, {self.layer_count})")
        cell = self.members(point_index, layer)
        return cell[cell != point_index]

    def density_order(self) -> np.ndarray:
        """Indices by descending finest-layer density, ties by original index."""
        return np.lexsort((np.arange(len(self)), -self.density))

    def edges(self, layer: int = 0) -> np.ndarray:
        """Undirected co-cell pairs ``(i, j)`` with ``i < j`` at one layer."""
        pairs = []
        for bucket in self.buckets[layer]:
            if bucket.size < 2:
                continue
            i, j = np.triu_indices(bucket.size, k=1)
            b = np.sort(bucket)
            pairs.append(np.stack([b[i], b[j]], axis=1))
        if not pairs:
            return np.empty((0, 2), dtype=np.int64)
        return np.concatenate(pairs)


def build_grid(data: CorrespondenceSet, base_cell_px: float | None = None,
               layer_count: int = DEFAULT_LAYERS) -> NeighborhoodGrid:
    if base_cell_px is None:
        base_cell_px = default_cell_size(data)
    return NeighborhoodGrid(np.hstack([data.pts1, data.pts2]), base_cell_px, layer_count)


def neighbors(grid: NeighborhoodGrid, point_index: int, layer: int) -> list[int]:
    return grid.neighbors(point_index, layer).tolist()


def density_order(grid: NeighborhoodGrid) -> np.ndarray:
    return grid.density_order()

