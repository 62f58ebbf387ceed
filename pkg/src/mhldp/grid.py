"""Rectangular grids used to bin empirical measures and discretise kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GridSpec"]


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned box split into ``cells[i]`` equal cells along axis ``i``.

    Cells are numbered in C order (last axis fastest).
    """

    lower: tuple
    upper: tuple
    cells: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        n = tuple(int(v) for v in np.atleast_1d(self.cells))
        if not (len(lo) == len(hi) == len(n)):
            raise ValueError("lower, upper and cells must have the same length")
        if not all(np.isfinite(lo + hi)):
            raise ValueError("grid bounds must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("lower must be below upper on every axis")
        if any(c < 2 for c in n):
            raise ValueError("need at least 2 cells per axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "cells", n)

    @classmethod
    def uniform(cls, lower, upper, cells, dim=1):
        return cls((lower,) * dim, (upper,) * dim, (cells,) * dim)

    @property
    def dim(self):
        return len(self.cells)

    @property
    def size(self):
        return int(np.prod(self.cells))

    @property
    def widths(self):
        return np.array([(b - a) / c for a, b, c in zip(self.lower, self.upper, self.cells)])

    @property
    def cell_volume(self):
        return float(np.prod(self.widths))

    def edges(self, axis):
        return np.linspace(self.lower[axis], self.upper[axis], self.cells[axis] + 1)

    def centers(self):
        """Cell centres as an ``(size, dim)`` array."""
        axes = [0.5 * (e[:-1] + e[1:]) for e in (self.edges(i) for i in range(self.dim))]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def cell_bounds(self, index):
        """Lower and upper corners of cell ``index``."""
        multi = np.unravel_index(index, self.cells)
        w = self.widths
        lo = np.array(self.lower) + np.array(multi) * w
        return lo, lo + w

    def cell_index(self, points):
        """Flat cell index of each point; ``-1`` for points outside the box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim and pts.shape[0] == self.dim and self.dim != 1:
            pts = pts.T
        if self.dim == 1 and pts.shape[1] != 1:
            pts = pts.reshape(-1, 1)
        lo = np.array(self.lower)
        hi = np.array(self.upper)
        rel = (pts - lo) / self.widths
        idx = np.floor(rel).astype(int)
        # the upper face belongs to the last cell
        idx = np.where(pts == hi, np.array(self.cells) - 1, idx)
        inside = np.all((idx >= 0) & (idx < np.array(self.cells)), axis=1)
        flat = np.full(len(pts), -1, dtype=int)
        if np.any(inside):
            flat[inside] = np.ravel_multi_index(tuple(idx[inside].T), self.cells)
        return flat
