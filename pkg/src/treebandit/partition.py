"""Uniform hypercube partition of the context space [0, 1]^d_x.

The context space is sliced into n_t equal intervals per coordinate, giving
n_t**d_x congruent cells. One tree bandit instance lives per cell, so the
slicing number trades per-cell sample size against context resolution; the
horizon-optimal choice is (T / ln T)**(alpha / (d_x + alpha*(d_c + 3))).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import HorizonTooSmallError, InvalidConfigError, InvalidContextError

CellId = tuple  # tuple[int, ...], one index per context dimension


def compute_slicing_number(horizon: int, alpha: float, d_x: int, d_c: int) -> int:
    """Per-dimension cell count that balances regret terms at a fixed horizon.

    Returns max(1, floor((T / ln T)**(alpha / (d_x + alpha*(d_c + 3))))).
    """
    if horizon < 3:
        raise HorizonTooSmallError(f"horizon must be >= 3, got {horizon}")
    if not (0.0 < alpha <= 1.0):
        raise InvalidConfigError(f"alpha must be in (0, 1], got {alpha}")
    if d_x < 1 or d_c < 1:
        raise InvalidConfigError(f"d_x and d_c must be >= 1, got {d_x}, {d_c}")
    exponent = alpha / (d_x + alpha * (d_c + 3))
    base = horizon / math.log(horizon)
    return max(1, math.floor(base**exponent))


@dataclass(frozen=True)
class PartitionConfig:
    """Grid geometry plus the context smoothness constants (L_x, alpha).

    n_t may be given explicitly or resolved from a horizon via
    :func:`compute_slicing_number` (see :meth:`resolved`).
    """

    d_x: int
    n_t: int
    alpha: float = 1.0
    l_x: float = 1.0

    def __post_init__(self):
        if self.d_x < 1:
            raise InvalidConfigError(f"d_x must be >= 1, got {self.d_x}")
        if self.n_t < 1:
            raise InvalidConfigError(f"n_t must be >= 1, got {self.n_t}")
        if not (0.0 < self.alpha <= 1.0):
            raise InvalidConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.l_x < 0.0:
            raise InvalidConfigError(f"l_x must be >= 0, got {self.l_x}")

    @classmethod
    def resolved(cls, d_x: int, n_t, horizon: int, d_c: int,
                 alpha: float = 1.0, l_x: float = 1.0) -> "PartitionConfig":
        """Build a config, computing n_t from the horizon when n_t is 'auto'."""
        if n_t in (None, "auto"):
            n_t = compute_slicing_number(horizon, alpha, d_x, d_c)
        return cls(d_x=d_x, n_t=int(n_t), alpha=alpha, l_x=l_x)

    @property
    def cell_count(self) -> int:
        return self.n_t**self.d_x

    def locate_cell(self, x: Sequence[float]) -> CellId:
        """Map a context to the index tuple of its cell.

        The closed upper boundary folds in: a coordinate of exactly 1.0 lands
        in the last cell of that dimension.
        """
        if len(x) != self.d_x:
            raise InvalidContextError(
                f"context has {len(x)} coordinates, expected {self.d_x}")
        cell = []
        for v in x:
            v = float(v)
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise InvalidContextError(f"context coordinate {v!r} outside [0, 1]")
            cell.append(min(int(v * self.n_t), self.n_t - 1))
        return tuple(cell)

    def cell_center(self, cell: CellId) -> np.ndarray:
        """Geometric center of a cell, the point the per-cell oracle is read at."""
        if len(cell) != self.d_x:
            raise InvalidContextError(
                f"cell id has {len(cell)} indices, expected {self.d_x}")
        for i in cell:
            if not (0 <= int(i) < self.n_t):
                raise InvalidContextError(f"cell index {i} outside [0, {self.n_t})")
        return (np.asarray(cell, dtype=np.float64) + 0.5) / self.n_t

    def context_gap(self) -> float:
        """Worst-case mean-reward shift from reading the oracle at the center.

        l_x * (sqrt(d_x) / n_t)**alpha; the cell diameter is sqrt(d_x)/n_t.
        """
        return self.l_x * (math.sqrt(self.d_x) / self.n_t) ** self.alpha

    def iter_cells(self) -> Iterator[CellId]:
        """All cell ids in row-major order."""
        return itertools.product(range(self.n_t), repeat=self.d_x)

    def cell_code(self, cell: CellId) -> int:
        """Flatten a cell id to a single int (row-major), for compact records."""
        code = 0
        for i in cell:
            code = code * self.n_t + int(i)
        return code
