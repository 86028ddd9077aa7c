"""DSRHT: the tree bandit sharded across storage units.

Items are distributed over d storage units. Per context cell the engine
keeps a forest of 2**z subtrees rooted at depth z, one per unit slot with
2**(z-1) < d <= 2**z; slots beyond d are virtual, hold no items and keep
B = E = 0 forever so they are never selected. A round first picks the
depth-z root with the largest E (first one wins ties, via a strict-< scan)
and then descends inside that subtree exactly like the single-tree engine.
With z = 0 the forest degenerates to one root and the behavior is
bit-identical to RhtEngine.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import HorizonTooSmallError, InvalidConfigError
from .items import ItemStore
from .rht import CellArena, EngineConfig, RhtEngine


def depth_for_units(units: int) -> int:
    """Minimal forest depth z with units <= 2**z (so 2**(z-1) < units <= 2**z)."""
    if units < 1:
        raise InvalidConfigError(f"units must be >= 1, got {units}")
    return (units - 1).bit_length()


def _unit_exponent(alpha: float, d_x: int, d_c: int) -> float:
    return (d_x + alpha * d_c) / (d_x + alpha * (d_c + 3))


def optimal_unit_exponent(horizon: int, alpha: float, d_x: int, d_c: int) -> int:
    """Largest z whose 2**z stays below the horizon-optimal unit count
    (T / ln T)**((d_x + alpha*d_c) / (d_x + alpha*(d_c + 3)))."""
    if horizon < 3:
        raise HorizonTooSmallError(f"horizon must be >= 3, got {horizon}")
    log2_bound = _unit_exponent(alpha, d_x, d_c) * math.log2(horizon / math.log(horizon))
    return max(0, math.floor(log2_bound))


def check_unit_condition(units: int, horizon: int, alpha: float,
                         d_x: int, d_c: int) -> bool:
    """True iff units <= 2**z <= (T/lnT)**((d_x+alpha*d_c)/(d_x+alpha*(d_c+3)))
    for z = depth_for_units(units), i.e. the regret guarantee covers this d."""
    if horizon < 3:
        raise HorizonTooSmallError(f"horizon must be >= 3, got {horizon}")
    z = depth_for_units(units)
    log2_bound = _unit_exponent(alpha, d_x, d_c) * math.log2(horizon / math.log(horizon))
    return z <= log2_bound


def select_top_region(estimations: Sequence[float]) -> int:
    """Index of the max estimation by a strict-< left-to-right scan, so the
    lowest rank wins ties. np.argmax agrees; this is the reference form."""
    best = 0
    for j in range(1, len(estimations)):
        if estimations[best] < estimations[j]:
            best = j
    return best


class DsrhtEngine(RhtEngine):
    """Forest-per-cell engine over ``units`` storage units at depth ``z``.

    z may be an int (>= depth_for_units(units)), "auto-min" for exactly that
    minimum, or "auto-optimal" for optimal_unit_exponent at the horizon.
    """

    def __init__(self, store: ItemStore, config: EngineConfig, units: int,
                 z="auto-min", rng: np.random.Generator | int = 0):
        super().__init__(store, config, rng)
        if units < 1:
            raise InvalidConfigError(f"units must be >= 1, got {units}")
        z_min = depth_for_units(units)
        if z == "auto-min":
            z = z_min
        elif z == "auto-optimal":
            z = optimal_unit_exponent(config.horizon, config.partition.alpha,
                                      config.partition.d_x, store.d_c)
        z = int(z)
        if z < z_min:
            raise InvalidConfigError(
                f"2**{z} slots cannot hold {units} units (need z >= {z_min})")
        self.units = units
        self.z = z

    def _new_arena(self) -> CellArena:
        arena = CellArena(self.store, self.config.k1, self.config.m,
                          self.config.partition.context_gap(),
                          self.config.k2 * self.ln_horizon)
        for unit in range(1, self.units + 1):
            rows = self.store.rows_of_unit(unit)
            if not rows:
                raise InvalidConfigError(f"real unit {unit} holds no items")
            arena.add_root(self.z, rows)
        for _ in range(self.units + 1, 2**self.z + 1):
            arena.add_root(self.z, [], virtual=True)
        arena.roots_arr = np.asarray(arena.roots, dtype=np.intp)
        arena.preseeded_roots = True
        return arena

    def _entry(self, arena: CellArena) -> int:
        if len(arena.roots) == 1:
            return arena.roots[0]
        return int(arena.roots_arr[int(np.argmax(arena.e[arena.roots_arr]))])

    def _route_start(self, arena: CellArena, row: int) -> int:
        return arena.roots[self.store.unit_of(row) - 1]

    def add_course(self, item_id: int, features, unit: int = 1) -> None:
        if not (1 <= unit <= self.units):
            raise InvalidConfigError(
                f"unit {unit} outside the real range 1..{self.units}")
        super().add_course(item_id, features, unit=unit)
