"""RHT: one optimistic binary tree bandit per context cell.

Each cell's tree covers the whole item universe at its root and splits
regions by feature medians. A round descends to the child with the larger
estimation value E (exact ties resolved by a fair coin), stops at the first
node whose children are not yet materialized, materializes both children,
and recommends an item drawn uniformly from the reached region. Feedback
walks the path: pull counts and means update incrementally, the optimistic
bound

    B = mean + sqrt(k2 * ln T / pulls) + k1 * m**depth + context_gap

refreshes on every path node, and E = min(B, max(E_left, E_right)) is
recomputed bottom-up (E = B where no children exist yet).

Node statistics live in parallel numpy arrays indexed by node id, and
maximal one-real-child runs ("chains": the sibling region came out empty,
so descent through them is forced) are kept as contiguous index buffers.
That turns the per-round path update and the bottom-up E refresh into a few
vectorized slices; along a chain the refresh is a reversed cumulative
minimum of B, which equals the per-node recursion because the dead sibling
holds E = -inf forever.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    HorizonTooSmallError,
    InvalidConfigError,
    InvalidRewardError,
    NoItemsError,
    ProtocolError,
)
from .items import CourseItem, ItemStore, split_region
from .partition import CellId, PartitionConfig

NO_CHILD = -1


def bound_value(pulls: int, mean: float, depth: int, k2: float, ln_horizon: float,
                k1: float, m: float, context_gap: float) -> float:
    """Optimistic bound of one node; +inf while the node has never been pulled."""
    if pulls == 0:
        return math.inf
    return (mean + math.sqrt(k2 * ln_horizon / pulls)
            + k1 * m**depth + context_gap)


def estimation_value(bound: float, child_estimations=None) -> float:
    """E = min(B, max(children E)); equals B at leaves of the materialized tree."""
    if not child_estimations:
        return bound
    return min(bound, max(child_estimations))


def update_mean(old_mean: float, pulls: int, reward: float) -> float:
    """Incremental mean with ``pulls`` already counting the new reward."""
    if pulls < 1:
        raise InvalidConfigError(f"pulls must be >= 1, got {pulls}")
    if not (0.0 <= reward <= 1.0) or math.isnan(reward):
        raise InvalidRewardError(f"reward {reward!r} outside [0, 1]")
    return ((pulls - 1) * old_mean + reward) / pulls


@dataclass(frozen=True)
class EngineConfig:
    """Horizon-fixed engine constants plus the context partition."""

    horizon: int
    partition: PartitionConfig
    k1: float = 1.0
    m: float = 0.5
    k2: float = 2.0

    def __post_init__(self):
        if self.horizon < 3:
            raise HorizonTooSmallError(
                f"horizon must be >= 3 so ln T > 1, got {self.horizon}")
        if self.k1 < 0.0:
            raise InvalidConfigError(f"k1 must be >= 0, got {self.k1}")
        if not (0.0 < self.m < 1.0):
            raise InvalidConfigError(f"m must be in (0, 1), got {self.m}")
        if self.k2 < 0.0:
            raise InvalidConfigError(f"k2 must be >= 0, got {self.k2}")


class _Chain:
    """A maximal forced run of one-real-child nodes, top to bottom.

    ``landing`` is the node descent reaches after the last member; it joins
    the chain itself if its own split later comes out one-sided.
    """

    __slots__ = ("idx", "n", "landing")

    def __init__(self, top: int):
        self.idx = np.empty(8, dtype=np.intp)
        self.idx[0] = top
        self.n = 1
        self.landing = NO_CHILD

    def append(self, node: int) -> None:
        if self.n == self.idx.shape[0]:
            grown = np.empty(2 * self.n, dtype=np.intp)
            grown[: self.n] = self.idx
            self.idx = grown
        self.idx[self.n] = node
        self.n += 1

    def view(self) -> np.ndarray:
        return self.idx[: self.n]


class CellArena:
    """Node storage for one cell: parallel arrays plus region lists."""

    def __init__(self, store: ItemStore, k1: float, m: float, context_gap: float,
                 k2_ln_horizon: float):
        self.store = store
        self.k1 = k1
        self.m = m
        self.gap = context_gap
        self.k2_ln_horizon = k2_ln_horizon
        cap = 64
        self.depth = np.zeros(cap, dtype=np.int64)
        self.parent = np.full(cap, NO_CHILD, dtype=np.intp)
        self.left = np.full(cap, NO_CHILD, dtype=np.intp)
        self.right = np.full(cap, NO_CHILD, dtype=np.intp)
        self.t = np.zeros(cap, dtype=np.int64)
        self.mu = np.zeros(cap, dtype=np.float64)
        self.b = np.full(cap, np.inf, dtype=np.float64)
        self.e = np.full(cap, np.inf, dtype=np.float64)
        self.geo = np.zeros(cap, dtype=np.float64)
        self.split_dim = np.full(cap, -1, dtype=np.int64)
        self.split_thr = np.full(cap, np.nan, dtype=np.float64)
        self.dead = np.zeros(cap, dtype=bool)
        self.virtual = np.zeros(cap, dtype=bool)
        self.regions: list[list] = []
        self.roots: list[int] = []
        self.preseeded_roots = False
        self.n = 0
        self.rounds = 0
        self._chain_at: dict[int, _Chain] = {}
        self._landing_of: dict[int, _Chain] = {}

    def _grow(self) -> None:
        cap = 2 * self.depth.shape[0]
        for name in ("depth", "parent", "left", "right", "t", "mu", "b", "e",
                     "geo", "split_dim", "split_thr", "dead", "virtual"):
            old = getattr(self, name)
            grown = np.empty(cap, dtype=old.dtype)
            grown[: self.n] = old[: self.n]
            setattr(self, name, grown)

    def alloc(self, depth: int, parent: int, region: list,
              dead: bool = False, virtual: bool = False) -> int:
        i = self.n
        if i == self.depth.shape[0]:
            self._grow()
        self.depth[i] = depth
        self.parent[i] = parent
        self.left[i] = NO_CHILD
        self.right[i] = NO_CHILD
        self.t[i] = 0
        self.mu[i] = 0.0
        self.geo[i] = self.k1 * self.m**depth + self.gap
        self.split_dim[i] = -1
        self.split_thr[i] = np.nan
        self.dead[i] = dead
        self.virtual[i] = virtual
        if virtual:
            self.b[i] = 0.0
            self.e[i] = 0.0
        elif dead:
            # empty region: keep E = B = -inf so the leaf identity holds and
            # the node can never win a descent comparison
            self.b[i] = -np.inf
            self.e[i] = -np.inf
        else:
            self.b[i] = np.inf
            self.e[i] = np.inf
        self.regions.append(region)
        self.n = i + 1
        return i

    def add_root(self, depth: int, region: list, virtual: bool = False) -> int:
        i = self.alloc(depth, NO_CHILD, region, dead=virtual, virtual=virtual)
        self.roots.append(i)
        return i

    def descend(self, start: int, rng: np.random.Generator):
        """Greedy E-descent from ``start`` to the first node without children.

        Returns (parts, end): the path as a list of parts, each either a
        Python list of node ids (decision nodes, in path order) or a numpy
        array (a whole forced chain). ``end`` is the path's last node.
        """
        parts: list = []
        singles: list = []
        chain_at = self._chain_at
        left, right, e = self.left, self.right, self.e
        node = start
        while True:
            chain = chain_at.get(node)
            if chain is not None:
                if singles:
                    parts.append(singles)
                    singles = []
                parts.append(chain.view())
                node = chain.landing
                continue
            singles.append(node)
            l = left[node]
            if l < 0:
                break
            r = right[node]
            el, er = e[l], e[r]
            if el > er:
                node = l
            elif el < er:
                node = r
            else:
                node = l if rng.integers(0, 2) == 1 else r
        parts.append(singles)
        return parts, int(node)

    def materialize(self, end: int) -> None:
        """Split ``end``'s region and attach both children (pulls 0, B=E=+inf;
        an empty right child is born dead with E=-inf)."""
        rows = self.regions[end]
        h = int(self.depth[end])
        dim, thr, left_rows, right_rows, one_sided = split_region(self.store, rows, h)
        li = self.alloc(h + 1, end, left_rows)
        ri = self.alloc(h + 1, end, right_rows, dead=not right_rows)
        self.left[end] = li
        self.right[end] = ri
        self.split_dim[end] = dim
        self.split_thr[end] = thr
        if one_sided:
            chain = self._landing_of.pop(end, None)
            if chain is None:
                chain = _Chain(end)
                self._chain_at[end] = chain
            else:
                chain.append(end)
            chain.landing = li
            self._landing_of[li] = chain
        else:
            self._landing_of.pop(end, None)

    def apply_reward(self, parts: Sequence, reward: float) -> None:
        """Walk the path: pulls += 1, incremental mean, bound refresh, then the
        bottom-up E refresh (chains via reversed cumulative minimum)."""
        t, mu, b, e, geo = self.t, self.mu, self.b, self.e, self.geo
        k2lnt = self.k2_ln_horizon
        arrays = [part if isinstance(part, np.ndarray)
                  else np.asarray(part, dtype=np.intp) for part in parts]
        flat = arrays[0] if len(arrays) == 1 else np.concatenate(arrays)
        t[flat] += 1
        tf = t[flat].astype(np.float64)
        mu[flat] = ((tf - 1.0) * mu[flat] + reward) / tf
        b[flat] = mu[flat] + np.sqrt(k2lnt / tf) + geo[flat]
        left, right = self.left, self.right
        for pos in range(len(parts) - 1, -1, -1):
            part = parts[pos]
            if isinstance(part, np.ndarray):
                below = arrays[pos + 1][0]
                rev = b[part][::-1].copy()
                eb = e[below]
                if rev[0] > eb:
                    rev[0] = eb
                np.minimum.accumulate(rev, out=rev)
                e[part] = rev[::-1]
            else:
                for node in reversed(part):
                    el, er = e[left[node]], e[right[node]]
                    em = el if el >= er else er
                    bn = b[node]
                    e[node] = bn if bn <= em else em
        self.rounds += 1

    # ---- inspection helpers (tests, audits, checkpoints) ----

    def node_rank(self, idx: int) -> int:
        """1-based rank of a node within its depth (exact integer; the root
        chain doubles per level so this is test-scale only)."""
        hops = []
        node = idx
        while self.parent[node] != NO_CHILD:
            p = int(self.parent[node])
            hops.append(0 if int(self.left[p]) == int(node) else 1)
            node = p
        rank = self.roots.index(int(node)) + 1
        for is_right in reversed(hops):
            rank = 2 * rank - 1 + is_right
        return rank

    def find_node(self, depth: int, rank: int) -> Optional[int]:
        """Node id at (depth, rank) if materialized, else None."""
        for i in range(self.n):
            if int(self.depth[i]) == depth and self.node_rank(i) == rank:
                return i
        return None

    def gamma_size(self) -> int:
        """Explored-set size: nodes that ever ended a path, plus any roots
        pre-seeded into the explored set (the sharded forest does that)."""
        selected = int(np.count_nonzero(self.t[: self.n] >= 1))
        if not self.preseeded_roots:
            return selected
        unselected_roots = sum(1 for r in self.roots if self.t[r] == 0)
        return selected + unselected_roots


class Recommendation:
    """Round token pairing one recommend() with exactly one feedback()."""

    __slots__ = ("item", "cell", "arena", "parts", "end", "row", "consumed")

    def __init__(self, item: CourseItem, cell: CellId, arena: CellArena,
                 parts: list, end: int, row: int):
        self.item = item
        self.cell = cell
        self.arena = arena
        self.parts = parts
        self.end = end
        self.row = row
        self.consumed = False

    @property
    def path_nodes(self) -> list[int]:
        """Node ids of the served path, root first."""
        out: list[int] = []
        for part in self.parts:
            out.extend(int(v) for v in part)
        return out


class RhtEngine:
    """Contextual tree bandit: one lazily created CellArena per context cell."""

    def __init__(self, store: ItemStore, config: EngineConfig,
                 rng: np.random.Generator | int):
        self.store = store
        self.config = config
        self.rng = rng if isinstance(rng, np.random.Generator) else \
            np.random.Generator(np.random.PCG64(rng))
        self.ln_horizon = math.log(config.horizon)
        self.cells: dict[CellId, CellArena] = {}
        self.total_rounds = 0
        self._pending: dict[CellId, Recommendation] = {}

    # ---- arena construction (overridden by the sharded forest) ----

    def _new_arena(self) -> CellArena:
        arena = CellArena(self.store, self.config.k1, self.config.m,
                          self.config.partition.context_gap(),
                          self.config.k2 * self.ln_horizon)
        arena.add_root(0, self.store.all_rows())
        return arena

    def _entry(self, arena: CellArena) -> int:
        return arena.roots[0]

    # ---- the recommend/feedback protocol ----

    def arena(self, cell: CellId) -> CellArena:
        if cell not in self.cells:
            self.cells[cell] = self._new_arena()
        return self.cells[cell]

    def recommend(self, x: Sequence[float]) -> Recommendation:
        """Serve one context: returns the chosen item plus the path token that
        the paired feedback() call must present."""
        cell = self.config.partition.locate_cell(x)
        if len(self.store) == 0:
            raise NoItemsError("no items ingested")
        if cell in self._pending:
            raise ProtocolError(f"cell {cell} already has an outstanding round")
        arena = self.arena(cell)
        parts, end = arena.descend(self._entry(arena), self.rng)
        arena.materialize(end)
        rows = arena.regions[end]
        row = rows[int(self.rng.integers(0, len(rows)))] if len(rows) > 1 else rows[0]
        rec = Recommendation(self.store.item(row), cell, arena, parts, end, row)
        self._pending[cell] = rec
        return rec

    def feedback(self, rec: Recommendation, reward: float) -> None:
        """Close the round: path statistics update along rec's path."""
        if rec.consumed:
            raise ProtocolError("feedback already given for this recommendation")
        if self._pending.get(rec.cell) is not rec:
            raise ProtocolError("token does not match this engine's pending round")
        reward = float(reward)
        if not (0.0 <= reward <= 1.0) or math.isnan(reward):
            raise InvalidRewardError(f"reward {reward!r} outside [0, 1]")
        rec.arena.apply_reward(rec.parts, reward)
        rec.consumed = True
        del self._pending[rec.cell]
        self.total_rounds += 1

    def has_pending(self) -> bool:
        return bool(self._pending)

    # ---- streaming arrival ----

    def add_course(self, item_id: int, features: Sequence[float], unit: int = 1) -> None:
        """Ingest one item mid-run: it joins the store and is routed down every
        existing tree by the recorded splits. No node statistics change."""
        if self._pending:
            raise ProtocolError("cannot add items while a round is outstanding")
        row = self.store.add(item_id, features, unit=unit)
        f = self.store.features[row]
        for arena in self.cells.values():
            self._route_new_row(arena, row, f)

    def _route_start(self, arena: CellArena, row: int) -> int:
        return arena.roots[0]

    def _route_new_row(self, arena: CellArena, row: int, f: np.ndarray) -> None:
        # Walk first, append after: a right-bound arrival at a one-sided split
        # must sever the region object shared down the left spine before the
        # row lands anywhere, or it would leak into off-path regions.
        node = self._route_start(arena, row)
        path = [node]
        while arena.left[node] >= 0:
            li = int(arena.left[node])
            if f[arena.split_dim[node]] <= arena.split_thr[node]:
                node = li
            else:
                if arena.regions[li] is arena.regions[node]:
                    self._unshare_spine(arena, li)
                node = int(arena.right[node])
            path.append(node)
        last_region = None
        for n in path:
            region = arena.regions[n]
            if region is not last_region:
                region.append(row)
                last_region = region

    @staticmethod
    def _unshare_spine(arena: CellArena, top: int) -> None:
        shared = arena.regions[top]
        fresh = list(shared)
        j = top
        while j >= 0 and arena.regions[j] is shared:
            arena.regions[j] = fresh
            j = int(arena.left[j])

    # ---- counters ----

    def node_count(self) -> int:
        return sum(a.n for a in self.cells.values())

    def rounds_in_cell(self, cell: CellId) -> int:
        arena = self.cells.get(cell)
        return arena.rounds if arena is not None else 0

    def per_cell_nodes(self) -> dict[CellId, int]:
        return {cell: a.n for cell, a in self.cells.items()}
