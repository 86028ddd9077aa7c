"""Course (item) universe: feature vectors, regions and median splits.

Items live in [0, 1]^d_c. Tree nodes hold regions as lists of internal row
indices into one shared feature matrix; a region splits on dimension
(depth mod d_c) at the lower median, ties going left. When every value ties
(all <= threshold) the left child reuses the parent's list object so the
region content stays shared along forced chains.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DuplicateItemError,
    EmptyRegionError,
    InvalidConfigError,
    InvalidItemError,
)


@dataclass(frozen=True)
class CourseItem:
    """One recommendable item: external integer id plus its feature vector."""

    item_id: int
    features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features",
                           np.asarray(self.features, dtype=np.float64))


def dissimilarity(a: Sequence[float], b: Sequence[float],
                  weights: Optional[Sequence[float]] = None) -> float:
    """Weighted Euclidean distance between two feature vectors.

    weights defaults to all ones; it must be nonnegative and match the arity.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidItemError(f"feature arity mismatch: {a.shape} vs {b.shape}")
    d = a - b
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != a.shape:
            raise InvalidItemError(f"weights arity mismatch: {w.shape} vs {a.shape}")
        if np.any(w < 0):
            raise InvalidItemError("weights must be nonnegative")
        return float(math.sqrt(np.sum(w * d * d)))
    return float(math.sqrt(np.sum(d * d)))


class ItemStore:
    """Append-only item universe backed by one growable feature matrix.

    Rows are internal indices (allocation order); external ids may be any
    distinct integers. ``version`` bumps on every add so per-cell oracle
    caches know to refresh.
    """

    def __init__(self, d_c: int, capacity: int = 64):
        if d_c < 1:
            raise InvalidConfigError(f"d_c must be >= 1, got {d_c}")
        self.d_c = d_c
        self._feat = np.zeros((max(4, capacity), d_c), dtype=np.float64)
        self._ids: list[int] = []
        self._units: list[int] = []
        self._row_of: dict[int, int] = {}
        self.version = 0

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def features(self) -> np.ndarray:
        """View of the live rows (n x d_c). Do not mutate."""
        return self._feat[: len(self._ids)]

    def _validated(self, features: Sequence[float]) -> np.ndarray:
        f = np.asarray(features, dtype=np.float64)
        if f.ndim != 1 or f.shape[0] > self.d_c:
            raise InvalidItemError(
                f"expected at most {self.d_c} features, got shape {f.shape}")
        if np.any(~np.isfinite(f)) or np.any(f < 0.0) or np.any(f > 1.0):
            raise InvalidItemError(f"features outside [0, 1]: {f!r}")
        if f.shape[0] < self.d_c:
            # newly added dimensions of older items default to 0
            f = np.concatenate([f, np.zeros(self.d_c - f.shape[0])])
        return f

    def add(self, item_id: int, features: Sequence[float], unit: int = 1) -> int:
        """Append an item; returns its internal row. Short feature rows are
        zero-padded to d_c."""
        item_id = int(item_id)
        if item_id in self._row_of:
            raise DuplicateItemError(f"item id {item_id} already present")
        if unit < 1:
            raise InvalidConfigError(f"unit ids are 1-based, got {unit}")
        f = self._validated(features)
        row = len(self._ids)
        if row == self._feat.shape[0]:
            grown = np.zeros((2 * row, self.d_c), dtype=np.float64)
            grown[:row] = self._feat
            self._feat = grown
        self._feat[row] = f
        self._ids.append(item_id)
        self._units.append(int(unit))
        self._row_of[item_id] = row
        self.version += 1
        return row

    def extend(self, entries: Iterable[tuple]) -> None:
        """Bulk add of (id, features) or (id, features, unit) tuples."""
        for entry in entries:
            self.add(*entry)

    def item(self, row: int) -> CourseItem:
        return CourseItem(self._ids[row], self._feat[row].copy())

    def row_of(self, item_id: int) -> int:
        return self._row_of[int(item_id)]

    def id_of(self, row: int) -> int:
        return self._ids[row]

    def unit_of(self, row: int) -> int:
        return self._units[row]

    def ids(self) -> list[int]:
        return list(self._ids)

    def rows_of_unit(self, unit: int) -> list[int]:
        return [r for r, u in enumerate(self._units) if u == unit]

    def all_rows(self) -> list[int]:
        return list(range(len(self._ids)))


def lower_median(values: np.ndarray) -> float:
    """Lower median: element at sorted index (n-1)//2 (the exact middle for
    odd n, the smaller of the two middles for even n)."""
    n = values.shape[0]
    if n == 0:
        raise EmptyRegionError("median of an empty region")
    k = (n - 1) // 2
    return float(np.partition(values, k)[k])


def split_region(store: ItemStore, rows: list, depth: int):
    """Split a region on dimension (depth mod d_c) at the lower median.

    Returns (dim, threshold, left_rows, right_rows, shared): items with
    feature <= threshold go left, the rest right. ``shared`` is True when
    every item tied left, in which case left_rows IS the parent list object
    (not a copy) and right_rows is a fresh empty list.
    """
    n = len(rows)
    if n == 0:
        raise EmptyRegionError("cannot split an empty region")
    dim = depth % store.d_c
    if n == 1:
        thr = float(store._feat[rows[0], dim])
        return dim, thr, rows, [], True
    arr = np.asarray(rows, dtype=np.intp)
    vals = store._feat[arr, dim]
    thr = lower_median(vals)
    mask = vals <= thr
    if mask.all():
        return dim, thr, rows, [], True
    return dim, thr, arr[mask].tolist(), arr[~mask].tolist(), False


def region_diam(store: ItemStore, rows: Sequence[int],
                weights: Optional[Sequence[float]] = None) -> float:
    """Max pairwise dissimilarity inside a region; 0 for empty or singleton."""
    n = len(rows)
    if n < 2:
        return 0.0
    f = store._feat[np.asarray(rows, dtype=np.intp)]
    if weights is not None:
        f = f * np.sqrt(np.asarray(weights, dtype=np.float64))
    # n is small in every audit path; the quadratic form is fine
    sq = np.sum(f * f, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (f @ f.T)
    return float(math.sqrt(max(0.0, float(d2.max()))))


def shard_units(item_ids: Sequence[int], n_units: int, rule: str = "round-robin") -> list:
    """Assign 1-based unit ids to items.

    round-robin deals ids out in order; hash uses a stable blake2b digest of
    the decimal id so assignment is reproducible across processes.
    """
    if n_units < 1:
        raise InvalidConfigError(f"n_units must be >= 1, got {n_units}")
    if rule == "round-robin":
        return [1 + (i % n_units) for i in range(len(item_ids))]
    if rule == "hash":
        out = []
        for item_id in item_ids:
            digest = hashlib.blake2b(str(int(item_id)).encode(), digest_size=8).digest()
            out.append(1 + int.from_bytes(digest, "big") % n_units)
        return out
    raise InvalidConfigError(f"unknown shard rule {rule!r}")


def parse_items_file(path: str, d_c: int, with_units: bool = False) -> list:
    """Parse an ingestion file: one item per line, ``id, f1, f2, ...``.

    Feature rows shorter than d_c are zero-padded. With with_units=True a
    trailing integer column is read as the storage unit id. Blank lines and
    ``#`` comments are skipped. Errors carry 1-based line numbers.
    """
    entries = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = [p.strip() for p in text.split(",")]
            try:
                item_id = int(parts[0])
            except ValueError:
                raise InvalidItemError(f"line {lineno}: bad item id {parts[0]!r}")
            if item_id in seen:
                raise DuplicateItemError(f"line {lineno}: duplicate item id {item_id}")
            seen.add(item_id)
            fields = parts[1:]
            unit = 1
            if with_units:
                if len(fields) < 1:
                    raise InvalidItemError(f"line {lineno}: missing unit column")
                try:
                    unit = int(fields[-1])
                except ValueError:
                    raise InvalidItemError(
                        f"line {lineno}: bad unit id {fields[-1]!r}")
                fields = fields[:-1]
            if len(fields) > d_c:
                raise InvalidItemError(
                    f"line {lineno}: {len(fields)} features exceeds d_c={d_c}")
            try:
                feats = [float(v) for v in fields]
            except ValueError:
                raise InvalidItemError(f"line {lineno}: non-numeric feature")
            for v in feats:
                if not (0.0 <= v <= 1.0) or math.isnan(v):
                    raise InvalidItemError(
                        f"line {lineno}: feature {v!r} outside [0, 1]")
            entries.append((item_id, feats, unit))
    return entries
