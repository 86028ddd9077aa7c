"""Synthetic reward environments with a computable per-cell oracle.

The default "distance-peak" family puts a seeded ideal feature point g(x)
in course space and pays more the closer an item sits to it:

    f(x, c) = (1 - 2*sigma) * (1 - min(1, a * ||c - g(x)||)) + sigma

so f ranges over [sigma, 1 - sigma] and uniform(-sigma, sigma) noise keeps
observed rewards inside [0, 1]. g is an affine-then-clip map of the context
whose weight matrix is spectrally scaled so that f is (l_x, alpha)-Holder in
x by construction; distinct cells still see distinct optima because g moves
across the grid. The "context-free" family freezes g, giving a flat
environment for fairness baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidConfigError, NoItemsError
from .items import ItemStore

FAMILIES = ("distance-peak", "context-free")


@dataclass(frozen=True)
class RewardModelConfig:
    family: str = "distance-peak"
    d_x: int = 2
    d_c: int = 3
    sigma: float = 0.1
    sharpness: float = 1.0
    seed: int = 0
    l_x: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidConfigError(f"unknown family {self.family!r}")
        if not (0.0 <= self.sigma < 0.5):
            raise InvalidConfigError(
                f"sigma must satisfy 0 <= sigma < 0.5, got {self.sigma}")
        if self.sharpness <= 0.0:
            raise InvalidConfigError(f"sharpness must be > 0, got {self.sharpness}")
        if self.d_x < 1 or self.d_c < 1:
            raise InvalidConfigError("d_x and d_c must be >= 1")
        if not (0.0 < self.alpha <= 1.0):
            raise InvalidConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.l_x < 0.0:
            raise InvalidConfigError(f"l_x must be >= 0, got {self.l_x}")


class RewardModel:
    """Mean-reward surface plus bounded noise; all randomness is seeded."""

    def __init__(self, config: RewardModelConfig):
        self.config = config
        rng = np.random.Generator(np.random.PCG64(config.seed))
        self._base = 0.25 + 0.5 * rng.random(config.d_c)
        if config.family == "context-free" or config.l_x == 0.0:
            self._w = np.zeros((config.d_c, config.d_x))
        else:
            w = rng.standard_normal((config.d_c, config.d_x))
            spectral = np.linalg.norm(w, 2)
            # scale so |f(x,.) - f(x',.)| <= l_x * ||x - x'||**alpha everywhere:
            # the Holder slack on a domain of diameter sqrt(d_x) costs
            # d_x**((1-alpha)/2)
            target = config.l_x / (config.sharpness * (1.0 - 2.0 * config.sigma)
                                   * config.d_x ** ((1.0 - config.alpha) / 2.0))
            self._w = w * (target / spectral)

    def ideal_point(self, x: Sequence[float]) -> np.ndarray:
        """The feature vector that earns the peak reward 1 - sigma at x."""
        x = np.asarray(x, dtype=np.float64)
        return np.clip(self._base + self._w @ (x - 0.5), 0.0, 1.0)

    def mean_reward(self, x: Sequence[float], features: Sequence[float]) -> float:
        g = self.ideal_point(x)
        dist = float(np.linalg.norm(np.asarray(features, dtype=np.float64) - g))
        sigma, a = self.config.sigma, self.config.sharpness
        return (1.0 - 2.0 * sigma) * (1.0 - min(1.0, a * dist)) + sigma

    def mean_reward_batch(self, x: Sequence[float], features: np.ndarray) -> np.ndarray:
        """Vectorized mean rewards for an (n, d_c) feature matrix at one x."""
        diff = features - self.ideal_point(x)
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        sigma, a = self.config.sigma, self.config.sharpness
        return (1.0 - 2.0 * sigma) * (1.0 - np.minimum(1.0, a * dist)) + sigma

    def sample_reward(self, x: Sequence[float], features: Sequence[float],
                      rng: np.random.Generator) -> float:
        """Observed reward: mean plus uniform(-sigma, sigma); exact when sigma=0."""
        mean = self.mean_reward(x, features)
        sigma = self.config.sigma
        if sigma == 0.0:
            return mean
        return mean + float(rng.uniform(-sigma, sigma))


def oracle_best(model: RewardModel, x: Sequence[float], store: ItemStore):
    """Best item by mean reward at x: returns (row, item_id, value).

    Exact-value ties break toward the lowest external item id.
    """
    if len(store) == 0:
        raise NoItemsError("oracle over an empty item store")
    vals = model.mean_reward_batch(x, store.features)
    best = float(vals.max())
    rows = np.nonzero(vals == best)[0]
    row = int(min(rows, key=store.id_of))
    return row, store.id_of(row), best


@dataclass(frozen=True)
class ContextStreamConfig:
    """Context arrival law: iid uniform, or a weighted mixture over the cells
    of an n**d_x grid (uniform within the drawn cell)."""

    kind: str = "uniform"
    d_x: int = 2
    grid: int = 1
    weights: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "mixture-of-cells"):
            raise InvalidConfigError(f"unknown context stream kind {self.kind!r}")
        if self.d_x < 1:
            raise InvalidConfigError("d_x must be >= 1")
        if self.kind == "mixture-of-cells":
            if self.grid < 1:
                raise InvalidConfigError("grid must be >= 1")
            n_cells = self.grid**self.d_x
            if self.weights is not None:
                w = np.asarray(self.weights, dtype=np.float64)
                if w.shape != (n_cells,) or np.any(w < 0) or w.sum() <= 0:
                    raise InvalidConfigError(
                        f"weights must be {n_cells} nonnegative numbers")


class ContextStream:
    def __init__(self, config: ContextStreamConfig):
        self.config = config
        if config.kind == "mixture-of-cells":
            n_cells = config.grid**config.d_x
            w = (np.full(n_cells, 1.0 / n_cells) if config.weights is None
                 else np.asarray(config.weights, dtype=np.float64))
            self._weights = w / w.sum()
        else:
            self._weights = None

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        cfg = self.config
        if cfg.kind == "uniform":
            return rng.random(cfg.d_x)
        flat = int(rng.choice(self._weights.shape[0], p=self._weights))
        cell = np.empty(cfg.d_x, dtype=np.float64)
        for k in range(cfg.d_x - 1, -1, -1):
            cell[k] = flat % cfg.grid
            flat //= cfg.grid
        return (cell + rng.random(cfg.d_x)) / cfg.grid
