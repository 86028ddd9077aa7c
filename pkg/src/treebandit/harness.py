"""Seeded experiment harness: regret, accuracy and storage reporting.

Regret is the expected-loss form: each round is graded at the evaluation
cell's center as oracle_mean(center) - chosen_mean(center), so reward noise
never enters the metric and instantaneous regret is nonnegative by
construction. Grading against the exact context instead would fold in the
context-discretization term; that difference is accumulated separately and
reported as the discretization_regret column. The evaluation partition
defaults to the engine's own; comparative experiments pass eval_n_t so every
policy is graded by the same oracle.
"""

from __future__ import annotations

import csv
import io
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .dsrht import DsrhtEngine
from .environment import (
    ContextStream,
    ContextStreamConfig,
    RewardModel,
    RewardModelConfig,
)
from .errors import (
    HorizonTooSmallError,
    InvalidConfigError,
    InvalidRewardError,
    InvariantViolationError,
    NoItemsError,
    ProtocolError,
)
from .items import ItemStore, shard_units
from .partition import PartitionConfig, compute_slicing_number
from .rht import EngineConfig, RhtEngine

POLICIES = ("rht-full", "rht-nocontext", "dsrht", "uniform-random")

CSV_COLUMNS = ("run_id", "policy", "seed", "T", "cum_regret", "avg_regret",
               "accuracy", "nodes", "discretization_regret")


# ---- exponents and slope fitting ----

def theoretical_exponent(alpha: float, d_x: int, d_c: int) -> float:
    """Regret growth exponent (d_x + alpha*(d_c+2)) / (d_x + alpha*(d_c+3))."""
    if not (0.0 < alpha <= 1.0):
        raise InvalidConfigError(f"alpha must be in (0, 1], got {alpha}")
    if d_x < 1 or d_c < 1:
        raise InvalidConfigError("d_x and d_c must be >= 1")
    return (d_x + alpha * (d_c + 2)) / (d_x + alpha * (d_c + 3))


def fit_regret_slope(checkpoints: Sequence[tuple]) -> float:
    """Least-squares slope of log R against log T over (T_i, R_i) pairs.

    Nonpositive R_i are excluded with a warning; T_i must be strictly
    increasing and at least 3 pairs are required up front.
    """
    pts = [(int(t), float(r)) for t, r in checkpoints]
    if len(pts) < 3:
        raise InvalidConfigError(f"need >= 3 checkpoints, got {len(pts)}")
    ts = [t for t, _ in pts]
    if any(b <= a for a, b in zip(ts, ts[1:])) or ts[0] <= 0:
        raise InvalidConfigError("checkpoint horizons must be positive and strictly increasing")
    kept = [(t, r) for t, r in pts if r > 0.0]
    if len(kept) < len(pts):
        warnings.warn(f"excluded {len(pts) - len(kept)} nonpositive-regret "
                      "checkpoints from the slope fit", stacklevel=2)
    if len(kept) < 2:
        raise InvalidConfigError("fewer than 2 positive-regret checkpoints remain")
    log_t = np.log([t for t, _ in kept])
    log_r = np.log([r for _, r in kept])
    return float(np.polyfit(log_t, log_r, 1)[0])


# ---- storage accounting ----

@dataclass(frozen=True)
class StorageCounters:
    nodes: int
    items: int
    per_cell: dict


def storage_counters(engine) -> StorageCounters:
    """Exact materialized-node and item counts with a per-cell breakdown."""
    per_cell = dict(sorted(engine.per_cell_nodes().items()))
    return StorageCounters(engine.node_count(), len(engine.store), per_cell)


# ---- experiment specification ----

@dataclass(frozen=True)
class EngineSpec:
    policy: str = "rht-full"
    n_t: Optional[int] = None  # None resolves from the horizon
    k1: float = 1.0
    m: float = 0.5
    k2: float = 2.0
    units: int = 1
    z: object = "auto-min"
    shard: str = "round-robin"

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise InvalidConfigError(
                f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.n_t is not None and self.n_t < 1:
            raise InvalidConfigError(f"n_t must be >= 1, got {self.n_t}")


@dataclass(frozen=True)
class EnvSpec:
    family: str = "distance-peak"
    d_x: int = 2
    d_c: int = 3
    n_items: int = 256
    sigma: float = 0.1
    sharpness: float = 2.0
    alpha: float = 1.0
    l_x: float = 1.0
    env_seed: int = 0
    context_kind: str = "uniform"
    context_grid: int = 1
    context_weights: Optional[tuple] = None

    def __post_init__(self):
        if self.n_items < 1:
            raise InvalidConfigError(f"n_items must be >= 1, got {self.n_items}")
        # the reward model and context stream configs re-validate their fields
        self.reward_config()
        ContextStreamConfig(kind=self.context_kind, d_x=self.d_x,
                            grid=self.context_grid, weights=self.context_weights)

    def reward_config(self) -> RewardModelConfig:
        return RewardModelConfig(family=self.family, d_x=self.d_x, d_c=self.d_c,
                                 sigma=self.sigma, sharpness=self.sharpness,
                                 seed=self.env_seed, l_x=self.l_x, alpha=self.alpha)


@dataclass(frozen=True)
class ExperimentConfig:
    engine: EngineSpec = EngineSpec()
    env: EnvSpec = EnvSpec()
    horizon: int = 1024
    replicas: int = 1
    base_seed: int = 0
    checkpoints: Optional[tuple] = None  # None -> powers of two up to horizon
    eval_n_t: Optional[int] = None       # None -> the engine's own partition
    arrive_rate: float = 0.0             # streamed items per 1000 rounds
    run_id: str = "run"
    jobs: int = 1

    def __post_init__(self):
        if self.horizon < 3:
            raise HorizonTooSmallError(
                f"horizon must be >= 3, got {self.horizon}")
        if self.replicas < 1:
            raise InvalidConfigError(f"replicas must be >= 1, got {self.replicas}")
        if self.arrive_rate < 0:
            raise InvalidConfigError(f"arrive_rate must be >= 0, got {self.arrive_rate}")
        if self.jobs < 1:
            raise InvalidConfigError(f"jobs must be >= 1, got {self.jobs}")

    def seeds(self) -> tuple:
        return tuple(self.base_seed + k for k in range(self.replicas))

    def checkpoint_grid(self) -> tuple:
        if self.checkpoints is not None:
            cps = tuple(int(c) for c in self.checkpoints)
            if any(b <= a for a, b in zip(cps, cps[1:])) or cps[0] < 1 or cps[-1] > self.horizon:
                raise InvalidConfigError("checkpoints must be increasing and within the horizon")
            return cps
        cps = [2**k for k in range(1, self.horizon.bit_length())
               if 2**k <= self.horizon]
        if not cps or cps[-1] != self.horizon:
            cps.append(self.horizon)
        return tuple(cps)


def resolve_n_t(spec: EngineSpec, env: EnvSpec, horizon: int) -> int:
    if spec.policy == "rht-nocontext":
        return 1
    if spec.n_t is not None:
        return spec.n_t
    return compute_slicing_number(horizon, env.alpha, env.d_x, env.d_c)


def build_items(env: EnvSpec, units: int, shard: str) -> ItemStore:
    """Deterministic synthetic universe: n_items uniform feature vectors."""
    rng = np.random.Generator(np.random.PCG64((env.env_seed, 101)))
    feats = rng.random((env.n_items, env.d_c))
    ids = list(range(1, env.n_items + 1))
    unit_of = shard_units(ids, units, shard) if units > 1 else None
    store = ItemStore(d_c=env.d_c)
    for i, item_id in enumerate(ids):
        store.add(item_id, feats[i], unit=1 if unit_of is None else int(unit_of[i]))
    return store


def build_engine(spec: EngineSpec, env: EnvSpec, horizon: int,
                 store: ItemStore, rng):
    if spec.policy == "uniform-random":
        return UniformRandomPolicy(store, rng)
    part = PartitionConfig(d_x=env.d_x, n_t=resolve_n_t(spec, env, horizon),
                           alpha=env.alpha, l_x=env.l_x)
    cfg = EngineConfig(horizon=horizon, partition=part,
                       k1=spec.k1, m=spec.m, k2=spec.k2)
    if spec.policy == "dsrht":
        return DsrhtEngine(store, cfg, units=spec.units, z=spec.z, rng=rng)
    return RhtEngine(store, cfg, rng=rng)


def baseline_configs(units: int = 8) -> dict:
    """Named engine specs used throughout the comparative experiments."""
    return {
        "rht-full": EngineSpec(policy="rht-full"),
        "rht-nocontext": EngineSpec(policy="rht-nocontext"),
        "dsrht-z0": EngineSpec(policy="dsrht", units=1, z=0),
        "dsrht-z10": EngineSpec(policy="dsrht", units=1024, z=10),
        "dsrht-zopt": EngineSpec(policy="dsrht", units=units, z="auto-optimal"),
        "uniform-random": EngineSpec(policy="uniform-random"),
    }


# ---- the no-learning floor policy ----

class _RandomPick:
    __slots__ = ("row", "item", "consumed")


class UniformRandomPolicy:
    """Floor baseline: ignores context and statistics, picks uniformly."""

    def __init__(self, store: ItemStore, rng):
        self.store = store
        self.rng = rng if isinstance(rng, np.random.Generator) \
            else np.random.Generator(np.random.PCG64(rng))
        self.total_rounds = 0
        self._pending = None

    def recommend(self, x):
        if self._pending is not None:
            raise ProtocolError("previous round still awaits feedback")
        if len(self.store) == 0:
            raise NoItemsError("no items ingested")
        rec = _RandomPick()
        rec.row = int(self.rng.integers(0, len(self.store)))
        rec.item = self.store.item(rec.row)
        rec.consumed = False
        self._pending = rec
        return rec

    def feedback(self, rec, reward: float) -> None:
        if rec.consumed or rec is not self._pending:
            raise ProtocolError("feedback token does not match the open round")
        r = float(reward)
        if not (0.0 <= r <= 1.0):
            raise InvalidRewardError(f"reward must lie in [0, 1], got {reward}")
        rec.consumed = True
        self._pending = None
        self.total_rounds += 1

    def has_pending(self) -> bool:
        return self._pending is not None

    def add_course(self, item_id: int, features, unit: int = 1) -> None:
        if self._pending is not None:
            raise ProtocolError("cannot add items while a round is outstanding")
        self.store.add(item_id, features, unit=unit)

    def node_count(self) -> int:
        return 0

    def per_cell_nodes(self) -> dict:
        return {}


# ---- oracle bookkeeping ----

class OracleCache:
    """Item means at each evaluation cell center, stamped with the store
    version so streamed arrivals invalidate entries lazily."""

    def __init__(self, model: RewardModel, part: PartitionConfig, store: ItemStore):
        self.model = model
        self.part = part
        self.store = store
        self._cells = {}

    def lookup(self, x):
        """Returns (cell code, oracle value, means vector) for context x."""
        cell = self.part.locate_cell(x)
        code = self.part.cell_code(cell)
        hit = self._cells.get(code)
        if hit is None or hit[0] != self.store.version:
            means = self.model.mean_reward_batch(self.part.cell_center(cell),
                                                 self.store.features)
            hit = (self.store.version, means, float(means.max()))
            self._cells[code] = hit
        return code, hit[2], hit[1]


# ---- replica loop ----

@dataclass
class RunRecord:
    """Per-round trace of one replica (struct of arrays, index = round - 1)."""
    seed: int
    t: np.ndarray
    cell: np.ndarray
    item_id: np.ndarray
    reward: np.ndarray
    oracle: np.ndarray
    chosen_mean: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    cum_exact_regret: np.ndarray
    nodes: np.ndarray

    def accuracy_at(self, t: int) -> float:
        return float(np.sum(self.chosen_mean[:t])) / t

    def discretization_at(self, t: int) -> float:
        return float(self.cum_exact_regret[t - 1] - self.cum_regret[t - 1])


def eval_partition(config: ExperimentConfig) -> PartitionConfig:
    env = config.env
    n_t = config.eval_n_t
    if n_t is None:
        if config.engine.policy == "uniform-random":
            n_t = 1
        else:
            n_t = resolve_n_t(config.engine, env, config.horizon)
    return PartitionConfig(d_x=env.d_x, n_t=n_t, alpha=env.alpha, l_x=env.l_x)


def run_replica(config: ExperimentConfig, replica: int,
                return_engine: bool = False):
    """One full recommend/feedback trajectory under the replica's seed.

    Returns the RunRecord, or (record, engine) with ``return_engine`` so a
    caller can checkpoint or inspect the final tree state.
    """
    env, spec, T = config.env, config.engine, config.horizon
    seed = config.base_seed + replica
    eng_ss, ctx_ss, noise_ss, arrival_ss = np.random.SeedSequence(seed).spawn(4)
    model = RewardModel(env.reward_config())
    units = spec.units if spec.policy == "dsrht" else 1
    store = build_items(env, units, spec.shard)
    engine = build_engine(spec, env, T, store,
                          np.random.Generator(np.random.PCG64(eng_ss)))
    ctx_rng = np.random.Generator(np.random.PCG64(ctx_ss))
    noise_rng = np.random.Generator(np.random.PCG64(noise_ss))
    arrival_rng = np.random.Generator(np.random.PCG64(arrival_ss))
    stream = ContextStream(ContextStreamConfig(
        kind=env.context_kind, d_x=env.d_x, grid=env.context_grid,
        weights=env.context_weights))
    cache = OracleCache(model, eval_partition(config), store)

    cell = np.empty(T, dtype=np.int64)
    item_id = np.empty(T, dtype=np.int64)
    reward = np.empty(T)
    oracle = np.empty(T)
    chosen_mean = np.empty(T)
    inst = np.empty(T)
    exact_inst = np.empty(T)
    nodes = np.empty(T, dtype=np.int64)

    sigma = env.sigma
    arrivals_done = 0
    next_id = env.n_items + 1
    for t in range(T):
        x = stream.draw(ctx_rng)
        rec = engine.recommend(x)
        row = rec.row
        # grade at the exact context once; the observed reward reuses it
        means_x = model.mean_reward_batch(x, store.features)
        r = float(means_x[row])
        if sigma:
            r += float(noise_rng.uniform(-sigma, sigma))
        engine.feedback(rec, r)
        code, best, means = cache.lookup(x)
        cell[t] = code
        item_id[t] = store.id_of(row)
        reward[t] = r
        oracle[t] = best
        chosen_mean[t] = means[row]
        inst[t] = best - means[row]
        exact_inst[t] = float(means_x.max()) - float(means_x[row])
        nodes[t] = engine.node_count()
        if config.arrive_rate:
            due = int(config.arrive_rate * (t + 1) / 1000.0)
            while arrivals_done < due:
                feats = arrival_rng.random(env.d_c)
                unit = 1 if units == 1 else (len(store) % units) + 1
                engine.add_course(next_id, feats, unit=unit)
                next_id += 1
                arrivals_done += 1

    record = RunRecord(seed=seed, t=np.arange(1, T + 1, dtype=np.int64),
                       cell=cell, item_id=item_id, reward=reward, oracle=oracle,
                       chosen_mean=chosen_mean, inst_regret=inst,
                       cum_regret=np.cumsum(inst),
                       cum_exact_regret=np.cumsum(exact_inst), nodes=nodes)
    return (record, engine) if return_engine else record


# ---- aggregation ----

@dataclass
class SummaryReport:
    config: ExperimentConfig
    seeds: tuple
    checkpoints: tuple
    cum_regret: np.ndarray       # (replicas, checkpoints)
    avg_regret: np.ndarray
    accuracy: np.ndarray
    nodes: np.ndarray
    disc_regret: np.ndarray
    table_rounds: tuple          # six evenly spaced report points
    table_accuracy: np.ndarray   # (replicas, 6)
    slope: Optional[float]
    records: Optional[list] = None

    def mean_cum_regret(self) -> np.ndarray:
        return self.cum_regret.mean(axis=0)

    def mean_accuracy(self) -> np.ndarray:
        return self.accuracy.mean(axis=0)


def _table_rounds(horizon: int) -> tuple:
    pts = sorted({max(1, round(k * horizon / 6)) for k in range(1, 7)})
    pts[-1] = horizon
    return tuple(pts)


def run_experiment(config: ExperimentConfig, keep_records: bool = False) -> SummaryReport:
    """Runs every replica, aggregates checkpoint metrics and fits the slope.

    Replicas are independent; jobs > 1 distributes them across processes
    without changing any result.
    """
    cps = config.checkpoint_grid()
    t_rounds = _table_rounds(config.horizon)
    idx = list(range(config.replicas))
    if config.jobs > 1 and config.replicas > 1:
        with ProcessPoolExecutor(max_workers=min(config.jobs, config.replicas)) as pool:
            records = list(pool.map(run_replica, [config] * len(idx), idx))
    else:
        records = [run_replica(config, k) for k in idx]

    n_cp = len(cps)
    cum = np.empty((config.replicas, n_cp))
    acc = np.empty((config.replicas, n_cp))
    nodes = np.empty((config.replicas, n_cp), dtype=np.int64)
    disc = np.empty((config.replicas, n_cp))
    table_acc = np.empty((config.replicas, len(t_rounds)))
    for i, rec in enumerate(records):
        for j, T in enumerate(cps):
            cum[i, j] = rec.cum_regret[T - 1]
            acc[i, j] = rec.accuracy_at(T)
            nodes[i, j] = rec.nodes[T - 1]
            disc[i, j] = rec.discretization_at(T)
        for j, T in enumerate(t_rounds):
            table_acc[i, j] = rec.accuracy_at(T)
    avg = cum / np.asarray(cps, dtype=np.float64)

    slope = None
    if n_cp >= 3:
        mean_cum = cum.mean(axis=0)
        if np.all(mean_cum > 0):
            slope = fit_regret_slope(list(zip(cps, mean_cum)))

    return SummaryReport(config=config, seeds=config.seeds(), checkpoints=cps,
                         cum_regret=cum, avg_regret=avg, accuracy=acc,
                         nodes=nodes, disc_regret=disc,
                         table_rounds=t_rounds, table_accuracy=table_acc,
                         slope=slope, records=records if keep_records else None)


# ---- reporting ----

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def write_csv(report: SummaryReport, fp) -> None:
    """One row per checkpoint per replica plus per-checkpoint mean rows."""
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    cfg = report.config
    for i, seed in enumerate(report.seeds):
        for j, T in enumerate(report.checkpoints):
            w.writerow([cfg.run_id, cfg.engine.policy, seed, T,
                        _fmt(report.cum_regret[i, j]),
                        _fmt(report.avg_regret[i, j]),
                        _fmt(report.accuracy[i, j]),
                        int(report.nodes[i, j]),
                        _fmt(report.disc_regret[i, j])])
    for j, T in enumerate(report.checkpoints):
        w.writerow([cfg.run_id, cfg.engine.policy, "mean", T,
                    _fmt(report.cum_regret[:, j].mean()),
                    _fmt(report.avg_regret[:, j].mean()),
                    _fmt(report.accuracy[:, j].mean()),
                    _fmt(report.nodes[:, j].mean()),
                    _fmt(report.disc_regret[:, j].mean())])


def csv_text(report: SummaryReport) -> str:
    buf = io.StringIO()
    write_csv(report, buf)
    return buf.getvalue()


def accuracy_table(report: SummaryReport) -> str:
    """Accuracy grid at six evenly spaced round counts, mean over replicas."""
    lines = ["rounds\taccuracy"]
    mean = report.table_accuracy.mean(axis=0)
    for T, a in zip(report.table_rounds, mean):
        lines.append(f"{T}\t{a:.4f}")
    return "\n".join(lines)


def config_echo(config: ExperimentConfig) -> dict:
    """The resolved configuration: every field plus computed n_T and z."""
    def as_dict(dc):
        return {f.name: getattr(dc, f.name) for f in fields(dc)}

    echo = as_dict(config)
    echo["engine"] = as_dict(config.engine)
    echo["env"] = as_dict(config.env)
    echo["checkpoints"] = list(config.checkpoint_grid())
    echo["resolved_n_t"] = (None if config.engine.policy == "uniform-random"
                            else resolve_n_t(config.engine, config.env, config.horizon))
    if config.engine.policy == "dsrht":
        spec, env = config.engine, config.env
        store = build_items(env, spec.units, spec.shard)
        probe = build_engine(spec, env, config.horizon, store, 0)
        echo["resolved_z"] = probe.z
    else:
        echo["resolved_z"] = None
    return echo


# ---- invariant verification ----

def check_engine_invariants(engine) -> dict:
    """Verifies every structural invariant of a live or restored engine.

    Bounds are recomputed from (pulls, mean, depth), estimations from a
    bottom-up pass, counters from the tree, regions from the partition law.
    Raises InvariantViolationError on the first failure; returns counts.
    """
    if isinstance(engine, UniformRandomPolicy):
        return {"cells": 0, "nodes": 0}
    if engine.has_pending():
        raise InvariantViolationError("verification requires no open round")
    cfg = engine.config
    checked = 0
    for cell in sorted(engine.cells):
        a = engine.cells[cell]
        n = a.n
        t = a.t[:n]
        mu = a.mu[:n]
        b = a.b[:n]
        e = a.e[:n]
        depth = a.depth[:n].astype(np.float64)
        left = a.left[:n]
        right = a.right[:n]
        dead = a.dead[:n]
        virtual = a.virtual[:n]
        live = ~(dead | virtual)

        def fail(msg):
            raise InvariantViolationError(f"cell {cell}: {msg}")

        if np.any(mu[live] < 0.0) or np.any(mu[live] > 1.0):
            fail("stored mean outside [0, 1]")
        if np.any(e > b):
            fail("E above B")
        if np.any(b[virtual] != 0.0) or np.any(e[virtual] != 0.0) or np.any(t[virtual] != 0):
            fail("virtual root statistics moved")
        buried = dead & ~virtual
        if np.any(b[buried] != -np.inf) or np.any(e[buried] != -np.inf) or np.any(t[buried] != 0):
            fail("dead node statistics moved")

        geo = cfg.k1 * cfg.m**depth + cfg.partition.context_gap()
        pulled = live & (t > 0)
        b_ref = mu[pulled] + np.sqrt(cfg.k2 * engine.ln_horizon / t[pulled]) + geo[pulled]
        if not np.allclose(b[pulled], b_ref, rtol=0.0, atol=1e-9):
            fail("stored B differs from its defining formula")
        if np.any(b[live & (t == 0)] != np.inf):
            fail("unpulled live node without infinite B")

        e_ref = np.where(virtual, 0.0, np.where(dead, -np.inf, b))
        for i in sorted(range(n), key=lambda i: -int(depth[i])):
            li, ri = int(left[i]), int(right[i])
            if li >= 0:
                if not (dead[i] or virtual[i]):
                    e_ref[i] = min(b[i], max(e_ref[li], e_ref[ri]))
                if int(t[i]) != 1 + int(t[li]) + int(t[ri]):
                    fail(f"node {i}: pulls != 1 + children pulls")
                if sorted(a.regions[li] + a.regions[ri]) != sorted(a.regions[i]):
                    fail(f"node {i}: children regions do not partition the parent")
            elif not (dead[i] or virtual[i]):
                if t[i] != 0:
                    fail(f"leaf {i} carries pulls")
        bad = np.nonzero(~np.isclose(e, e_ref, rtol=0.0, atol=1e-9)
                         & ~(e == e_ref))[0]
        if bad.size:
            fail(f"node {int(bad[0])}: stored E differs from the bottom-up recursion")

        covered = sorted(r for root in a.roots for r in a.regions[root])
        if covered != list(range(len(engine.store))):
            fail("root regions do not cover the item store exactly once")
        checked += n
    return {"cells": len(engine.cells), "nodes": checked}
