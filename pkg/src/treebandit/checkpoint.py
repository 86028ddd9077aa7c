"""Versioned engine snapshots: save a live tree engine to JSON, load it back
bit-for-bit, and resume as if the run had never stopped.

The artifact stores the engine config, the item store (ids, features, unit
assignments, version counter), the generator state of the engine's RNG, and
every cell arena's node arrays, region lists and roots. Two things are
deliberately *not* stored:

* chain bookkeeping: a chain is a maximal run of one-sided splits connected
  through left children, so it is a pure function of the tree structure and
  is rebuilt on load;
* region sharing: a one-sided split makes the child alias the parent's
  region list object. Aliases are encoded as ``{"ref": node}`` pointing at
  the first node that owns the list, and the aliasing is restored on load.

Floats round-trip exactly (json writes shortest-repr doubles, and the
non-finite sentinels used by the arenas - inf, -inf, nan - survive via the
json module's Infinity/NaN literals).
"""

from __future__ import annotations

import json
from typing import Mapping, Optional

import numpy as np

from .dsrht import DsrhtEngine
from .errors import InvalidConfigError, ProtocolError
from .items import ItemStore
from .partition import PartitionConfig
from .rht import NO_CHILD, CellArena, EngineConfig, RhtEngine, _Chain

CHECKPOINT_FORMAT = "treebandit-checkpoint"
CHECKPOINT_VERSION = 1

_ARRAY_SPECS = (
    ("depth", np.int64), ("parent", np.intp), ("left", np.intp),
    ("right", np.intp), ("t", np.int64), ("mu", np.float64),
    ("b", np.float64), ("e", np.float64), ("geo", np.float64),
    ("split_dim", np.int64), ("split_thr", np.float64),
    ("dead", bool), ("virtual", bool),
)


def _store_payload(store: ItemStore) -> dict:
    n = len(store)
    return {
        "d_c": store.d_c,
        "version": store.version,
        "ids": [store.item(i).item_id for i in range(n)],
        "units": [store.unit_of(i) for i in range(n)],
        "features": store.features.tolist(),
    }


def _restore_store(payload: Mapping) -> ItemStore:
    store = ItemStore(int(payload["d_c"]))
    for item_id, feats, unit in zip(payload["ids"], payload["features"],
                                    payload["units"]):
        store.add(int(item_id), feats, unit=int(unit))
    store.version = int(payload["version"])
    return store


def _arena_payload(arena: CellArena) -> dict:
    n = arena.n
    arrays = {name: getattr(arena, name)[:n].tolist() for name, _ in _ARRAY_SPECS}
    regions: list = []
    first_owner: dict[int, int] = {}
    for i, region in enumerate(arena.regions):
        key = id(region)
        if key in first_owner:
            regions.append({"ref": first_owner[key]})
        else:
            first_owner[key] = i
            regions.append(list(region))
    return {
        "n": n,
        "rounds": arena.rounds,
        "roots": list(arena.roots),
        "preseeded": arena.preseeded_roots,
        "arrays": arrays,
        "regions": regions,
    }


def _capacity_for(n: int) -> int:
    cap = 64
    while cap < n:
        cap *= 2
    return cap


def _rebuild_chains(arena: CellArena) -> None:
    # A link is a live split whose right child is dead; consecutive links are
    # always joined through the left-child edge, so allocation order (parents
    # before children) recovers every chain and its landing exactly.
    left, right, dead, parent = arena.left, arena.right, arena.dead, arena.parent
    chain_of_link: dict[int, _Chain] = {}
    for i in range(arena.n):
        li = int(left[i])
        if li < 0 or not dead[right[i]]:
            continue
        p = int(parent[i])
        chain = chain_of_link.get(p) if (p >= 0 and left[p] == i) else None
        if chain is None:
            chain = _Chain(i)
            arena._chain_at[i] = chain
        else:
            chain.append(i)
        chain.landing = li
        chain_of_link[i] = chain
    for chain in arena._chain_at.values():
        if left[chain.landing] < 0:
            arena._landing_of[chain.landing] = chain


def _restore_arena(payload: Mapping, store: ItemStore,
                   config: EngineConfig, ln_horizon: float) -> CellArena:
    arena = CellArena(store, config.k1, config.m,
                      config.partition.context_gap(),
                      config.k2 * ln_horizon)
    n = int(payload["n"])
    cap = _capacity_for(n)
    for name, dtype in _ARRAY_SPECS:
        values = np.asarray(payload["arrays"][name], dtype=dtype)
        if values.shape[0] != n:
            raise InvalidConfigError(
                f"array {name!r} has {values.shape[0]} entries, expected {n}")
        full = np.empty(cap, dtype=dtype)
        full[:n] = values
        setattr(arena, name, full)
    regions: list[list] = []
    for i, entry in enumerate(payload["regions"]):
        if isinstance(entry, Mapping):
            owner = int(entry["ref"])
            if not 0 <= owner < i:
                raise InvalidConfigError(f"region ref {owner} at node {i} is invalid")
            regions.append(regions[owner])
        else:
            regions.append([int(r) for r in entry])
    if len(regions) != n:
        raise InvalidConfigError(
            f"{len(regions)} regions for {n} nodes in checkpoint")
    arena.regions = regions
    arena.roots = [int(r) for r in payload["roots"]]
    arena.preseeded_roots = bool(payload["preseeded"])
    if arena.preseeded_roots:
        arena.roots_arr = np.asarray(arena.roots, dtype=np.intp)
    arena.n = n
    arena.rounds = int(payload["rounds"])
    _rebuild_chains(arena)
    return arena


def save_engine(engine: RhtEngine) -> dict:
    """Snapshot a quiescent engine (no outstanding round) as a plain dict."""
    if not isinstance(engine, RhtEngine):
        raise InvalidConfigError(
            f"only tree engines can be checkpointed, got {type(engine).__name__}")
    if engine.has_pending():
        raise ProtocolError("cannot checkpoint with an outstanding round")
    cfg = engine.config
    part = cfg.partition
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "engine": {
            "kind": "dsrht" if isinstance(engine, DsrhtEngine) else "rht",
            "config": {
                "horizon": cfg.horizon, "k1": cfg.k1, "m": cfg.m, "k2": cfg.k2,
                "partition": {"d_x": part.d_x, "n_t": part.n_t,
                              "alpha": part.alpha, "l_x": part.l_x},
            },
            "total_rounds": engine.total_rounds,
            "rng_state": engine.rng.bit_generator.state,
            "store": _store_payload(engine.store),
            "cells": [{"cell": list(cell), **_arena_payload(arena)}
                      for cell, arena in sorted(engine.cells.items())],
        },
    }
    if isinstance(engine, DsrhtEngine):
        payload["engine"]["units"] = engine.units
        payload["engine"]["z"] = engine.z
    return payload


def load_engine(payload: Mapping) -> RhtEngine:
    """Rebuild the engine a :func:`save_engine` dict describes."""
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise InvalidConfigError(
            f"not a {CHECKPOINT_FORMAT} artifact: format={payload.get('format')!r}")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise InvalidConfigError(
            f"unsupported checkpoint version {payload.get('version')!r}")
    spec = payload["engine"]
    cfg_raw = spec["config"]
    config = EngineConfig(
        horizon=int(cfg_raw["horizon"]),
        partition=PartitionConfig(**cfg_raw["partition"]),
        k1=float(cfg_raw["k1"]), m=float(cfg_raw["m"]), k2=float(cfg_raw["k2"]))
    store = _restore_store(spec["store"])
    kind = spec["kind"]
    if kind == "dsrht":
        engine = DsrhtEngine(store, config, units=int(spec["units"]),
                             z=int(spec["z"]), rng=0)
    elif kind == "rht":
        engine = RhtEngine(store, config, rng=0)
    else:
        raise InvalidConfigError(f"unknown engine kind {kind!r}")
    state = spec["rng_state"]
    if state.get("bit_generator") != "PCG64":
        raise InvalidConfigError(
            f"unsupported generator {state.get('bit_generator')!r}")
    engine.rng.bit_generator.state = state
    engine.total_rounds = int(spec["total_rounds"])
    engine.cells = {
        tuple(int(c) for c in entry["cell"]):
            _restore_arena(entry, store, config, engine.ln_horizon)
        for entry in spec["cells"]
    }
    return engine


def save_run_state(engine: RhtEngine, streams: Mapping[str, np.random.Generator],
                   rounds_done: int) -> dict:
    """Snapshot an engine together with named harness RNG streams."""
    payload = save_engine(engine)
    payload["rounds_done"] = int(rounds_done)
    payload["streams"] = {name: gen.bit_generator.state
                          for name, gen in streams.items()}
    return payload


def load_run_state(payload: Mapping):
    """Inverse of :func:`save_run_state`: (engine, streams, rounds_done)."""
    engine = load_engine(payload)
    streams: dict[str, np.random.Generator] = {}
    for name, state in payload.get("streams", {}).items():
        gen = np.random.Generator(np.random.PCG64())
        gen.bit_generator.state = state
        streams[name] = gen
    return engine, streams, int(payload.get("rounds_done", 0))


def write_checkpoint(engine: RhtEngine, path, *,
                     streams: Optional[Mapping[str, np.random.Generator]] = None,
                     rounds_done: int = 0) -> None:
    """Serialize the engine (plus optional stream states) to ``path``."""
    if streams is None:
        payload = save_engine(engine)
    else:
        payload = save_run_state(engine, streams, rounds_done)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, separators=(",", ":"))
        fh.write("\n")


def read_checkpoint(path) -> dict:
    """Parse a checkpoint file into the payload dict (no engine build)."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise InvalidConfigError(
            f"{path}: not a {CHECKPOINT_FORMAT} artifact")
    return payload
