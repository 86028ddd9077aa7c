from __future__ import annotations

import math

import numpy as np

from treebandit import EngineConfig, ItemStore, PartitionConfig, RhtEngine


def build_store(features, d_c=None, units=None):
    d_c = d_c if d_c is not None else len(features[0])
    store = ItemStore(d_c=d_c)
    for i, f in enumerate(features):
        store.add(i + 1, f, unit=1 if units is None else units[i])
    return store


def single_cell_engine(features, horizon=200, seed=0, k1=1.0, m=0.5, k2=2.0,
                       l_x=1.0):
    store = build_store(features)
    cfg = EngineConfig(horizon=horizon,
                       partition=PartitionConfig(d_x=1, n_t=1, l_x=l_x),
                       k1=k1, m=m, k2=k2)
    return RhtEngine(store, cfg, rng=seed)


def reference_invariant_check(engine):
    """Scalar re-derivation of every node statistic that is recomputable from
    stored state. Independent of the engine's vectorized update path: bounds
    come from (pulls, mean, depth) via the defining formula, estimations from
    a bottom-up pass, counters from the tree structure.
    """
    cfg = engine.config
    ln_h = math.log(cfg.horizon)
    gap = cfg.partition.context_gap()
    assert not engine.has_pending(), "verify only between rounds"
    for cell, a in engine.cells.items():
        n = a.n
        order = sorted(range(n), key=lambda i: -int(a.depth[i]))
        e_ref = np.empty(n)
        for i in order:
            if a.virtual[i]:
                assert a.b[i] == 0.0 and a.e[i] == 0.0 and a.t[i] == 0
                e_ref[i] = 0.0
                continue
            pulls = int(a.t[i])
            if a.dead[i]:
                b_ref = -math.inf  # empty region: pinned below every live node
            elif pulls == 0:
                b_ref = math.inf
            else:
                b_ref = (float(a.mu[i]) + math.sqrt(cfg.k2 * ln_h / pulls)
                         + cfg.k1 * cfg.m ** int(a.depth[i]) + gap)
            assert a.b[i] == b_ref or abs(a.b[i] - b_ref) < 1e-9, \
                f"cell {cell} node {i}: stored B {a.b[i]} != {b_ref}"
            li, ri = int(a.left[i]), int(a.right[i])
            if a.dead[i]:
                e_ref[i] = -math.inf
            elif li < 0:
                e_ref[i] = b_ref
            else:
                e_ref[i] = min(b_ref, max(e_ref[li], e_ref[ri]))
            stored = float(a.e[i])
            assert stored == e_ref[i] or abs(stored - e_ref[i]) < 1e-9, \
                f"cell {cell} node {i}: stored E {stored} != {e_ref[i]}"
            assert stored <= a.b[i] + 1e-12
            assert 0.0 <= a.mu[i] <= 1.0
            if li >= 0:
                assert int(a.t[i]) == 1 + int(a.t[li]) + int(a.t[ri]), \
                    f"cell {cell} node {i}: pull counter mismatch"
                merged = sorted(a.regions[li] + a.regions[ri])
                assert merged == sorted(a.regions[i]), \
                    f"cell {cell} node {i}: children regions != parent region"
            else:
                # leaves of the materialized tree have never been pulled
                assert int(a.t[i]) == 0
