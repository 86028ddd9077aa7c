"""Command-line front end.

Subcommands:

* ``run``          execute an experiment from a config file (plus flag
                   overrides), write the CSV and a config echo with every
                   auto-parameter resolved; optionally emit the accuracy
                   table or a checkpoint of replica 0's final engine.
* ``ingest``       validate an item file, optionally shard it into storage
                   units, and write a JSON item-store artifact.
* ``params``       print the derived planning numbers for a horizon: the
                   context grid resolution, the regret exponent, the largest
                   sane unit count, and the per-z unit-condition table.
* ``env-describe`` print the per-cell oracle table of a synthetic
                   environment (small universes only).
* ``verify``       load a checkpoint and run the full structural invariant
                   suite over the restored engine.

The config file is one JSON object mirroring ExperimentConfig: top-level
keys plus nested "engine" and "env" blocks. Every flag overrides its config
key. All randomness flows from explicit integer seeds; nothing reads the
clock. Exit codes: 0 success, 2 bad config or input, 3 a hard gate or
invariant failed.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from dataclasses import fields
from typing import Optional

import numpy as np

from .checkpoint import load_engine, read_checkpoint, write_checkpoint
from .dsrht import check_unit_condition, optimal_unit_exponent
from .environment import ContextStream, RewardModel, oracle_best
from .errors import (
    HorizonTooSmallError,
    InvalidConfigError,
    InvariantViolationError,
    TreebanditError,
)
from .harness import (
    EngineSpec,
    EnvSpec,
    ExperimentConfig,
    POLICIES,
    accuracy_table,
    build_items,
    check_engine_invariants,
    config_echo,
    fit_regret_slope,
    run_experiment,
    run_replica,
    theoretical_exponent,
    write_csv,
)
from .items import parse_items_file, shard_units
from .partition import PartitionConfig, compute_slicing_number

_TOP_KEYS = {f.name for f in fields(ExperimentConfig)} | {"out"}
_ECHO_ONLY = {"resolved_n_t", "resolved_z"}


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise InvalidConfigError(f"cannot read {path}: {exc}") from exc


def _build_block(cls, raw: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise InvalidConfigError(
            f"unknown {where} keys: {', '.join(sorted(unknown))}")
    if "context_weights" in raw and raw["context_weights"] is not None:
        raw = dict(raw, context_weights=tuple(raw["context_weights"]))
    return cls(**raw)


def experiment_from_config(raw: dict, overrides: Optional[dict] = None):
    """Build (ExperimentConfig, out path) from a config dict plus overrides.

    The dict may be an echo file: the resolved_* bookkeeping keys are
    accepted and ignored, so a run reproduces from its own echo.
    """
    raw = dict(raw)
    for key in _ECHO_ONLY:
        raw.pop(key, None)
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise InvalidConfigError(
            f"unknown config keys: {', '.join(sorted(unknown))}")
    overrides = overrides or {}
    engine_raw = dict(raw.get("engine") or {})
    env_raw = dict(raw.get("env") or {})
    for key in ("policy", "n_t", "z", "shard", "units"):
        if overrides.get(key) is not None:
            engine_raw[key] = overrides[key]
    top = {k: raw[k] for k in raw if k not in ("engine", "env", "out")}
    for key in ("horizon", "replicas", "base_seed", "jobs", "arrive_rate",
                "run_id", "eval_n_t"):
        if overrides.get(key) is not None:
            top[key] = overrides[key]
    if "checkpoints" in top and top["checkpoints"] is not None:
        top["checkpoints"] = tuple(int(c) for c in top["checkpoints"])
    config = ExperimentConfig(
        engine=_build_block(EngineSpec, engine_raw, "engine"),
        env=_build_block(EnvSpec, env_raw, "env"),
        **top)
    out = overrides.get("out") or raw.get("out") or f"{config.run_id}.csv"
    return config, out


def _parse_z(text: str):
    if text in ("auto-min", "auto-optimal"):
        return text
    try:
        return int(text)
    except ValueError:
        raise InvalidConfigError(
            f"--z must be an integer, 'auto-min' or 'auto-optimal', got {text!r}")


def hard_gate_failures(report) -> list:
    """The gates a finished run must pass for a zero exit code."""
    fails = []
    cum = report.cum_regret
    if cum.size and float(cum.min()) < -1e-9:
        fails.append("cumulative regret went negative")
    if cum.shape[1] > 1 and float(np.diff(cum, axis=1).min()) < -1e-9:
        fails.append("cumulative regret not monotone across checkpoints")
    cfg = report.config
    cps = report.checkpoints
    if (cfg.engine.policy == "rht-full" and cfg.env.family != "context-free"
            and cps and max(cps) >= 2 ** 17):
        window = [(int(c), float(m)) for c, m in
                  zip(cps, report.mean_cum_regret()) if c >= 2 ** 10]
        if len(window) >= 3 and all(m > 0.0 for _, m in window):
            slope = fit_regret_slope(window)
            if slope >= 1.0:
                fails.append(f"fitted regret slope {slope:.4f} >= 1.0")
    return fails


def cmd_run(args) -> int:
    raw = _load_json(args.config) if args.config else {}
    overrides = {
        "horizon": args.horizon, "policy": args.policy, "n_t": args.n_t,
        "z": _parse_z(args.z) if args.z is not None else None,
        "base_seed": args.seed, "replicas": args.replicas, "jobs": args.jobs,
        "shard": args.shard, "arrive_rate": args.arrive_rate, "out": args.out,
        "run_id": args.run_id,
    }
    config, out = experiment_from_config(raw, overrides)
    report = run_experiment(config)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        write_csv(report, fh)
    echo_path = os.path.splitext(out)[0] + ".config.json"
    with open(echo_path, "w", encoding="utf-8") as fh:
        json.dump(config_echo(config), fh, indent=2)
        fh.write("\n")
    if args.checkpoint_out:
        _, engine = run_replica(config, 0, return_engine=True)
        write_checkpoint(engine, args.checkpoint_out)
        print(f"checkpoint: {args.checkpoint_out}")
    final = report.mean_cum_regret()[-1] if report.cum_regret.size else 0.0
    print(f"run {config.run_id}: policy={config.engine.policy} "
          f"T={config.horizon} replicas={config.replicas} seeds={report.seeds}")
    print(f"final mean cum_regret = {final:.6g}")
    if report.slope is not None:
        print(f"fitted regret slope = {report.slope:.4f}")
    print(f"csv: {out}")
    print(f"config echo: {echo_path}")
    if args.emit_table:
        print(accuracy_table(report))
    fails = hard_gate_failures(report)
    for msg in fails:
        print(f"gate failed: {msg}", file=sys.stderr)
    return 3 if fails else 0


def cmd_ingest(args) -> int:
    entries = parse_items_file(args.file, d_c=args.d_c,
                               with_units=args.with_units)
    ids = [item_id for item_id, _, _ in entries]
    if args.shard:
        assigned = shard_units(ids, args.units, args.shard)
        entries = [(i, f, int(u)) for (i, f, _), u in zip(entries, assigned)]
    out = args.out or args.file + ".items.json"
    artifact = {
        "format": "treebandit-items", "version": 1,
        "d_c": args.d_c, "count": len(entries),
        "items": [{"id": i, "features": list(f), "unit": u}
                  for i, f, u in entries],
    }
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(artifact, fh, indent=2)
        fh.write("\n")
    print(f"ingested {len(entries)} items (d_c={args.d_c}) -> {out}")
    if args.shard or args.with_units:
        counts: dict[int, int] = {}
        for _, _, unit in entries:
            counts[unit] = counts.get(unit, 0) + 1
        for unit in sorted(counts):
            print(f"unit {unit}: {counts[unit]} items")
    return 0


def cmd_params(args) -> int:
    T, alpha, d_x, d_c = args.horizon, args.alpha, args.d_x, args.d_c
    n_t = compute_slicing_number(T, alpha, d_x, d_c)
    gamma = theoretical_exponent(alpha, d_x, d_c)
    z_star = optimal_unit_exponent(T, alpha, d_x, d_c)
    budget = np.log2(T / np.log(T))
    z_alt = int(np.floor(gamma * budget))
    print(f"horizon = {T}, alpha = {alpha}, d_x = {d_x}, d_c = {d_c}")
    print(f"n_T = {n_t}")
    print(f"gamma = {gamma!r}")
    print(f"z* = {z_star}")
    print(f"z*_alt = {z_alt}  "
          f"(exponent (d_x + alpha*(d_c+2))/(d_x + alpha*(d_c+3)))")
    print("unit condition by depth:")
    for z in range(0, max(z_star, 1) + 2):
        ok = check_unit_condition(2 ** z, T, alpha, d_x, d_c)
        print(f"  z={z} d={2 ** z}: {'satisfied' if ok else 'violated'}")
    return 0


def cmd_env_describe(args) -> int:
    raw = _load_json(args.config) if args.config else {}
    env = _build_block(EnvSpec, dict(raw.get("env") or {}), "env")
    n_t = args.n_t if args.n_t is not None else compute_slicing_number(
        args.horizon, env.alpha, env.d_x, env.d_c)
    cells = n_t ** env.d_x
    if cells * env.n_items > 262144:
        raise InvalidConfigError(
            f"universe too large to describe: {cells} cells x "
            f"{env.n_items} items")
    store = build_items(env, 1, "round-robin")
    model = RewardModel(env.reward_config())
    part = PartitionConfig(d_x=env.d_x, n_t=n_t, alpha=env.alpha, l_x=env.l_x)
    print(f"family={env.family} d_x={env.d_x} d_c={env.d_c} "
          f"items={env.n_items} grid={n_t}^{env.d_x}={cells} cells")
    for cell in itertools.product(range(n_t), repeat=env.d_x):
        center = part.cell_center(cell)
        _, item_id, value = oracle_best(model, center, store)
        coords = ",".join(f"{v:.4g}" for v in center)
        print(f"cell={cell} center=({coords}) best_id={item_id} "
              f"value={value:.6g}")
    return 0


def cmd_verify(args) -> int:
    payload = read_checkpoint(args.checkpoint)
    engine = load_engine(payload)
    counts = check_engine_invariants(engine)
    print(f"checkpoint ok: kind={payload['engine']['kind']} "
          f"cells={counts['cells']} nodes={counts['nodes']} "
          f"rounds={engine.total_rounds}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treebandit",
        description="Tree-bandit course recommendation: run experiments, "
                    "ingest item files, plan parameters, verify checkpoints.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment and write CSV")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--horizon", type=int)
    run.add_argument("--policy", choices=POLICIES)
    run.add_argument("--n-t", dest="n_t", type=int)
    run.add_argument("--z", help="int, auto-min, or auto-optimal")
    run.add_argument("--seed", type=int, help="base seed (replica r uses seed+r)")
    run.add_argument("--replicas", type=int)
    run.add_argument("--jobs", type=int)
    run.add_argument("--out", help="CSV output path (default <run_id>.csv)")
    run.add_argument("--run-id", dest="run_id")
    run.add_argument("--shard", choices=("round-robin", "hash"))
    run.add_argument("--arrive-rate", dest="arrive_rate", type=float,
                     help="expected item arrivals per 1000 rounds")
    run.add_argument("--emit-table", action="store_true",
                     help="print the six-point accuracy table")
    run.add_argument("--checkpoint-out", dest="checkpoint_out",
                     help="save replica 0's final engine state here")
    run.set_defaults(func=cmd_run)

    ingest = sub.add_parser("ingest", help="validate and shard an item file")
    ingest.add_argument("file", help="item lines: id, f1, f2, ...")
    ingest.add_argument("--d-c", dest="d_c", type=int, required=True)
    group = ingest.add_mutually_exclusive_group()
    group.add_argument("--with-units", action="store_true",
                       help="read a trailing unit column")
    group.add_argument("--shard", choices=("round-robin", "hash"))
    ingest.add_argument("--units", type=int, default=1,
                        help="unit count for --shard")
    ingest.add_argument("--out", help="artifact path (default <file>.items.json)")
    ingest.set_defaults(func=cmd_ingest)

    params = sub.add_parser("params", help="print derived planning numbers")
    params.add_argument("--horizon", type=int, required=True)
    params.add_argument("--alpha", type=float, default=1.0)
    params.add_argument("--d-x", dest="d_x", type=int, default=2)
    params.add_argument("--d-c", dest="d_c", type=int, default=3)
    params.set_defaults(func=cmd_params)

    desc = sub.add_parser("env-describe", help="print the per-cell oracle table")
    desc.add_argument("--config", help="JSON config file (env block)")
    desc.add_argument("--n-t", dest="n_t", type=int)
    desc.add_argument("--horizon", type=int, default=1024,
                      help="used to resolve the grid when --n-t is absent")
    desc.set_defaults(func=cmd_env_describe)

    verify = sub.add_parser("verify", help="run the invariant suite on a checkpoint")
    verify.add_argument("checkpoint")
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolationError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except HorizonTooSmallError as exc:
        print(f"horizon-too-small: {exc}", file=sys.stderr)
        return 2
    except (TreebanditError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
