"""Command-line entry point.

Every command resolves one experiment config (file plus flag overrides),
writes its outputs under ``--out`` (default ``$MEALDISPATCH_OUT`` or
``./runs``) and records a ``manifest.json`` that can be passed back as
``--config`` to reproduce the run.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .baselines import baseline_by_name
from .experiment import (
    RESULT_FIELDS, ConfigError, ExperimentConfig, format_csv, load_policy, make_world,
    run_day, run_evaluation, run_sweep, run_training, hyperparameter_grid, reward_demand_grid, TEST_PHASE,
)
from .agents import variant_config
from .region import generate_synthetic_region, save_region

OUT_ENV = "MEALDISPATCH_OUT"
log = logging.getLogger("mealdispatch")


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    seed: int
    version: str
    outputs: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")


class CliError(Exception):
    pass


# ------------------------------------------------------------------ config
def _read_config_doc(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: parse error: {exc.msg}") from exc
    # a manifest embeds the fully resolved config
    if "command" in doc and "config" in doc:
        doc = doc["config"]
    return doc


def resolve_config(args) -> ExperimentConfig:
    base_dir = Path(".")
    doc: dict = {}
    if args.config:
        path = Path(args.config)
        doc = _read_config_doc(path)
        base_dir = path.parent
    if args.region:
        doc["region"] = str(Path(args.region).resolve())
    if args.profile:
        doc["profile"] = str(Path(args.profile).resolve())
    cfg = ExperimentConfig.from_dict(doc, base_dir=base_dir)
    over = {}
    for flag, key in (("orders", "daily_orders"), ("couriers", "couriers"), ("mode", "mode"),
                      ("train_days", "train_days"), ("test_days", "test_days"), ("rp", "rp"),
                      ("seed", "seed"), ("max_queue", "max_queue")):
        v = getattr(args, flag, None)
        if v is not None:
            over[key] = v
    if getattr(args, "variant", None):
        cfg = replace(cfg, agent=variant_config(args.variant))
    return cfg.with_overrides(**over) if over else cfg


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "runs")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _policy(name: str | None, checkpoint: str | None, cfg: ExperimentConfig):
    if checkpoint:
        return load_policy(checkpoint, cfg)
    try:
        return baseline_by_name(name or "P45")
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _finish(args, cfg, out: Path, outputs: dict, t0: float) -> None:
    m = RunManifest(args.command, list(args.argv), cfg.to_dict(), cfg.seed, __version__,
                    {k: str(v) for k, v in outputs.items()}, round(time.perf_counter() - t0, 3))
    m.write(out / "manifest.json")
    print(json.dumps({"status": "ok", "command": args.command, "out": str(out)}))


# ---------------------------------------------------------------- commands
def cmd_generate_region(args) -> None:
    region = generate_synthetic_region(args.height, args.width, args.restaurants, seed=args.seed or 0)
    save_region(region, args.output)
    print(json.dumps({"status": "ok", "command": args.command, "out": args.output}))


def cmd_train(args) -> None:
    t0 = time.perf_counter()
    cfg = resolve_config(args)
    out = _out_dir(args)

    def report(row):
        log.info("day %d reward %.1f eps %.3f", row["day"], row["cumulative_reward"], row["epsilon"])

    res = run_training(cfg, out, on_day=report)
    _finish(args, cfg, out, {"checkpoint": res.checkpoint, "training_log": out / "training_log.csv"}, t0)


def _write_eval(ev, out: Path, prefix: str = "") -> dict:
    paths = {
        "results": out / f"{prefix}results.csv",
        "per_day": out / f"{prefix}per_day.csv",
        "metrics": out / f"{prefix}metrics.json",
    }
    paths["results"].write_text(format_csv([ev.row()], RESULT_FIELDS))
    per_day = [{"day": i, **d.row(), "delivered": d.n_delivered, "rejected": d.n_rejected,
                "orders": d.n_orders} for i, d in enumerate(ev.days)]
    paths["per_day"].write_text(format_csv(per_day))
    summary = {"policy": ev.policy, **ev.summary.to_dict()}
    paths["metrics"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if ev.order_log:
        paths["orders"] = out / f"{prefix}orders.csv"
        paths["orders"].write_text(format_csv(ev.order_log))
    return paths


def cmd_evaluate(args) -> None:
    t0 = time.perf_counter()
    cfg = resolve_config(args)
    policy = _policy(args.policy, args.checkpoint, cfg)
    out = _out_dir(args)
    ev = run_evaluation(cfg, policy, keep_orders=args.orders_log)
    _finish(args, cfg, out, _write_eval(ev, out), t0)


def cmd_compare(args) -> None:
    t0 = time.perf_counter()
    cfg = resolve_config(args)
    out = _out_dir(args)
    policies = [baseline_by_name(p) for p in args.baselines]
    if args.checkpoint:
        policies.append(load_policy(args.checkpoint, cfg))
    rows = [run_evaluation(cfg, p).row() for p in policies]
    text = format_csv(rows, RESULT_FIELDS)
    (out / "compare.csv").write_text(text)
    sys.stderr.write(text)
    _finish(args, cfg, out, {"compare": out / "compare.csv"}, t0)


def cmd_sweep(args) -> None:
    t0 = time.perf_counter()
    cfg = resolve_config(args)
    out = _out_dir(args)
    if args.grid == "hyper":
        grid = hyperparameter_grid()
    elif args.grid == "reward-demand":
        grid = reward_demand_grid()
    else:
        grid = json.loads(Path(args.grid).read_text())
    rows = run_sweep(cfg, grid, jobs=args.jobs)
    (out / "sweep.csv").write_text(format_csv(rows))
    failed = sum(bool(r.get("error")) for r in rows)
    if failed:
        log.warning("%d of %d sweep cells failed", failed, len(rows))
    _finish(args, cfg, out, {"sweep": out / "sweep.csv"}, t0)


def cmd_simulate(args) -> None:
    t0 = time.perf_counter()
    cfg = resolve_config(args)
    policy = _policy(args.policy, args.checkpoint, cfg)
    out = _out_dir(args)
    world = make_world(cfg, TEST_PHASE, args.day, trace=True)
    reward = run_day(world, policy, cfg.rp)
    path = out / "trace.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["minute", "courier", "row", "col", "mode", "queue_len", "event"])
        w.writerows(world.trace_rows)
    log.info("day %d reward %.2f", args.day, reward)
    _finish(args, cfg, out, {"trace": path}, t0)


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mealdispatch", description="Courier dispatch simulator and DQN agents.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-region", help="write a synthetic region file")
    g.add_argument("--height", type=int, default=10)
    g.add_argument("--width", type=int, default=10)
    g.add_argument("--restaurants", type=int, default=7)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", required=True)
    g.set_defaults(func=cmd_generate_region)

    def common(sp):
        sp.add_argument("--config", help="experiment config or manifest (JSON)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")
        sp.add_argument("--region", help="region file overriding the config")
        sp.add_argument("--profile", help="hourly demand profile file")
        sp.add_argument("--orders", type=int, help="daily order count")
        sp.add_argument("--couriers", type=int)
        sp.add_argument("--max-queue", type=int)
        sp.add_argument("--mode", choices=("single", "multi"))
        sp.add_argument("--train-days", type=int)
        sp.add_argument("--test-days", type=int)
        sp.add_argument("--rp", type=float)
        sp.add_argument("--variant", help="agent variant, e.g. DDQN_H+")
        return sp

    t = common(sub.add_parser("train", help="train an agent"))
    t.set_defaults(func=cmd_train)

    e = common(sub.add_parser("evaluate", help="evaluate a checkpoint or baseline"))
    e.add_argument("--checkpoint")
    e.add_argument("--policy", help="baseline name such as P45 (ignored with --checkpoint)")
    e.add_argument("--orders-log", action="store_true", help="also write the raw order log")
    e.set_defaults(func=cmd_evaluate)

    c = common(sub.add_parser("compare", help="baselines vs. a checkpoint on shared test days"))
    c.add_argument("--checkpoint")
    c.add_argument("--baselines", nargs="*", default=["P45", "P60"])
    c.set_defaults(func=cmd_compare)

    s = common(sub.add_parser("sweep", help="train and evaluate a grid of configurations"))
    s.add_argument("--grid", default="hyper", help="hyper, reward-demand or a JSON list of override objects")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    m = common(sub.add_parser("simulate", help="trace one test day under a policy"))
    m.add_argument("--checkpoint")
    m.add_argument("--policy")
    m.add_argument("--day", type=int, default=0)
    m.set_defaults(func=cmd_simulate)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, CliError, FileNotFoundError, ValueError, KeyError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
