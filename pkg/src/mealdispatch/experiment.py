"""Training and evaluation protocols, metrics and sweeps.

Every random stream is derived from the experiment seed, the phase
(training or test) and the day index, so all policies in a comparison see
identical order streams (common random numbers).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .agents import AgentConfig, DQNAgent, MultiCourierQPolicy, SharedQPolicy, epsilon_at, variant_config
from .baselines import ThresholdPolicy
from .demand import HourlyProfile, OrderStatus, load_profile, sample_day
from .mdp import StateEncoder, apply_action
from .neural import load_checkpoint, save_checkpoint
from .region import RegionConfig, generate_synthetic_region, load_region, region_from_dict, region_to_dict
from .replay import Transition
from .simulation import World

log = logging.getLogger(__name__)

TRAIN_PHASE, TEST_PHASE = 0, 1
BUCKETS = ("le25", "25_45", "45_60", "gt60")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    region: RegionConfig
    profile: HourlyProfile
    agent: AgentConfig = field(default_factory=lambda: variant_config("DDQN_H+"))
    daily_orders: int = 163
    couriers: int = 5
    mode: str = "single"  # "single": one-courier training, shared policy at test; "multi": joint model
    train_days: int = 500
    test_days: int = 100
    seed: int = 0
    rp: float = 45.0
    max_queue: int = 2
    multi_restaurant_prob: float = 0.0

    def __post_init__(self):
        if self.mode not in ("single", "multi"):
            raise ConfigError(f"mode must be 'single' or 'multi', got {self.mode!r}")
        if self.couriers < 1:
            raise ConfigError("couriers must be >= 1")
        if self.daily_orders < 0:
            raise ConfigError("daily_orders must be >= 0")
        if self.train_days < 0 or self.test_days < 0:
            raise ConfigError("train_days and test_days must be >= 0")
        if self.max_queue < 1:
            raise ConfigError("max_queue must be >= 1")
        if not 0.0 <= self.multi_restaurant_prob <= 1.0:
            raise ConfigError("multi_restaurant_prob must lie in [0, 1]")

    @property
    def train_couriers(self) -> int:
        return 1 if self.mode == "single" else self.couriers

    @property
    def train_orders(self) -> int:
        """Daily demand of a training day: a single courier sees its share of N."""
        if self.mode == "multi" or self.daily_orders == 0:
            return self.daily_orders
        return max(1, round(self.daily_orders / self.couriers))

    def to_dict(self) -> dict:
        return {
            "region": region_to_dict(self.region),
            "profile": self.profile.to_dict(),
            "agent": self.agent.to_dict(),
            "daily_orders": self.daily_orders,
            "couriers": self.couriers,
            "mode": self.mode,
            "train_days": self.train_days,
            "test_days": self.test_days,
            "seed": self.seed,
            "rp": self.rp,
            "max_queue": self.max_queue,
            "multi_restaurant_prob": self.multi_restaurant_prob,
        }

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        """Build from a config document.

        ``region`` may be an inline region object, a path to a region file, or
        ``{"synthetic": {height, width, n_restaurants, seed}}``; ``profile`` may
        be inline, a path, or absent for the bundled profile; ``agent`` may name
        a ``variant`` plus overrides.
        """
        doc = dict(doc)
        base_dir = base_dir or Path(".")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        reg = doc.get("region", {"synthetic": {}})
        if isinstance(reg, str):
            region = load_region(base_dir / reg)
        elif "synthetic" in reg:
            region = generate_synthetic_region(**reg["synthetic"])
        else:
            region = region_from_dict(reg)
        prof = doc.get("profile")
        if prof is None:
            profile = load_profile()
        elif isinstance(prof, str):
            profile = load_profile(base_dir / prof)
        else:
            profile = HourlyProfile.from_dict(prof)
        agent = AgentConfig.from_dict(doc.get("agent", {"variant": "DDQN_H+"}))
        rest = {k: v for k, v in doc.items() if k not in ("region", "profile", "agent")}
        return cls(region=region, profile=profile, agent=agent, **rest)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        agent_fields = set(AgentConfig.__dataclass_fields__)
        agent_kw = {k: v for k, v in overrides.items() if k in agent_fields}
        exp_kw = {k: v for k, v in overrides.items() if k not in agent_fields}
        bad = set(exp_kw) - set(self.__dataclass_fields__)
        if bad:
            raise ConfigError(f"unknown override keys: {sorted(bad)}")
        return replace(self, agent=replace(self.agent, **agent_kw), **exp_kw)


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: parse error: {exc.msg}") from exc
    return ExperimentConfig.from_dict(doc, base_dir=path.parent)


def day_rng(seed: int, phase: int, day: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(phase), int(day)]))


def make_world(cfg: ExperimentConfig, phase: int, day: int, n_couriers: int | None = None,
               trace: bool = False, daily_orders: int | None = None) -> World:
    rng = day_rng(cfg.seed, phase, day)
    n = cfg.daily_orders if daily_orders is None else daily_orders
    orders = sample_day(cfg.region, cfg.profile, n, rng, cfg.multi_restaurant_prob)
    return World(
        cfg.region, n_couriers or cfg.couriers, orders, max_queue=cfg.max_queue,
        day_start=cfg.profile.day_start_minute, day_end=cfg.profile.day_end_minute,
        trace=trace, day_index=day,
    )


def make_encoder(cfg: ExperimentConfig, n_couriers: int) -> StateEncoder:
    return StateEncoder(cfg.region, n_couriers, cfg.max_queue,
                        cfg.profile.day_start_minute, cfg.profile.day_end_minute)


# ----------------------------------------------------------------- metrics
@dataclass
class EpisodeMetrics:
    cumulative_reward: float
    n_orders: int
    n_delivered: int
    n_rejected: int
    n_in_progress: int
    rejected_pct: float
    delivery_min: float
    delivery_max: float
    delivery_mean: float
    delivery_median: float
    delivery_std: float
    bucket_pct: dict
    hourly_delivered: dict
    busy_minutes: list
    utilization: list

    def row(self) -> dict:
        r = {
            "reward": self.cumulative_reward,
            "rejected_pct": self.rejected_pct,
            "min": self.delivery_min,
            "max": self.delivery_max,
            "mean": self.delivery_mean,
            "median": self.delivery_median,
            "std": self.delivery_std,
        }
        r.update({f"pct_{k}": self.bucket_pct[k] for k in BUCKETS})
        return r

    def to_dict(self) -> dict:
        return asdict(self)


def utilization(busy_minutes: int, shift_minutes: int) -> float:
    """Share of the shift spent travelling to, waiting at, or delivering from restaurants."""
    if shift_minutes <= 0:
        raise ValueError("shift_minutes must be positive")
    return min(max(busy_minutes / shift_minutes, 0.0), 1.0)


def delivery_stats(times: Iterable[float]) -> dict:
    t = np.asarray(list(times), dtype=float)
    if t.size == 0:
        nan = float("nan")
        return {"min": nan, "max": nan, "mean": nan, "median": nan, "std": nan,
                "buckets": {k: 0.0 for k in BUCKETS}}
    n = t.size
    buckets = {
        "le25": 100.0 * np.count_nonzero(t <= 25) / n,
        "25_45": 100.0 * np.count_nonzero((t > 25) & (t <= 45)) / n,
        "45_60": 100.0 * np.count_nonzero((t > 45) & (t <= 60)) / n,
        "gt60": 100.0 * np.count_nonzero(t > 60) / n,
    }
    return {"min": float(t.min()), "max": float(t.max()), "mean": float(t.mean()),
            "median": float(np.median(t)), "std": float(t.std()), "buckets": buckets}


def day_metrics(world: World, reward: float) -> EpisodeMetrics:
    orders = world.orders
    delivered = [o for o in orders if o.status is OrderStatus.DELIVERED]
    rejected = sum(o.status is OrderStatus.REJECTED for o in orders)
    stats = delivery_stats(o.delivery_time for o in delivered)
    hourly: dict[int, int] = {}
    for o in delivered:
        h = o.delivered_minute // 60
        hourly[h] = hourly.get(h, 0) + 1
    shift = world.day_end - world.day_start
    busy = [c.busy_minutes for c in world.couriers]
    return EpisodeMetrics(
        cumulative_reward=float(reward),
        n_orders=len(orders),
        n_delivered=len(delivered),
        n_rejected=int(rejected),
        n_in_progress=len(orders) - len(delivered) - int(rejected),
        rejected_pct=100.0 * rejected / len(orders) if orders else 0.0,
        delivery_min=stats["min"], delivery_max=stats["max"], delivery_mean=stats["mean"],
        delivery_median=stats["median"], delivery_std=stats["std"],
        bucket_pct=stats["buckets"],
        hourly_delivered=dict(sorted(hourly.items())),
        busy_minutes=busy,
        utilization=[utilization(b, shift) for b in busy],
    )


def aggregate_metrics(days: list[EpisodeMetrics], delivery_times: list[float]) -> EpisodeMetrics:
    """Per-day quantities are averaged; percentages and delivery statistics are pooled."""
    if not days:
        raise ValueError("no days to aggregate")
    n_orders = sum(d.n_orders for d in days)
    n_rej = sum(d.n_rejected for d in days)
    stats = delivery_stats(delivery_times)
    hours = sorted({h for d in days for h in d.hourly_delivered})
    n_c = len(days[0].busy_minutes)
    return EpisodeMetrics(
        cumulative_reward=float(np.mean([d.cumulative_reward for d in days])),
        n_orders=n_orders,
        n_delivered=sum(d.n_delivered for d in days),
        n_rejected=n_rej,
        n_in_progress=sum(d.n_in_progress for d in days),
        rejected_pct=100.0 * n_rej / n_orders if n_orders else 0.0,
        delivery_min=stats["min"], delivery_max=stats["max"], delivery_mean=stats["mean"],
        delivery_median=stats["median"], delivery_std=stats["std"],
        bucket_pct=stats["buckets"],
        hourly_delivered={h: float(np.mean([d.hourly_delivered.get(h, 0) for d in days])) for h in hours},
        busy_minutes=[float(np.mean([d.busy_minutes[c] for d in days])) for c in range(n_c)],
        utilization=[float(np.mean([d.utilization[c] for d in days])) for c in range(n_c)],
    )


# ------------------------------------------------------------------ running
def run_day(world: World, policy, rp: float = 45.0) -> float:
    """Drive one day with ``policy.decide`` and return the collected reward."""
    total = 0.0
    while (ev := world.next_event()) is not None:
        kind, arg = policy.decide(world, ev)
        total += apply_action(world, ev, kind, arg, rp)
    world.finish()
    return total


@dataclass
class TrainingResult:
    agent: DQNAgent
    encoder: StateEncoder
    log: list[dict]
    checkpoint: Path | None = None

    def policy(self):
        return policy_for(self.agent.online, self.encoder)


TRAIN_LOG_FIELDS = ("day", "cumulative_reward", "mean_loss", "epsilon", "beta", "orders", "rejected",
                    "delivered", "grad_steps")


def policy_for(params, encoder: StateEncoder):
    if encoder.n_couriers == 1:
        return SharedQPolicy(params, encoder)
    return MultiCourierQPolicy(params, encoder)


def run_training(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                 on_day: Callable[[dict], None] | None = None) -> TrainingResult:
    """Train the configured agent day by day; optionally persist checkpoint and log."""
    n_train = cfg.train_couriers
    encoder = make_encoder(cfg, n_train)
    agent = DQNAgent(cfg.agent, encoder.feature_size, encoder.layout.size, seed=cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 2]))
    layout = encoder.layout
    rows = []
    for day in range(cfg.train_days):
        eps = epsilon_at(cfg.agent, day, cfg.train_days)
        agent.set_progress(day / max(cfg.train_days - 1, 1))
        world = make_world(cfg, TRAIN_PHASE, day, n_train, daily_orders=cfg.train_orders)
        total, losses, pending = 0.0, [], None
        while (ev := world.next_event()) is not None:
            x, m = encoder.encode(world, ev)
            if pending is not None:
                agent.remember(Transition(pending[0], pending[1], pending[2], x, m, False))
                if len(agent.buffer) >= cfg.agent.batch_size:
                    losses.append(agent.train_step(rng))
            a = agent.select_action(x, m, eps, rng)
            kind, arg = layout.decode(a)
            r = apply_action(world, ev, kind, arg, cfg.rp)
            total += r
            pending = (x, a, r)
        if pending is not None:
            agent.remember(Transition(pending[0], pending[1], pending[2],
                                      np.zeros(encoder.feature_size), np.zeros(layout.size, dtype=bool), True))
            if len(agent.buffer) >= cfg.agent.batch_size:
                losses.append(agent.train_step(rng))
        world.finish()
        m = day_metrics(world, total)
        row = {
            "day": day,
            "cumulative_reward": total,
            "mean_loss": float(np.mean(losses)) if losses else float("nan"),
            "epsilon": eps,
            "beta": agent.beta,
            "orders": m.n_orders,
            "rejected": m.n_rejected,
            "delivered": m.n_delivered,
            "grad_steps": agent.grad_steps,
        }
        rows.append(row)
        if on_day is not None:
            on_day(row)
    result = TrainingResult(agent, encoder, rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.checkpoint = out / "checkpoint.bin"
        save_checkpoint(result.checkpoint, agent.online, step=agent.grad_steps,
                        extra={"train_couriers": n_train, "mode": cfg.mode,
                               "n_restaurants": cfg.region.n_restaurants, "max_queue": cfg.max_queue})
        (out / "training_log.csv").write_text(format_csv(rows, TRAIN_LOG_FIELDS))
    return result


def load_policy(path: str | Path, cfg: ExperimentConfig):
    params, header = load_checkpoint(path)
    n = int(header["extra"].get("train_couriers", 1))
    if n != 1 and n != cfg.couriers:
        raise ConfigError(f"checkpoint was trained for {n} couriers; multi-courier models "
                          f"must be evaluated with the same count (got {cfg.couriers})")
    return policy_for(params, make_encoder(cfg, n))


@dataclass
class EvaluationResult:
    policy: str
    summary: EpisodeMetrics
    days: list[EpisodeMetrics]
    order_log: list[dict] = field(default_factory=list)

    def row(self) -> dict:
        return {"policy": self.policy, **self.summary.row()}


def run_evaluation(cfg: ExperimentConfig, policy, *, keep_orders: bool = False,
                   name: str | None = None) -> EvaluationResult:
    """Greedy evaluation over the configured test days on shared test streams."""
    days, times, order_log = [], [], []
    for day in range(cfg.test_days):
        world = make_world(cfg, TEST_PHASE, day)
        total = run_day(world, policy, cfg.rp)
        days.append(day_metrics(world, total))
        for o in world.orders:
            if o.delivered_minute is not None:
                times.append(o.delivery_time)
            if keep_orders:
                order_log.append({"day": day, "id": o.id, "restaurant": o.restaurant_id,
                                  "placed": o.placed_minute, "prep": o.prep_time, "status": o.status.value,
                                  "delivered": o.delivered_minute, "courier": o.assigned_courier})
    return EvaluationResult(name or getattr(policy, "name", "policy"), aggregate_metrics(days, times),
                            days, order_log)


# ------------------------------------------------------------------- sweeps
def hyperparameter_grid() -> list[dict]:
    """Hyperparameter cells in the order M, gamma, B, U with gamma outermost."""
    return [
        {"memory": m, "gamma": g, "batch_size": b, "target_update_steps": u}
        for g in (0.9, 0.1) for m in (20_000, 30_000) for b in (128, 64) for u in (100, 200)
    ]


def reward_demand_grid() -> list[dict]:
    return [{"rp": rp, "daily_orders": n} for rp in (30.0, 45.0, 60.0) for n in (120, 170, 220)]


def _run_cell(args):
    cfg, overrides = args
    try:
        cell = cfg.with_overrides(**overrides)
        trained = run_training(cell)
        ev = run_evaluation(cell, trained.policy())
        return {**overrides, **ev.summary.row(), "error": ""}
    except Exception as exc:  # noqa: BLE001 - one bad cell must not stop the sweep
        log.exception("sweep cell %s failed", overrides)
        return {**overrides, "error": f"{type(exc).__name__}: {exc}"}


def run_sweep(cfg: ExperimentConfig, grid: list[dict], jobs: int = 1) -> list[dict]:
    if not grid:
        raise ConfigError("sweep grid is empty")
    tasks = [(cfg, g) for g in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, tasks))
    return [_run_cell(t) for t in tasks]


# ---------------------------------------------------------------------- io
RESULT_FIELDS = ("policy", "reward", "rejected_pct", "min", "max", "mean", "median", "std",
                 "pct_le25", "pct_25_45", "pct_45_60", "pct_gt60")


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def format_csv(rows: list[dict], fields: Iterable[str] | None = None) -> str:
    rows = list(rows)
    if fields is None:
        fields = []
        for r in rows:
            fields += [k for k in r if k not in fields]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()


def compare_policies(cfg: ExperimentConfig, policies: list) -> list[EvaluationResult]:
    return [run_evaluation(cfg, p) for p in policies]


def default_baselines() -> list[ThresholdPolicy]:
    return [ThresholdPolicy(45.0), ThresholdPolicy(60.0)]
