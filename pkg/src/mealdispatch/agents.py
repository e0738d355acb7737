"""DQN-family agents sharing one training kernel.

A variant is a combination of target rule (DQN max vs. DDQN
select-with-online / evaluate-with-target), replay (uniform vs.
rank-based prioritized), head (plain vs. dueling) and target update (hard
copy every ``U`` gradient steps vs. soft blend every step).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .mdp import ActionKind, StateEncoder
from .neural import DEFAULT_HIDDEN, Adam, NetworkParams, backward, forward, init_params
from .replay import PrioritizedReplay, Transition, beta_schedule, uniform_replay
from .simulation import EventKind, SimEvent, World


@dataclass(frozen=True)
class AgentConfig:
    algorithm: str = "ddqn"  # "dqn" | "ddqn"
    dueling: bool = False
    per: bool = True
    update: str = "hard"  # "hard" | "soft"
    target_update_steps: int = 100
    tau: float = 0.5
    gamma: float = 0.9
    batch_size: int = 128
    memory: int = 20_000
    alpha: float = 0.6
    beta0: float = 0.4
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.6
    step_size: float = 1e-3
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    huber: float | None = None

    def __post_init__(self):
        if self.algorithm not in ("dqn", "ddqn"):
            raise ValueError(f"algorithm must be 'dqn' or 'ddqn', got {self.algorithm!r}")
        if self.update not in ("hard", "soft"):
            raise ValueError(f"update must be 'hard' or 'soft', got {self.update!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size < 1 or self.memory < self.batch_size:
            raise ValueError("need 1 <= batch_size <= memory")
        if self.target_update_steps < 1:
            raise ValueError("target_update_steps must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "AgentConfig":
        doc = dict(doc)
        if "variant" in doc:
            base = variant_config(doc.pop("variant"))
            return replace(base, **{k: (tuple(v) if k == "hidden" else v) for k, v in doc.items()})
        if "hidden" in doc:
            doc["hidden"] = tuple(doc["hidden"])
        return cls(**doc)


VARIANTS = {
    "DQN_H": dict(algorithm="dqn", per=False, update="hard"),
    "DQN_S": dict(algorithm="dqn", per=False, update="soft"),
    "DDQN_H": dict(algorithm="ddqn", per=False, update="hard"),
    "DDQN_S": dict(algorithm="ddqn", per=False, update="soft"),
    "DDQN_H+": dict(algorithm="ddqn", per=True, update="hard"),
    "DDQN_S+": dict(algorithm="ddqn", per=True, update="soft"),
    "D3QN_H+": dict(algorithm="ddqn", per=True, update="hard", dueling=True),
    "D3QN_S+": dict(algorithm="ddqn", per=True, update="soft", dueling=True),
}


def variant_config(name: str, **overrides) -> AgentConfig:
    try:
        base = VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None
    return AgentConfig(**{**base, **overrides})


def epsilon_at(cfg: AgentConfig, day: int, total_days: int) -> float:
    """Linear decay over the first ``eps_decay_fraction`` of training, then flat."""
    horizon = max(1.0, cfg.eps_decay_fraction * total_days)
    frac = min(day / horizon, 1.0)
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


def masked_argmax(q: np.ndarray, mask: np.ndarray) -> int:
    if not mask.any():
        raise ValueError("no feasible action")
    return int(np.argmax(np.where(mask, q, -np.inf)))


@dataclass
class DQNAgent:
    config: AgentConfig
    n_features: int
    n_actions: int
    seed: int = 0
    online: NetworkParams = field(init=False)
    target: NetworkParams = field(init=False)
    buffer: PrioritizedReplay = field(init=False)
    optimizer: Adam = field(init=False)
    grad_steps: int = 0
    beta: float = field(init=False)

    def __post_init__(self):
        cfg = self.config
        self.online = init_params(self.n_features, self.n_actions, cfg.hidden, cfg.dueling, seed=self.seed)
        self.target = self.online.copy()
        if cfg.per:
            self.buffer = PrioritizedReplay(cfg.memory, self.n_features, self.n_actions, alpha=cfg.alpha)
        else:
            self.buffer = uniform_replay(cfg.memory, self.n_features, self.n_actions)
        self.optimizer = Adam(step_size=cfg.step_size)
        self.beta = cfg.beta0 if cfg.per else 0.0

    def q_values(self, features) -> np.ndarray:
        return forward(self.online, features)

    def select_action(self, features, mask, epsilon: float, rng: np.random.Generator) -> int:
        mask = np.asarray(mask, dtype=bool)
        feasible = np.flatnonzero(mask)
        if feasible.size == 0:
            raise ValueError("empty feasibility mask")
        if rng.random() < epsilon:
            return int(feasible[rng.integers(feasible.size)])
        return masked_argmax(self.q_values(features), mask)

    def td_targets(self, rewards, next_states, next_masks, terminals) -> np.ndarray:
        rewards = np.asarray(rewards, dtype=np.float64)
        y = rewards.copy()
        live = ~np.asarray(terminals, dtype=bool)
        if self.config.gamma == 0.0 or not live.any():
            return y
        ns = np.asarray(next_states)[live]
        nm = np.asarray(next_masks, dtype=bool)[live]
        q_target = forward(self.target, ns)
        if self.config.algorithm == "dqn":
            boot = np.where(nm, q_target, -np.inf).max(axis=1)
        else:
            pick = np.argmax(np.where(nm, forward(self.online, ns), -np.inf), axis=1)
            boot = q_target[np.arange(pick.size), pick]
        # a live transition with nothing feasible next contributes no bootstrap
        boot = np.where(nm.any(axis=1), boot, 0.0)
        y[live] = rewards[live] + self.config.gamma * boot
        return y

    def td_target(self, t: Transition) -> float:
        return float(self.td_targets([t.reward], [t.next_state], [t.next_mask], [t.terminal])[0])

    def remember(self, t: Transition) -> None:
        self.buffer.push(t)

    def set_progress(self, progress: float) -> None:
        if self.config.per:
            self.beta = beta_schedule(progress, self.config.beta0)

    def train_step(self, rng: np.random.Generator) -> float:
        cfg = self.config
        batch, slots, weights = self.buffer.sample(cfg.batch_size, self.beta, rng)
        y = self.td_targets(batch.rewards, batch.next_states, batch.next_masks, batch.terminals)
        grads, td, loss = backward(self.online, batch.states, batch.actions, y, weights, cfg.huber)
        self.optimizer.step(self.online, grads)
        if cfg.per:
            self.buffer.update_priorities(slots, np.abs(td))
        self.grad_steps += 1
        if cfg.update == "hard":
            if self.grad_steps % cfg.target_update_steps == 0:
                self.target.assign_from(self.online)
        else:
            self.target.soft_update_from(self.online, cfg.tau)
        return loss


# ---------------------------------------------------------------- policies
class MultiCourierQPolicy:
    """Greedy policy of a network whose input covers every courier."""

    def __init__(self, params: NetworkParams, encoder: StateEncoder):
        if params.n_inputs != encoder.feature_size or params.n_outputs != encoder.layout.size:
            raise ValueError("network shape does not match the encoder")
        self.params, self.encoder = params, encoder
        self.name = "multi-courier-q"

    def decide(self, world: World, event: SimEvent) -> tuple[ActionKind, int | None]:
        x, m = self.encoder.encode(world, event)
        return self.encoder.layout.decode(masked_argmax(forward(self.params, x), m))


class SharedQPolicy:
    """Single-courier network applied to every courier.

    On a new order each courier is scored with its own view; the best
    masked value over all couriers' assign and reject entries decides. An
    idle courier decides from its own view alone.
    """

    def __init__(self, params: NetworkParams, encoder: StateEncoder):
        if encoder.n_couriers != 1:
            raise ValueError("shared policy needs a single-courier encoder")
        if params.n_inputs != encoder.feature_size or params.n_outputs != encoder.layout.size:
            raise ValueError("network shape does not match the encoder")
        self.params, self.encoder = params, encoder
        self.name = "shared-single-courier-q"

    def decide(self, world: World, event: SimEvent) -> tuple[ActionKind, int | None]:
        lay = self.encoder.layout
        if event.kind is EventKind.COURIER_IDLE:
            x, m = self.encoder.encode_courier(world, event, event.courier_id)
            return lay.decode(masked_argmax(forward(self.params, x), m))
        views = [self.encoder.encode_courier(world, event, cid) for cid in range(len(world.couriers))]
        q = forward(self.params, np.stack([v[0] for v in views]))
        best, choice = -np.inf, (ActionKind.REJECT, None)
        for cid, (_, m) in enumerate(views):
            if m[lay.assign(0)] and q[cid, lay.assign(0)] > best:
                best, choice = q[cid, lay.assign(0)], (ActionKind.ASSIGN, cid)
            if q[cid, lay.reject] > best:
                best, choice = q[cid, lay.reject], (ActionKind.REJECT, None)
        return choice
