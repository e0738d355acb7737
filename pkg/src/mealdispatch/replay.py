"""Experience replay: uniform and rank-based prioritized.

Rank-based priorities are ``p_i = 1 / rank(i)`` where rank 1 is the
transition with the largest |TD error| (ties: older first). Sampling
probability is ``p_i^alpha / sum_k p_k^alpha`` and importance weights
``(M * P(i))^-beta`` are divided by their largest possible value, so
they never exceed one. The ranking is refreshed lazily, once per
``sample`` call, rather than on every push or priority update.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class ReplayError(RuntimeError):
    pass


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    next_mask: np.ndarray
    terminal: bool


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    next_masks: np.ndarray
    terminals: np.ndarray


def beta_schedule(progress: float, beta0: float = 0.4) -> float:
    """Linear anneal from ``beta0`` at the start of training to 1 at the end."""
    return beta0 + (1.0 - beta0) * min(max(progress, 0.0), 1.0)


class PrioritizedReplay:
    def __init__(self, capacity: int, n_features: int, n_actions: int, alpha: float = 0.6):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self.states = np.zeros((capacity, n_features))
        self.next_states = np.zeros((capacity, n_features))
        self.next_masks = np.zeros((capacity, n_actions), dtype=bool)
        self.actions = np.zeros(capacity, dtype=np.intp)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.errors = np.zeros(capacity)
        self.generation = np.zeros(capacity, dtype=np.int64)
        self.start = 0
        self.size = 0
        self._rank_cdf: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._sampled: dict[int, int] = {}

    def __len__(self) -> int:
        return self.size

    @property
    def prioritized(self) -> bool:
        return self.alpha != 0.0

    def push(self, t: Transition, error: float | None = None) -> int:
        """Store a transition; by default it takes the current maximal priority."""
        if error is None:
            error = float(self.errors[self.slots_by_age()].max()) if self.size else 1.0
        if self.size < self.capacity:
            slot = (self.start + self.size) % self.capacity
            self.size += 1
        else:
            slot = self.start
            self.start = (self.start + 1) % self.capacity
        self.states[slot] = t.state
        self.next_states[slot] = t.next_state
        self.next_masks[slot] = t.next_mask
        self.actions[slot] = t.action
        self.rewards[slot] = t.reward
        self.terminals[slot] = t.terminal
        self.errors[slot] = abs(error)
        self.generation[slot] += 1
        return slot

    def slots_by_age(self) -> np.ndarray:
        """Occupied slots, oldest first."""
        return (self.start + np.arange(self.size)) % self.capacity

    def _rank_distribution(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        if m not in self._rank_cdf:
            p = np.arange(1, m + 1, dtype=np.float64) ** -self.alpha
            p /= p.sum()
            cdf = np.cumsum(p)
            cdf[-1] = 1.0
            self._rank_cdf = {m: (p, cdf)}
        return self._rank_cdf[m]

    def ranked_slots(self) -> np.ndarray:
        """Slots ordered by rank: largest |TD error| first, ties broken oldest first."""
        by_age = self.slots_by_age()
        return by_age[np.argsort(-self.errors[by_age], kind="stable")]

    def probabilities(self) -> np.ndarray:
        """Sampling probability of every slot (zero for empty slots)."""
        out = np.zeros(self.capacity)
        if not self.size:
            return out
        if not self.prioritized:
            out[self.slots_by_age()] = 1.0 / self.size
        else:
            p, _ = self._rank_distribution(self.size)
            out[self.ranked_slots()] = p
        return out

    def sample(self, batch_size: int, beta: float, rng: np.random.Generator):
        """Draw ``batch_size`` slots i.i.d. from P; returns (batch, slots, weights)."""
        m = self.size
        if m < batch_size or batch_size < 1:
            raise ReplayError(f"cannot sample {batch_size} from a buffer holding {m}")
        if not self.prioritized:
            slots = self.slots_by_age()[rng.integers(0, m, size=batch_size)]
            weights = np.ones(batch_size)
        else:
            p, cdf = self._rank_distribution(m)
            ranks = np.searchsorted(cdf, rng.random(batch_size), side="right")
            ranks = np.minimum(ranks, m - 1)
            slots = self.ranked_slots()[ranks]
            weights = (m * p[ranks]) ** -beta / (m * p[-1]) ** -beta
        self._sampled = {int(s): int(self.generation[s]) for s in slots}
        batch = Batch(self.states[slots], self.actions[slots], self.rewards[slots],
                      self.next_states[slots], self.next_masks[slots], self.terminals[slots])
        return batch, slots, weights

    def update_priorities(self, slots, errors) -> None:
        slots = np.asarray(slots, dtype=np.intp)
        errors = np.abs(np.asarray(errors, dtype=np.float64))
        if slots.shape != errors.shape:
            raise ValueError("slots and errors differ in shape")
        occupied = np.zeros(self.capacity, dtype=bool)
        occupied[self.slots_by_age()] = True
        for s in slots:
            if not 0 <= s < self.capacity or not occupied[s]:
                raise ReplayError(f"stale replay index {s}: slot is empty")
            gen = self._sampled.get(int(s))
            if gen is not None and gen != self.generation[s]:
                raise ReplayError(f"stale replay index {s}: slot was overwritten after sampling")
        if not np.all(np.isfinite(errors)):
            raise ValueError("non-finite TD errors")
        self.errors[slots] = errors


def uniform_replay(capacity: int, n_features: int, n_actions: int) -> PrioritizedReplay:
    """Plain experience replay: the alpha = 0 special case with unit weights."""
    return PrioritizedReplay(capacity, n_features, n_actions, alpha=0.0)
