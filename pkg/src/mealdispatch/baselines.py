"""Rule-based reference policies P45 and P60.

A new order goes to the courier with the smallest expected delivery time
(lowest id on ties) unless even that exceeds the threshold, in which case
it is rejected. Idle couriers always head back to the depot.
"""

from __future__ import annotations

from dataclasses import dataclass

from .mdp import ActionKind
from .simulation import EventKind, SimEvent, World, expected_delivery_time


@dataclass(frozen=True)
class ThresholdPolicy:
    threshold: float = 45.0

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")

    @property
    def name(self) -> str:
        return f"P{self.threshold:g}"

    def decide(self, world: World, event: SimEvent) -> tuple[ActionKind, int | None]:
        if event.kind is EventKind.COURIER_IDLE:
            return ActionKind.GO_DEPOT, None
        best_id, best = None, None
        for c in world.couriers:
            if len(c.queue) >= world.max_queue:
                continue
            d = expected_delivery_time(c, event.order, world.clock)
            if best is None or d < best:
                best_id, best = c.id, d
        if best is not None and best <= self.threshold:
            return ActionKind.ASSIGN, best_id
        return ActionKind.REJECT, None


P45 = ThresholdPolicy(45.0)
P60 = ThresholdPolicy(60.0)


def baseline_decide(policy: ThresholdPolicy, world: World, event: SimEvent):
    return policy.decide(world, event)


def baseline_by_name(name: str) -> ThresholdPolicy:
    name = name.upper()
    if not name.startswith("P"):
        raise ValueError(f"unknown baseline {name!r}")
    return ThresholdPolicy(float(name[1:]))
