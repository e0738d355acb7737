"""Decision-process view of the world: feature vectors, masks, actions, rewards.

Flat action layout for ``C`` couriers and ``R`` restaurants::

    [assign to courier 0..C-1 | reject | go to depot | go to restaurant 0..R-1]

Each courier contributes a block ``[delta, mu, eta_0 .. eta_{R-1}]`` to the
state vector, followed by the hour-of-day fraction and an event flag
(1 for a new order, 0 for an idle courier).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .region import RegionConfig
from .simulation import EventKind, SimEvent, World, expected_delivery_time

REJECT_REWARD = -15.0
MOVE_PENALTY_DIVISOR = 10.0


class ActionKind(str, enum.Enum):
    ASSIGN = "assign"
    REJECT = "reject"
    GO_DEPOT = "go-depot"
    GO_RESTAURANT = "go-restaurant"


@dataclass(frozen=True)
class ActionLayout:
    n_couriers: int
    n_restaurants: int

    @property
    def size(self) -> int:
        return self.n_couriers + 2 + self.n_restaurants

    def assign(self, cid: int) -> int:
        return cid

    @property
    def reject(self) -> int:
        return self.n_couriers

    @property
    def go_depot(self) -> int:
        return self.n_couriers + 1

    def go_restaurant(self, rid: int) -> int:
        return self.n_couriers + 2 + rid

    def decode(self, index: int) -> tuple[ActionKind, int | None]:
        index = int(index)
        if not 0 <= index < self.size:
            raise IndexError(f"action {index} outside layout of size {self.size}")
        if index < self.n_couriers:
            return ActionKind.ASSIGN, index
        if index == self.reject:
            return ActionKind.REJECT, None
        if index == self.go_depot:
            return ActionKind.GO_DEPOT, None
        return ActionKind.GO_RESTAURANT, index - self.n_couriers - 2


def reward(kind: ActionKind, value: float = 0.0, rp: float = 45.0) -> float:
    """Immediate reward; ``value`` is delta for assign, mu/eta for moves."""
    if kind is ActionKind.ASSIGN:
        return rp - value
    if kind is ActionKind.REJECT:
        return REJECT_REWARD
    return -value / MOVE_PENALTY_DIVISOR


def state_action_space_size(n: int, r: int, c: int, f: int) -> dict[str, int]:
    if n < 2:
        raise ValueError("grid side must be >= 2")
    span = 2 * n - 2
    return {
        "new_order_accept": f * span * c,
        "new_order_reject": f * span * c,
        "delivered_return_depot": span * c,
        "delivered_go_restaurant": r * span * c,
    }


class StateEncoder:
    """Builds fixed-width features and feasibility masks for one courier count.

    ``n_couriers=1`` gives the single-courier network's view; use
    :meth:`encode_courier` to look at one courier of a larger world
    through that view.
    """

    def __init__(self, region: RegionConfig, n_couriers: int, max_queue: int = 2,
                 day_start: int = 480, day_end: int = 1440):
        self.region = region
        self.n_couriers = n_couriers
        self.max_queue = max_queue
        self.day_start, self.day_end = day_start, day_end
        self.layout = ActionLayout(n_couriers, region.n_restaurants)
        self.block = 2 + region.n_restaurants
        self.feature_size = n_couriers * self.block + 2
        span = region.max_trip
        self.dist_scale = float(max(span, 1))
        # upper bound on delta for a queue of max_queue orders: finite and never exceeded
        self.delta_scale = float((2 * max_queue + 2) * max(span, 1) + 15 * (max_queue + 1))
        self._rest = np.array([r.cell for r in region.restaurants], dtype=float)
        self._depot = np.array(region.depot, dtype=float)

    def _tail(self, world: World, event: SimEvent) -> tuple[float, float]:
        frac = (event.minute - self.day_start) / (self.day_end - self.day_start)
        return min(max(frac, 0.0), 1.0), 1.0 if event.kind is EventKind.ORDER_ARRIVAL else 0.0

    def _fill_block(self, out: np.ndarray, world: World, event: SimEvent, cid: int) -> None:
        c = world.couriers[cid]
        if event.kind is EventKind.ORDER_ARRIVAL:
            out[0] = expected_delivery_time(c, event.order, world.clock) / self.delta_scale
        else:
            # identity marker for the courier that must decide
            out[0] = 1.0 if cid == event.courier_id else 0.0
        loc = np.array(c.availability_location(), dtype=float)
        out[1] = np.abs(loc - self._depot).sum() / self.dist_scale
        out[2:] = np.abs(self._rest - loc).sum(axis=1) / self.dist_scale

    def encode(self, world: World, event: SimEvent) -> tuple[np.ndarray, np.ndarray]:
        if len(world.couriers) != self.n_couriers:
            raise ValueError(f"encoder built for {self.n_couriers} couriers, world has {len(world.couriers)}")
        x = np.zeros(self.feature_size)
        for cid in range(self.n_couriers):
            self._fill_block(x[cid * self.block:(cid + 1) * self.block], world, event, cid)
        x[-2:] = self._tail(world, event)
        return x, self.mask(world, event)

    def mask(self, world: World, event: SimEvent) -> np.ndarray:
        lay = self.layout
        m = np.zeros(lay.size, dtype=bool)
        if event.kind is EventKind.ORDER_ARRIVAL:
            m[lay.reject] = True
            for cid, c in enumerate(world.couriers):
                m[lay.assign(cid)] = len(c.queue) < world.max_queue
        else:
            m[lay.go_depot] = True
            m[lay.go_restaurant(0):] = True
        return m

    def encode_courier(self, world: World, event: SimEvent, cid: int) -> tuple[np.ndarray, np.ndarray]:
        """Single-courier view of courier ``cid`` in a world of any size."""
        if self.n_couriers != 1:
            raise ValueError("encode_courier needs a single-courier encoder")
        x = np.zeros(self.feature_size)
        self._fill_block(x[:self.block], world, event, cid)
        x[-2:] = self._tail(world, event)
        lay = self.layout
        m = np.zeros(lay.size, dtype=bool)
        if event.kind is EventKind.ORDER_ARRIVAL:
            m[lay.reject] = True
            m[lay.assign(0)] = len(world.couriers[cid].queue) < world.max_queue
        else:
            m[lay.go_depot] = True
            m[lay.go_restaurant(0):] = True
        return x, m


def apply_action(world: World, event: SimEvent, kind: ActionKind, arg: int | None = None,
                 rp: float = 45.0) -> float:
    """Apply a decoded action to the world and return its reward.

    ``arg`` is the courier id for assign and the restaurant id for a
    restaurant move. Reward uses the expected delivery time at decision
    time.
    """
    if event.kind is EventKind.ORDER_ARRIVAL:
        if kind is ActionKind.ASSIGN:
            delta = expected_delivery_time(world.couriers[arg], event.order, world.clock)
            world.apply_assignment(arg, event.order)
            return reward(kind, delta, rp)
        if kind is ActionKind.REJECT:
            world.apply_reject(event.order)
            return REJECT_REWARD
        raise ValueError(f"{kind.value} is infeasible on an order arrival")
    cid = event.courier_id
    c = world.couriers[cid]
    if kind is ActionKind.GO_DEPOT:
        mu = abs(c.position[0] - world.region.depot[0]) + abs(c.position[1] - world.region.depot[1])
        world.apply_go_depot(cid)
        return reward(kind, mu, rp)
    if kind is ActionKind.GO_RESTAURANT:
        cell = world.region.restaurant_cell(arg)
        eta = abs(c.position[0] - cell[0]) + abs(c.position[1] - cell[1])
        world.apply_go_restaurant(cid, arg)
        return reward(kind, eta, rp)
    raise ValueError(f"{kind.value} is infeasible on a courier-idle event")
