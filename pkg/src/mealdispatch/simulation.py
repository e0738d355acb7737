"""Minute-stepped courier world.

Couriers move one cell per minute along a rows-then-columns Manhattan
path. A serving courier works its queue first-in first-out: travel to the
restaurant, wait for the food, carry it to the customer. Pickup and
hand-off are instantaneous. Within one minute the world processes
deliveries first, then courier-idle decisions, then new order arrivals.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

from .demand import Order, OrderStatus
from .region import GridCoord, RegionConfig, manhattan


class SimulationError(RuntimeError):
    """An action was applied that the current world state does not allow."""


class CourierMode(str, enum.Enum):
    IDLE = "idle"
    REPOSITIONING = "repositioning"
    RETURNING = "returning"
    SERVING = "serving"


class EventKind(str, enum.Enum):
    ORDER_ARRIVAL = "order-arrival"
    COURIER_IDLE = "courier-idle"


@dataclass(frozen=True)
class SimEvent:
    kind: EventKind
    minute: int
    order: Order | None = None
    courier_id: int | None = None


def step_toward(pos: GridCoord, target: GridCoord) -> GridCoord:
    if pos[0] != target[0]:
        return GridCoord(pos[0] + (1 if target[0] > pos[0] else -1), pos[1])
    if pos[1] != target[1]:
        return GridCoord(pos[0], pos[1] + (1 if target[1] > pos[1] else -1))
    return pos


def manhattan_path(a: GridCoord, b: GridCoord) -> list[GridCoord]:
    """Cells visited after leaving ``a`` on the way to ``b`` (rows first)."""
    out = []
    while a != b:
        a = step_toward(a, b)
        out.append(a)
    return out


@dataclass
class Courier:
    id: int
    position: GridCoord
    queue: list[Order] = field(default_factory=list)
    mode: CourierMode = CourierMode.IDLE
    target: GridCoord | None = None
    target_restaurant: int | None = None
    busy_minutes: int = 0
    mode_minutes: dict = field(default_factory=lambda: {m.value: 0 for m in CourierMode})

    @property
    def current_target(self) -> GridCoord | None:
        if self.queue:
            head = self.queue[0]
            return head.destination if head.picked_minute is not None else head.origin
        return self.target

    @property
    def path(self) -> list[GridCoord]:
        tgt = self.current_target
        return [] if tgt is None else manhattan_path(self.position, tgt)

    def availability_location(self) -> GridCoord:
        return self.queue[-1].destination if self.queue else self.position


def time_to_finish_queue(courier: Courier, clock: int) -> int:
    """Minutes until the courier hands off the last order in its queue."""
    t, pos = clock, courier.position
    for o in courier.queue:
        if o.picked_minute is None:
            t = max(t + manhattan(pos, o.origin), o.ready_minute)
            pos = o.origin
        t += manhattan(pos, o.destination)
        pos = o.destination
    return t - clock


def expected_delivery_time(courier: Courier, order: Order, clock: int) -> int:
    """Predicted minutes from placement to hand-off if ``order`` joins the queue.

    With the decision taken at the placement minute this is
    ``d_o + max(prep, e_c + d~)``: trip length plus the later of food
    readiness and the courier reaching the restaurant from its location of
    availability.
    """
    e_c = time_to_finish_queue(courier, clock)
    reach = e_c + manhattan(courier.availability_location(), order.origin)
    return (clock - order.placed_minute) + order.trip_length + max(order.ready_minute - clock, reach)


class World:
    """One simulated day: couriers, the order stream and the clock."""

    def __init__(
        self,
        region: RegionConfig,
        n_couriers: int,
        orders: list[Order] | None = None,
        *,
        max_queue: int = 2,
        day_start: int = 480,
        day_end: int = 1440,
        trace: bool = False,
        day_index: int = 0,
        start_positions: list[GridCoord] | None = None,
    ):
        if n_couriers < 1:
            raise ValueError("need at least one courier")
        if max_queue < 1:
            raise ValueError("max_queue must be >= 1")
        self.region = region
        self.max_queue = max_queue
        self.day_start, self.day_end = day_start, day_end
        self.day_index = day_index
        self.clock = day_start - 1
        starts = start_positions or [region.depot] * n_couriers
        self.couriers = [Courier(i, GridCoord(*p)) for i, p in enumerate(starts)]
        self.orders: list[Order] = sorted(orders or [], key=lambda o: (o.placed_minute, o.id))
        for o in self.orders:
            if not day_start <= o.placed_minute < day_end:
                raise ValueError(f"order {o.id} placed at {o.placed_minute} outside the day")
        self._arrivals = deque(self.orders)
        self._events: deque[SimEvent] = deque()
        self.current_event: SimEvent | None = None
        self.trace_rows: list[tuple] | None = [] if trace else None

    # ------------------------------------------------------------------ time
    def tick(self) -> list[SimEvent]:
        """Advance one minute and return the decision events it raises."""
        self.clock += 1
        now = self.clock
        in_shift = self.day_start <= now - 1 < self.day_end
        events: list[SimEvent] = []
        for c in self.couriers:
            if in_shift:
                c.mode_minutes[c.mode.value] += 1
                if c.mode is CourierMode.SERVING:
                    c.busy_minutes += 1
            tgt = c.current_target
            if tgt is not None and c.position != tgt:
                c.position = step_toward(c.position, tgt)
            if c.mode in (CourierMode.REPOSITIONING, CourierMode.RETURNING) and c.position == c.target:
                c.mode, c.target, c.target_restaurant = CourierMode.IDLE, None, None
            if self._settle(c) and now < self.day_end:
                events.append(SimEvent(EventKind.COURIER_IDLE, now, courier_id=c.id))
        while self._arrivals and self._arrivals[0].placed_minute <= now:
            o = self._arrivals.popleft()
            events.append(SimEvent(EventKind.ORDER_ARRIVAL, now, order=o))
        if self.trace_rows is not None:
            for c in self.couriers:
                self.trace_rows.append((now, c.id, c.position[0], c.position[1], c.mode.value, len(c.queue), ""))
            for e in events:
                self.trace_rows.append(
                    (now, e.courier_id if e.courier_id is not None else -1, -1, -1, "", -1,
                     f"{e.kind.value}:{e.order.id if e.order else ''}")
                )
        return events

    def _settle(self, c: Courier) -> bool:
        """Apply instantaneous pickups/hand-offs; True if the queue just emptied."""
        delivered = False
        while c.queue:
            head = c.queue[0]
            if head.picked_minute is None:
                if c.position == head.origin and self.clock >= head.ready_minute:
                    head.picked_minute = self.clock
                else:
                    break
            if c.position == head.destination:
                head.delivered_minute = self.clock
                head.status = OrderStatus.DELIVERED
                c.queue.pop(0)
                delivered = True
            else:
                break
        if delivered and not c.queue:
            c.mode = CourierMode.IDLE
            return True
        return False

    def next_event(self) -> SimEvent | None:
        """Next pending decision, ticking the clock as needed; None once the day closes."""
        while not self._events:
            if self.clock >= self.day_end - 1:
                self.current_event = None
                return None
            self._events.extend(self.tick())
        self.current_event = self._events.popleft()
        return self.current_event

    def finish(self, limit: int = 100_000) -> None:
        """Run past the horizon until every accepted order is delivered."""
        while self._events:
            ev = self._events.popleft()
            if ev.kind is EventKind.ORDER_ARRIVAL and ev.order.status is OrderStatus.PENDING:
                raise SimulationError(f"order {ev.order.id} was never decided")
        for _ in range(limit):
            if not any(c.queue for c in self.couriers):
                return
            self.tick()
        raise SimulationError("queues failed to drain")

    # --------------------------------------------------------------- actions
    def courier(self, cid: int) -> Courier:
        return self.couriers[cid]

    def apply_assignment(self, cid: int, order: Order) -> None:
        c = self.couriers[cid]
        if order.status is not OrderStatus.PENDING:
            raise SimulationError(f"order {order.id} is {order.status.value}, not pending")
        if len(c.queue) >= self.max_queue:
            raise SimulationError(f"courier {cid} queue is full ({self.max_queue})")
        order.status = OrderStatus.ASSIGNED
        order.assigned_courier = cid
        c.queue.append(order)
        c.mode, c.target, c.target_restaurant = CourierMode.SERVING, None, None
        self._settle(c)

    def apply_reject(self, order: Order) -> None:
        if order.status is not OrderStatus.PENDING:
            raise SimulationError(f"order {order.id} is {order.status.value}, not pending")
        order.status = OrderStatus.REJECTED

    def _check_idle(self, cid: int) -> Courier:
        c = self.couriers[cid]
        if c.queue:
            raise SimulationError(f"courier {cid} is serving and cannot be repositioned")
        return c

    def apply_go_depot(self, cid: int) -> None:
        c = self._check_idle(cid)
        if c.position == self.region.depot:
            c.mode, c.target, c.target_restaurant = CourierMode.IDLE, None, None
        else:
            c.mode, c.target, c.target_restaurant = CourierMode.RETURNING, self.region.depot, None
        self._log_action(cid, "go-depot")

    def apply_go_restaurant(self, cid: int, rid: int) -> None:
        c = self._check_idle(cid)
        cell = self.region.restaurant_cell(rid)
        if c.position == cell:
            c.mode, c.target, c.target_restaurant = CourierMode.IDLE, None, None
        else:
            c.mode, c.target, c.target_restaurant = CourierMode.REPOSITIONING, cell, rid
        self._log_action(cid, f"go-restaurant:{rid}")

    def _log_action(self, cid: int, what: str) -> None:
        if self.trace_rows is not None:
            c = self.couriers[cid]
            self.trace_rows.append((self.clock, cid, c.position[0], c.position[1], c.mode.value, len(c.queue), what))
