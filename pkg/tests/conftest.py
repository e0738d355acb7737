"""Shared fixtures: the three hand-built 6x6 dispatch scenarios and small regions."""

from __future__ import annotations

import numpy as np
import pytest

from mealdispatch.demand import Order, OrderStatus, load_profile
from mealdispatch.region import GridCoord, RegionConfig, Restaurant, generate_synthetic_region
from mealdispatch.simulation import CourierMode, EventKind, SimEvent, World

# 6x6 grid; r0 at (3,0), r1 at (1,4), depot at (5,5).
SIX = RegionConfig(
    height=6,
    width=6,
    depot=(5, 5),
    restaurants=(Restaurant(0, GridCoord(3, 0), 1.0), Restaurant(1, GridCoord(1, 4), 1.0)),
    customer_weights=tuple(tuple(1.0 for _ in range(6)) for _ in range(6)),
    name="six",
)
CLOCK = 600


def scenario_a():
    """Courier 0 carries o1 two cells from its customer; courier 1 idles 7 cells from r1.

    A new order o2 from r1 (prep 6) to a customer 4 cells away arrives now.
    """
    w = World(SIX, 2, [], day_start=480, day_end=1440, start_positions=[(0, 0), (5, 1)])
    w.clock = CLOCK
    o1 = Order(1, 0, GridCoord(3, 0), GridCoord(0, 2), CLOCK - 8, 5, OrderStatus.ASSIGNED,
               assigned_courier=0, picked_minute=CLOCK - 3)
    w.couriers[0].queue.append(o1)
    w.couriers[0].mode = CourierMode.SERVING
    o2 = Order(2, 1, GridCoord(1, 4), GridCoord(5, 4), CLOCK, 6)
    w.orders = [o1, o2]
    return w, SimEvent(EventKind.ORDER_ARRIVAL, CLOCK, order=o2)


def scenario_b():
    """Courier 0 has just delivered at (3,2) and is idle; courier 1 is away serving."""
    w = World(SIX, 2, [], day_start=480, day_end=1440, start_positions=[(3, 2), (0, 0)])
    w.clock = CLOCK
    return w, SimEvent(EventKind.COURIER_IDLE, CLOCK, courier_id=0)


def scenario_c():
    """Both couriers idle with free capacity when order o3 arrives."""
    w = World(SIX, 2, [], day_start=480, day_end=1440, start_positions=[(2, 2), (4, 5)])
    w.clock = CLOCK
    o3 = Order(3, 0, GridCoord(3, 0), GridCoord(0, 0), CLOCK, 9)
    w.orders = [o3]
    return w, SimEvent(EventKind.ORDER_ARRIVAL, CLOCK, order=o3)


@pytest.fixture
def six_region():
    return SIX


@pytest.fixture
def region10():
    return generate_synthetic_region(10, 10, 7, seed=0)


@pytest.fixture
def profile():
    return load_profile()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one "criterion N: PASS|FAIL ..." line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
