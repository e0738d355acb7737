"""Stochastic order streams.

Arrivals follow an hour-dependent exponential interarrival law with rate
``floor(share_h * N)`` orders per hour. Each order picks a restaurant by
popularity and a customer cell by demand weight; food preparation takes a
uniform integer number of minutes in [5, 15].
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .region import GridCoord, RegionConfig, manhattan

PREP_MIN = 5
PREP_MAX = 15


class OrderStatus(str, enum.Enum):
    PENDING = "pending-decision"
    ASSIGNED = "assigned"
    DELIVERED = "delivered"
    REJECTED = "rejected"


@dataclass
class Order:
    id: int
    restaurant_id: int
    origin: GridCoord
    destination: GridCoord
    placed_minute: int
    prep_time: int
    status: OrderStatus = OrderStatus.PENDING
    delivered_minute: int | None = None
    assigned_courier: int | None = None
    picked_minute: int | None = None

    @property
    def ready_minute(self) -> int:
        return self.placed_minute + self.prep_time

    @property
    def trip_length(self) -> int:
        return manhattan(self.origin, self.destination)

    @property
    def delivery_time(self) -> int | None:
        if self.delivered_minute is None:
            return None
        return self.delivered_minute - self.placed_minute

    def copy(self) -> "Order":
        return Order(**{f: getattr(self, f) for f in self.__dataclass_fields__})


@dataclass(frozen=True)
class HourlyProfile:
    """Fraction of daily orders placed in each hour of the active day."""

    shares: dict[int, float]
    day_start_minute: int = 480
    day_end_minute: int = 1440
    name: str = "profile"
    active_hours: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.day_start_minute < self.day_end_minute <= 1440:
            raise ValueError(
                f"need 0 <= day_start_minute < day_end_minute <= 1440, "
                f"got {self.day_start_minute}, {self.day_end_minute}"
            )
        shares = {int(h): float(v) for h, v in self.shares.items()}
        first, last = self.day_start_minute // 60, (self.day_end_minute - 1) // 60
        for h, v in shares.items():
            if v < 0 or not math.isfinite(v):
                raise ValueError(f"share for hour {h} must be finite and >= 0, got {v}")
            if v > 0 and not first <= h <= last:
                raise ValueError(f"hour {h} has positive share but lies outside the active day")
        total = sum(shares.values())
        if shares and total > 0 and abs(total - 1.0) > 1e-9:
            raise ValueError(f"hourly shares must sum to 1, got {total!r}")
        object.__setattr__(self, "shares", dict(sorted(shares.items())))
        object.__setattr__(self, "active_hours", tuple(range(first, last + 1)))

    @property
    def day_minutes(self) -> int:
        return self.day_end_minute - self.day_start_minute

    def share(self, hour: int) -> float:
        return self.shares.get(hour, 0.0)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "day_start_minute": self.day_start_minute,
            "day_end_minute": self.day_end_minute,
            "shares": {str(h): v for h, v in self.shares.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HourlyProfile":
        return cls(
            shares={int(h): float(v) for h, v in doc["shares"].items()},
            day_start_minute=int(doc.get("day_start_minute", 480)),
            day_end_minute=int(doc.get("day_end_minute", 1440)),
            name=str(doc.get("name", "profile")),
        )


def load_profile(path: str | Path | None = None) -> HourlyProfile:
    """Read an hour -> share table; ``None`` loads the bundled two-peak profile."""
    if path is None:
        text = resources.files("mealdispatch").joinpath("data/default_profile.json").read_text()
    else:
        text = Path(path).read_text()
    return HourlyProfile.from_dict(json.loads(text))


def save_profile(profile: HourlyProfile, path: str | Path) -> None:
    Path(path).write_text(json.dumps(profile.to_dict(), indent=1) + "\n")


def hourly_rate(profile: HourlyProfile, daily_count: int, hour: int) -> int:
    # the epsilon absorbs binary round-off such as 0.29 * 100 = 28.999...
    return int(math.floor(profile.share(hour) * daily_count + 1e-9))


def expected_daily_orders(profile: HourlyProfile, daily_count: int) -> int:
    return sum(hourly_rate(profile, daily_count, h) for h in profile.active_hours)


def sample_arrivals(profile: HourlyProfile, daily_count: int, rng: np.random.Generator) -> np.ndarray:
    """Arrival times (fractional minutes from midnight) for one day, sorted.

    Each hour runs its own exponential clock from the hour start; the
    residual gap at the hour boundary is discarded.
    """
    out = []
    for hour in profile.active_hours:
        lam = hourly_rate(profile, daily_count, hour)
        lo = max(hour * 60, profile.day_start_minute)
        hi = min(hour * 60 + 60, profile.day_end_minute)
        if lam <= 0 or hi <= lo:
            continue
        scale = 60.0 / lam
        span = hi - lo
        # draw in chunks until the running sum crosses the hour boundary
        n = int(lam * span / 60 + 4 * math.sqrt(lam) + 8)
        times = np.cumsum(rng.exponential(scale, size=n))
        while times[-1] < span:
            more = np.cumsum(rng.exponential(scale, size=n)) + times[-1]
            times = np.concatenate([times, more])
        out.append(lo + times[times < span])
    if not out:
        return np.empty(0)
    return np.concatenate(out)


def _draw_cell(region: RegionConfig, flat_index: int) -> GridCoord:
    r, c = divmod(int(flat_index), region.width)
    return GridCoord(r, c)


def sample_order(region: RegionConfig, rng: np.random.Generator, minute: int, order_id: int = 0) -> Order:
    rid = int(rng.choice(region.n_restaurants, p=region.restaurant_probs))
    dest = _draw_cell(region, rng.choice(region.customer_probs.size, p=region.customer_probs))
    prep = int(rng.integers(PREP_MIN, PREP_MAX + 1))
    return Order(order_id, rid, region.restaurant_cell(rid), dest, int(minute), prep)


def split_multi_restaurant(
    region: RegionConfig,
    cart: Iterable[tuple[int, GridCoord]],
    minute: int,
    rng: np.random.Generator,
    first_id: int = 0,
) -> list[Order]:
    """Break a multi-restaurant cart into one order per distinct restaurant."""
    cart = list(cart)
    if not cart:
        raise ValueError("cart is empty")
    destinations = {tuple(dest) for _, dest in cart}
    if len(destinations) != 1:
        raise ValueError(f"cart items must share one destination, got {sorted(destinations)}")
    dest = GridCoord(*cart[0][1])
    seen: list[int] = []
    for rid, _ in cart:
        if rid not in seen:
            seen.append(int(rid))
    return [
        Order(first_id + k, rid, region.restaurant_cell(rid), dest, int(minute),
              int(rng.integers(PREP_MIN, PREP_MAX + 1)))
        for k, rid in enumerate(seen)
    ]


def sample_day(
    region: RegionConfig,
    profile: HourlyProfile,
    daily_count: int,
    rng: np.random.Generator,
    multi_restaurant_prob: float = 0.0,
) -> list[Order]:
    """Full order stream for one day, ordered by placement minute then id."""
    arrivals = np.floor(sample_arrivals(profile, daily_count, rng)).astype(int)
    n = arrivals.size
    rids = rng.choice(region.n_restaurants, size=n, p=region.restaurant_probs)
    dests = rng.choice(region.customer_probs.size, size=n, p=region.customer_probs)
    preps = rng.integers(PREP_MIN, PREP_MAX + 1, size=n)
    orders: list[Order] = []
    for minute, rid, dest, prep in zip(arrivals, rids, dests, preps):
        cell = _draw_cell(region, dest)
        if multi_restaurant_prob > 0 and region.n_restaurants > 1 and rng.random() < multi_restaurant_prob:
            other = int(rng.choice(region.n_restaurants, p=region.restaurant_probs))
            orders.extend(split_multi_restaurant(region, [(int(rid), cell), (other, cell)], minute, rng, len(orders)))
        else:
            orders.append(Order(len(orders), int(rid), region.restaurant_cell(int(rid)), cell, int(minute), int(prep)))
    return orders
