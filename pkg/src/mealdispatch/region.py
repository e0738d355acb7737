"""Grid world geometry and static region configuration.

One cell is roughly 500 m x 500 m and moving to an adjacent cell takes one
minute, so Manhattan distance doubles as travel time in minutes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np


class RegionError(ValueError):
    """Raised for malformed region files or invariant violations."""


class GridCoord(NamedTuple):
    row: int
    col: int


def manhattan(a: GridCoord, b: GridCoord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class Restaurant:
    id: int
    cell: GridCoord
    popularity: float


@dataclass(frozen=True)
class RegionConfig:
    height: int
    width: int
    depot: GridCoord
    restaurants: tuple[Restaurant, ...]
    customer_weights: tuple[tuple[float, ...], ...]
    name: str = "region"

    def __post_init__(self):
        object.__setattr__(self, "depot", GridCoord(*self.depot))
        object.__setattr__(self, "restaurants", tuple(self.restaurants))
        object.__setattr__(
            self, "customer_weights", tuple(tuple(float(w) for w in row) for row in self.customer_weights)
        )
        validate_region(self)

    @property
    def n_restaurants(self) -> int:
        return len(self.restaurants)

    @property
    def max_trip(self) -> int:
        """Longest Manhattan distance between two cells of the grid."""
        return self.height + self.width - 2

    def contains(self, cell: GridCoord) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    @cached_property
    def restaurant_probs(self) -> np.ndarray:
        w = np.array([r.popularity for r in self.restaurants], dtype=float)
        return w / w.sum()

    @cached_property
    def customer_probs(self) -> np.ndarray:
        """Row-major flattened customer demand distribution."""
        w = np.asarray(self.customer_weights, dtype=float).ravel()
        return w / w.sum()

    def restaurant_cell(self, rid: int) -> GridCoord:
        return self.restaurants[rid].cell


def validate_region(cfg: RegionConfig) -> None:
    if not (isinstance(cfg.height, int) and cfg.height >= 1):
        raise RegionError(f"height must be a positive integer, got {cfg.height!r}")
    if not (isinstance(cfg.width, int) and cfg.width >= 1):
        raise RegionError(f"width must be a positive integer, got {cfg.width!r}")
    if not cfg.contains(cfg.depot):
        raise RegionError(f"depot {tuple(cfg.depot)} lies outside the {cfg.height}x{cfg.width} grid")
    if not cfg.restaurants:
        raise RegionError("restaurants: at least one restaurant is required")
    for i, r in enumerate(cfg.restaurants):
        if r.id != i:
            raise RegionError(f"restaurants: ids must be dense 0..R-1, found id {r.id} at position {i}")
        if not cfg.contains(r.cell):
            raise RegionError(f"restaurant {r.id}: cell {tuple(r.cell)} lies outside the grid")
        if not np.isfinite(r.popularity) or r.popularity < 0:
            raise RegionError(f"restaurant {r.id}: popularity must be finite and >= 0, got {r.popularity}")
    if sum(r.popularity for r in cfg.restaurants) <= 0:
        raise RegionError("restaurants: popularity weights must sum to a positive value")
    cw = cfg.customer_weights
    if len(cw) != cfg.height or any(len(row) != cfg.width for row in cw):
        raise RegionError(f"customer_weights must be a {cfg.height}x{cfg.width} matrix")
    flat = [w for row in cw for w in row]
    if any((not np.isfinite(w)) or w < 0 for w in flat):
        raise RegionError("customer_weights: entries must be finite and >= 0")
    if not any(w > 0 for w in flat):
        raise RegionError("customer_weights: at least one entry must be positive")


# Istanbul district shapes: (height, width, active restaurant cells, active customer cells, depot)
CITY_REGION_SHAPES = {
    "hisarustu": (27, 37, 87, 239, (21, 19)),
    "uskudar": (34, 33, 94, 405, (13, 18)),
    "bomonti": (34, 32, 153, 373, (17, 13)),
}


def generate_synthetic_region(
    height: int = 10,
    width: int = 10,
    n_restaurants: int = 7,
    seed: int = 0,
    *,
    depot: tuple[int, int] | None = None,
    n_customer_cells: int | None = None,
    name: str | None = None,
) -> RegionConfig:
    """Build a reproducible synthetic region.

    The depot defaults to the middle cell. Restaurants occupy distinct
    non-depot cells and get long-tailed popularity weights (squared
    uniform), so daily order counts differ between restaurants. Customers
    are uniform over the grid unless ``n_customer_cells`` restricts demand
    to a cluster of that many cells around a random centre.
    """
    if height < 1 or width < 1:
        raise RegionError(f"grid dimensions must be positive, got {height}x{width}")
    if not 1 <= n_restaurants <= height * width - 1:
        raise RegionError(f"n_restaurants must be in [1, {height * width - 1}], got {n_restaurants}")
    rng = np.random.default_rng(seed)
    depot = GridCoord(*(depot if depot is not None else (height // 2, width // 2)))
    cells = [GridCoord(r, c) for r in range(height) for c in range(width) if (r, c) != tuple(depot)]
    picks = rng.choice(len(cells), size=n_restaurants, replace=False)
    popularity = rng.uniform(0.1, 1.0, size=n_restaurants) ** 2
    restaurants = tuple(
        Restaurant(i, cells[int(k)], float(p)) for i, (k, p) in enumerate(zip(picks, popularity))
    )
    weights = np.ones((height, width))
    if n_customer_cells is not None:
        if not 1 <= n_customer_cells <= height * width:
            raise RegionError(f"n_customer_cells must be in [1, {height * width}]")
        centre = (rng.uniform(height * 0.3, height * 0.7), rng.uniform(width * 0.3, width * 0.7))
        rr, cc = np.indices((height, width))
        dist = np.abs(rr - centre[0]) + np.abs(cc - centre[1]) + rng.uniform(0, 1e-3, size=(height, width))
        active = np.argsort(dist, axis=None)[:n_customer_cells]
        weights = np.zeros(height * width)
        # denser demand near the centre
        weights[active] = rng.uniform(0.2, 1.0, size=n_customer_cells) / (1.0 + dist.ravel()[active])
        weights = weights.reshape(height, width)
    return RegionConfig(
        height=height,
        width=width,
        depot=depot,
        restaurants=restaurants,
        customer_weights=tuple(tuple(float(x) for x in row) for row in weights),
        name=name or f"synthetic-{height}x{width}-r{n_restaurants}-s{seed}",
    )


def city_shaped_region(key: str, seed: int = 0) -> RegionConfig:
    """Synthetic region with the size, restaurant count, customer spread and depot of a named district."""
    height, width, n_rest, n_cust, depot = CITY_REGION_SHAPES[key.lower()]
    return generate_synthetic_region(
        height, width, n_rest, seed, depot=depot, n_customer_cells=n_cust, name=key.lower()
    )


def region_to_dict(cfg: RegionConfig) -> dict:
    return {
        "name": cfg.name,
        "height": cfg.height,
        "width": cfg.width,
        "depot": list(cfg.depot),
        "restaurants": [
            {"id": r.id, "cell": list(r.cell), "popularity": r.popularity} for r in cfg.restaurants
        ],
        "customer_weights": [list(row) for row in cfg.customer_weights],
    }


def _require(doc: dict, key: str, where: str = "region"):
    if key not in doc:
        raise RegionError(f"{where}: missing field '{key}'")
    return doc[key]


def region_from_dict(doc: dict) -> RegionConfig:
    if not isinstance(doc, dict):
        raise RegionError("region: top-level document must be an object")
    restaurants = []
    for i, item in enumerate(_require(doc, "restaurants")):
        where = f"restaurants[{i}]"
        rid = _require(item, "id", where)
        cell = _require(item, "cell", where)
        pop = _require(item, "popularity", where)
        if not isinstance(pop, (int, float)) or pop < 0:
            raise RegionError(f"restaurant {rid}: popularity must be a number >= 0, got {pop!r}")
        restaurants.append(Restaurant(int(rid), GridCoord(int(cell[0]), int(cell[1])), float(pop)))
    depot = _require(doc, "depot")
    try:
        depot = GridCoord(int(depot[0]), int(depot[1]))
    except (TypeError, IndexError, ValueError) as exc:
        raise RegionError(f"depot: expected [row, col], got {depot!r}") from exc
    return RegionConfig(
        height=int(_require(doc, "height")),
        width=int(_require(doc, "width")),
        depot=depot,
        restaurants=tuple(restaurants),
        customer_weights=_require(doc, "customer_weights"),
        name=str(doc.get("name", "region")),
    )


def save_region(cfg: RegionConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(region_to_dict(cfg), indent=1) + "\n")


def load_region(path: str | Path) -> RegionConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise RegionError(f"{path}:{exc.lineno}:{exc.colno}: parse error: {exc.msg}") from exc
    return region_from_dict(doc)
