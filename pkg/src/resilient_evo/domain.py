"""Smart-factory environment: station layouts, Manhattan route cost and the
random station-disabling change function."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from resilient_evo.errors import ConfigError, DomainError

DEFAULT_OFFSET = (2500, 2500)


@dataclass(frozen=True)
class Coord:
    x: int
    y: int


@dataclass(frozen=True)
class ChangeRecord:
    """Stations moved by one application of the change function."""

    moved: tuple[tuple[int, int], ...]
    offset: Coord

    @property
    def amount(self) -> int:
        return len(self.moved)


@dataclass(frozen=True, eq=False)
class FactoryLayout:
    """Station coordinates for ``n`` tasks with ``m`` interchangeable stations each.

    ``stations`` has shape ``(n, m, 2)``; row ``i`` holds the stations able to
    perform task ``i`` and ``stations[i, j]`` is the ``(x, y)`` of station ``j``.
    """

    stations: np.ndarray
    width: int
    height: int
    start: Coord = field(default_factory=lambda: Coord(0, 0))

    def __post_init__(self):
        arr = np.array(self.stations, dtype=np.int64)
        if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ConfigError(f"stations must have shape (n, m, 2), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "stations", arr)

    @property
    def n(self) -> int:
        return self.stations.shape[0]

    @property
    def m(self) -> int:
        return self.stations.shape[1]

    def station(self, task: int, station_id: int) -> Coord:
        x, y = self.stations[task, station_id]
        return Coord(int(x), int(y))

    def __eq__(self, other):
        if not isinstance(other, FactoryLayout):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.start == other.start
            and np.array_equal(self.stations, other.stations)
        )

    def __hash__(self):
        return hash((self.width, self.height, self.start, self.stations.tobytes()))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "width": self.width,
            "height": self.height,
            "start": [self.start.x, self.start.y],
            "stations": self.stations.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> FactoryLayout:
        try:
            stations = np.asarray(data["stations"], dtype=np.int64)
            layout = cls(
                stations=stations,
                width=int(data["width"]),
                height=int(data["height"]),
                start=Coord(*map(int, data.get("start", (0, 0)))),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed layout: {exc}") from exc
        if "n" in data and int(data["n"]) != layout.n or "m" in data and int(data["m"]) != layout.m:
            raise ConfigError("layout n/m do not match the stations matrix")
        return layout

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> FactoryLayout:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"layout is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def generate_layout(n: int, m: int, width: int, height: int, rng: np.random.Generator,
                    start: Coord = Coord(0, 0)) -> FactoryLayout:
    """Draw every station coordinate uniformly from the ``width x height`` grid."""
    for name, value in (("n", n), ("m", m), ("width", width), ("height", height)):
        if value < 1:
            raise ConfigError(f"{name} must be >= 1, got {value}")
    xs = rng.integers(0, width, size=(n, m))
    ys = rng.integers(0, height, size=(n, m))
    return FactoryLayout(np.stack([xs, ys], axis=-1), width, height, start)


def l1_distance(a: Coord, b: Coord) -> int:
    return abs(a.x - b.x) + abs(a.y - b.y)


def waycost(route: Sequence[int], layout: FactoryLayout) -> int:
    """Length of the Manhattan path from the start through one station per task.

    There is no return leg after the last task.
    """
    if len(route) != layout.n:
        raise DomainError(f"route has {len(route)} entries, layout has {layout.n} tasks")
    total = 0
    here = layout.start
    for task, station_id in enumerate(route):
        if not 0 <= station_id < layout.m:
            raise DomainError(f"station id {station_id} out of range for task {task}")
        there = layout.station(task, int(station_id))
        total += l1_distance(here, there)
        here = there
    return total


def waycosts(routes: np.ndarray, layout: FactoryLayout) -> np.ndarray:
    """Vectorised :func:`waycost` over a ``(k, n)`` array of routes."""
    routes = np.asarray(routes)
    if routes.ndim != 2 or routes.shape[1] != layout.n:
        raise DomainError(f"routes must have shape (k, {layout.n}), got {routes.shape}")
    if routes.size and (routes.min() < 0 or routes.max() >= layout.m):
        raise DomainError("station id out of range")
    points = layout.stations[np.arange(layout.n), routes]  # (k, n, 2)
    start = np.array([layout.start.x, layout.start.y], dtype=np.int64)
    first = np.abs(points[:, 0] - start).sum(axis=-1)
    rest = np.abs(np.diff(points, axis=1)).sum(axis=(1, 2))
    return first + rest


def apply_change(layout: FactoryLayout, amount: int, offset: Coord | tuple[int, int],
                 rng: np.random.Generator) -> tuple[FactoryLayout, ChangeRecord]:
    """Move ``amount`` distinct stations, sampled without replacement, by ``offset``.

    The input layout is left untouched.
    """
    offset = offset if isinstance(offset, Coord) else Coord(*offset)
    total = layout.n * layout.m
    if not 0 <= amount <= total:
        raise ConfigError(f"change amount must be in [0, {total}], got {amount}")
    flat = rng.choice(total, size=amount, replace=False) if amount else np.empty(0, dtype=np.int64)
    moved = tuple((int(k // layout.m), int(k % layout.m)) for k in flat)
    stations = layout.stations.copy()
    for i, j in moved:
        stations[i, j] += (offset.x, offset.y)
    changed = FactoryLayout(stations, layout.width, layout.height, layout.start)
    return changed, ChangeRecord(moved, offset)
