"""Exhaustive ground truth over the complete route space of a layout."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from resilient_evo.domain import FactoryLayout, waycosts
from resilient_evo.errors import BudgetExceeded

DEFAULT_BUDGET = 10**7
DEFAULT_EPSILON = 0.5


def route_count(layout: FactoryLayout) -> int:
    return layout.m**layout.n


def _check_budget(layout: FactoryLayout, budget: int) -> None:
    total = route_count(layout)
    if total > budget:
        raise BudgetExceeded(f"{layout.m}^{layout.n} = {total} routes exceed the enumeration budget of {budget}")


def all_routes(n: int, m: int) -> np.ndarray:
    """Every route in lexicographic order, shape ``(m**n, n)``."""
    grids = np.indices((m,) * n).reshape(n, -1)
    return grids.T.copy()


@dataclass
class PlanTable:
    """Waycost of every route of a layout; ``routes`` is in lexicographic order."""

    routes: np.ndarray
    costs: np.ndarray

    def __len__(self) -> int:
        return len(self.costs)

    @property
    def optimum(self) -> int:
        return int(self.costs.min())

    def argmin_set(self) -> set[tuple[int, ...]]:
        hits = self.routes[self.costs == self.costs.min()]
        return {tuple(int(g) for g in r) for r in hits}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["route", "waycost"])
        for route, cost in zip(self.routes, self.costs):
            writer.writerow(["-".join(str(int(g)) for g in route), int(cost)])
        return buf.getvalue()


def plan_table(layout: FactoryLayout, budget: int = DEFAULT_BUDGET) -> PlanTable:
    _check_budget(layout, budget)
    routes = all_routes(layout.n, layout.m)
    return PlanTable(routes, waycosts(routes, layout))


def enumerate_optimum(layout: FactoryLayout, budget: int = DEFAULT_BUDGET) -> tuple[tuple[int, ...], int]:
    """Global minimum waycost and the lexicographically smallest route attaining it."""
    table = plan_table(layout, budget)
    best = int(np.argmin(table.costs))  # first hit in lexicographic order
    return tuple(int(g) for g in table.routes[best]), int(table.costs[best])


def _same_shape(e1: FactoryLayout, e2: FactoryLayout) -> None:
    if (e1.n, e1.m) != (e2.n, e2.m):
        raise ValueError(f"layouts differ in shape: {e1.n}x{e1.m} vs {e2.n}x{e2.m}")


def affected_fraction(e1: FactoryLayout, e2: FactoryLayout, epsilon: float = DEFAULT_EPSILON,
                      budget: int = DEFAULT_BUDGET) -> float:
    """Share of all routes whose waycost moves by more than ``epsilon`` between the layouts."""
    _same_shape(e1, e2)
    t1, t2 = plan_table(e1, budget), plan_table(e2, budget)
    return float(np.mean(np.abs(t1.costs - t2.costs) > epsilon))


def is_unexpected(e1: FactoryLayout, e2: FactoryLayout, budget: int = DEFAULT_BUDGET) -> bool:
    """True iff no route is optimal in both layouts."""
    _same_shape(e1, e2)
    return plan_table(e1, budget).argmin_set().isdisjoint(plan_table(e2, budget).argmin_set())
