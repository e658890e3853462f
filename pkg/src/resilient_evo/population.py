"""Genome containers shared by the diversity measures and the engine."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np


@dataclass(frozen=True)
class Individual:
    """One route genome plus its (possibly empty) trash bitstring.

    Cached scores are only meaningful for the generation that produced them.
    """

    route: tuple[int, ...]
    trash: tuple[int, ...] = ()
    cached_waycost: int | None = None
    cached_fitness: float | None = None

    def same_genome(self, other: Individual) -> bool:
        return self.route == other.route and self.trash == other.trash


class Population:
    """Fixed-order population stored column-wise as numpy arrays.

    ``routes`` is ``(size, n)`` and ``trash`` is ``(size, t)``; ``t`` may be 0.
    ``waycost`` and ``fitness`` are filled by evaluation and reset by any
    operation that builds a new population.
    """

    __slots__ = ("routes", "trash", "waycost", "fitness")

    def __init__(self, routes, trash=None, waycost=None, fitness=None):
        self.routes = np.asarray(routes, dtype=np.int64)
        if self.routes.ndim != 2:
            raise ValueError(f"routes must be 2-D, got shape {self.routes.shape}")
        if trash is None:
            trash = np.zeros((len(self.routes), 0), dtype=np.uint8)
        self.trash = np.asarray(trash, dtype=np.uint8)
        if self.trash.ndim != 2 or len(self.trash) != len(self.routes):
            raise ValueError("trash must be 2-D with one row per individual")
        self.waycost = None if waycost is None else np.asarray(waycost, dtype=np.int64)
        self.fitness = None if fitness is None else np.asarray(fitness, dtype=np.float64)

    @classmethod
    def from_individuals(cls, individuals: Iterable[Individual]) -> Population:
        individuals = list(individuals)
        if not individuals:
            raise ValueError("population must not be empty")
        t = len(individuals[0].trash)
        if any(len(ind.trash) != t for ind in individuals):
            raise ValueError("all individuals must carry the same number of trash bits")
        routes = np.array([ind.route for ind in individuals], dtype=np.int64)
        trash = np.array([ind.trash for ind in individuals], dtype=np.uint8).reshape(len(individuals), t)
        return cls(routes, trash)

    @property
    def n(self) -> int:
        return self.routes.shape[1]

    @property
    def t(self) -> int:
        return self.trash.shape[1]

    @property
    def evaluated(self) -> bool:
        return self.waycost is not None and self.fitness is not None

    def __len__(self) -> int:
        return len(self.routes)

    def __getitem__(self, index: int) -> Individual:
        return Individual(
            route=tuple(int(g) for g in self.routes[index]),
            trash=tuple(int(b) for b in self.trash[index]),
            cached_waycost=None if self.waycost is None else int(self.waycost[index]),
            cached_fitness=None if self.fitness is None else float(self.fitness[index]),
        )

    def __iter__(self) -> Iterator[Individual]:
        return (self[i] for i in range(len(self)))

    def index_of(self, ind: Individual) -> int:
        """Index of the first member with the same genome, or -1."""
        hits = np.all(self.routes == np.asarray(ind.route), axis=1)
        if self.t or ind.trash:
            if len(ind.trash) != self.t:
                return -1
            hits &= np.all(self.trash == np.asarray(ind.trash, dtype=np.uint8), axis=1)
        found = np.flatnonzero(hits)
        return int(found[0]) if len(found) else -1

    def take(self, indices) -> Population:
        """Unevaluated sub-population in the given order."""
        return Population(self.routes[indices], self.trash[indices])

    def concat(self, *others: Population) -> Population:
        return Population(
            np.concatenate([self.routes, *(o.routes for o in others)]),
            np.concatenate([self.trash, *(o.trash for o in others)]),
        )

    def copy(self) -> Population:
        return Population(
            self.routes.copy(),
            self.trash.copy(),
            None if self.waycost is None else self.waycost.copy(),
            None if self.fitness is None else self.fitness.copy(),
        )

    def genome_equal(self, other: Population) -> bool:
        return np.array_equal(self.routes, other.routes) and np.array_equal(self.trash, other.trash)
