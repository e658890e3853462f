"""Match-count similarity of an individual to its population.

Two measures are provided: per-gene matches on the route (domain distance) and
per-bit matches on the selection-neutral trash bits (genealogical). Both
exclude the individual's match with itself. ``normalized_*`` maps the counts to
``[0, 1]`` and diversity is reported as one minus that value.
"""

from __future__ import annotations

import enum

import numpy as np

from resilient_evo.population import Individual, Population


class DiversityMode(enum.Enum):
    NONE = "none"
    DOMAIN = "dom"
    GENEALOGICAL = "gen"

    @classmethod
    def parse(cls, text: str) -> DiversityMode:
        aliases = {
            "none": cls.NONE,
            "dom": cls.DOMAIN,
            "domain": cls.DOMAIN,
            "gen": cls.GENEALOGICAL,
            "genealogical": cls.GENEALOGICAL,
        }
        try:
            return aliases[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown diversity mode {text!r}; expected one of none, dom, gen") from None


def _match_count(values: tuple[int, ...], columns: np.ndarray) -> int:
    # columns: (|P|, k); count equal entries column by column
    return int((columns == np.asarray(values, dtype=columns.dtype)).sum())


def similarity_dom(v: Individual, pop: Population) -> int:
    """Route-gene matches between ``v`` and every member of ``pop``, minus ``n``."""
    if pop.index_of(v) < 0:
        raise ValueError("individual is not a member of the population")
    return _match_count(v.route, pop.routes) - pop.n


def similarity_gen(v: Individual, pop: Population) -> int:
    """Trash-bit matches between ``v`` and every member of ``pop``, minus ``t``."""
    if len(v.trash) != pop.t:
        raise ValueError(f"individual carries {len(v.trash)} trash bits, population carries {pop.t}")
    if pop.index_of(v) < 0:
        raise ValueError("individual is not a member of the population")
    return _match_count(v.trash, pop.trash) - pop.t


def dom_similarities(routes: np.ndarray, m: int | None = None) -> np.ndarray:
    """``similarity_dom`` for every row of ``routes`` at once.

    For each position, the count of members sharing a row's gene value is read
    off a per-position histogram.
    """
    routes = np.asarray(routes)
    size, n = routes.shape
    if m is None:
        m = int(routes.max()) + 1 if routes.size else 1
    offsets = np.arange(n) * m
    flat = routes + offsets
    counts = np.bincount(flat.ravel(), minlength=n * m)
    return counts[flat].sum(axis=1) - n


def gen_similarities(trash: np.ndarray) -> np.ndarray:
    """``similarity_gen`` for every row of ``trash`` at once."""
    trash = np.asarray(trash)
    size, t = trash.shape
    ones = trash.sum(axis=0, dtype=np.int64)
    # a 1-bit matches the ones in its column, a 0-bit the zeros
    per_bit = np.where(trash == 1, ones, size - ones)
    return per_bit.sum(axis=1) - t


def similarities(pop: Population, mode: DiversityMode, m: int | None = None) -> np.ndarray:
    if mode is DiversityMode.DOMAIN:
        return dom_similarities(pop.routes, m)
    if mode is DiversityMode.GENEALOGICAL:
        return gen_similarities(pop.trash)
    raise ValueError("similarity is undefined for DiversityMode.NONE")


def _scale(pop: Population, mode: DiversityMode) -> int:
    k = pop.n if mode is DiversityMode.DOMAIN else pop.t
    if k == 0:
        raise ValueError(f"{mode.name} similarity needs a non-empty genome part")
    return k * (len(pop) - 1)


def normalized_similarity(v: Individual, pop: Population, mode: DiversityMode) -> float:
    if mode is DiversityMode.NONE:
        raise ValueError("similarity is undefined for DiversityMode.NONE")
    if len(pop) < 2:
        raise ValueError("normalized similarity needs a population of at least 2")
    raw = similarity_dom(v, pop) if mode is DiversityMode.DOMAIN else similarity_gen(v, pop)
    return raw / _scale(pop, mode)


def normalized_similarities(pop: Population, mode: DiversityMode, m: int | None = None) -> np.ndarray:
    if len(pop) < 2:
        raise ValueError("normalized similarity needs a population of at least 2")
    return similarities(pop, mode, m) / _scale(pop, mode)


def diversities(pop: Population, mode: DiversityMode, m: int | None = None) -> np.ndarray:
    """Per-individual diversity in ``[0, 1]``; a lone individual counts as fully diverse."""
    if len(pop) < 2:
        return np.ones(len(pop))
    return 1.0 - normalized_similarities(pop, mode, m)
