"""Generational evolutionary engine for online route planning.

Random draws
------------
A run owns two generators derived from its seed: ``rng`` drives every route
decision (initial genes, operator coin flips, mate sampling, crossover masks,
mutation sites, hyper-mutation) and ``trash_rng`` drives every trash-bit draw.
Keeping trash bits on their own stream means carrying them for reporting never
perturbs the route search of a run that does not optimise for them.

Per generation the draws on ``rng`` happen in this order:

1. one uniform per individual deciding crossover participation;
2. for the ``k`` participants: ``k`` first candidates, ``k`` second candidates;
3. a ``(k, n)`` uniform crossover mask;
4. one uniform per individual deciding mutation;
5. mutation sites, then new gene values;
6. one uniform per individual deciding hyper-mutation;
7. the genes of the injected random individuals.

``trash_rng`` follows the same order for crossover masks, flip sites and fresh
bitstrings.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from resilient_evo import diversity
from resilient_evo.diversity import DiversityMode
from resilient_evo.domain import DEFAULT_OFFSET, ChangeRecord, FactoryLayout, waycosts
from resilient_evo.errors import ConfigError
from resilient_evo.population import Individual, Population

STATS_HEADER = ("generation", "best_waycost", "mean_waycost", "best_diversity", "mean_diversity", "best_fitness")


@dataclass(frozen=True)
class EngineConfig:
    """Engine and scenario parameters for one run.

    ``metric`` selects the diversity measure reported in the statistics; by
    default it follows ``mode`` and falls back to domain distance when the run
    does not optimise for diversity. Trash bits are carried only when the
    genealogical measure is optimised or reported.
    """

    population_size: int = 50
    generations: int = 100
    change_generation: int = 50
    mutation_rate: float = 0.1
    crossover_rate: float = 0.3
    hypermutation_rate: float = 0.1
    lam: float = 0.0
    t: int = 16
    mode: DiversityMode = DiversityMode.NONE
    metric: DiversityMode | None = None
    change_amount: int = 3
    seed: int = 0
    n: int = 5
    m: int = 5
    width: int = 500
    height: int = 500
    offset: tuple[int, int] = DEFAULT_OFFSET

    def __post_init__(self):
        try:
            if isinstance(self.mode, str):
                object.__setattr__(self, "mode", DiversityMode.parse(self.mode))
            if isinstance(self.metric, str):
                object.__setattr__(self, "metric", DiversityMode.parse(self.metric))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        object.__setattr__(self, "offset", tuple(int(v) for v in self.offset))
        self.validate()

    def validate(self) -> None:
        for name in ("mutation_rate", "crossover_rate", "hypermutation_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.population_size < 2:
            raise ConfigError(f"population_size must be >= 2, got {self.population_size}")
        if self.generations < 1:
            raise ConfigError(f"generations must be >= 1, got {self.generations}")
        if not 0 <= self.change_generation < self.generations:
            raise ConfigError(
                f"change_generation must be in [0, generations), got {self.change_generation}"
            )
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.t < 0:
            raise ConfigError(f"t must be >= 0, got {self.t}")
        for name in ("n", "m", "width", "height"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.change_amount <= self.n * self.m:
            raise ConfigError(f"change_amount must be in [0, {self.n * self.m}], got {self.change_amount}")
        if self.metric is DiversityMode.NONE:
            raise ConfigError("metric must be dom or gen")
        if self.trash_bits == 0 and DiversityMode.GENEALOGICAL in (self.mode, self.report_metric):
            raise ConfigError("genealogical diversity needs t >= 1")

    @property
    def report_metric(self) -> DiversityMode:
        if self.metric is not None:
            return self.metric
        return DiversityMode.DOMAIN if self.mode is DiversityMode.NONE else self.mode

    @property
    def trash_bits(self) -> int:
        """Number of trash bits actually carried by each genome."""
        uses_gen = DiversityMode.GENEALOGICAL in (self.mode, self.metric)
        return self.t if uses_gen else 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["metric"] = None if self.metric is None else self.metric.value
        d["offset"] = list(self.offset)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> EngineConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_waycost: int
    mean_waycost: float
    best_individual_diversity: float
    mean_diversity: float
    best_combined_fitness: float

    def as_row(self) -> tuple:
        return (
            self.generation,
            self.best_waycost,
            self.mean_waycost,
            self.best_individual_diversity,
            self.mean_diversity,
            self.best_combined_fitness,
        )


@dataclass
class RunRecord:
    config: EngineConfig
    stats: list[GenerationStats]
    changes: tuple[ChangeRecord | None, ChangeRecord | None] = (None, None)
    final_population: Population | None = field(default=None, repr=False, compare=False)

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.stats])

    def as_array(self) -> np.ndarray:
        """``(generations, 5)`` float array of the numeric stats columns."""
        return np.array([s.as_row()[1:] for s in self.stats], dtype=np.float64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(STATS_HEADER)
        for s in self.stats:
            writer.writerow([
                s.generation,
                s.best_waycost,
                f"{s.mean_waycost:.6f}",
                f"{s.best_individual_diversity:.6f}",
                f"{s.mean_diversity:.6f}",
                f"{s.best_combined_fitness:.6f}",
            ])
        return buf.getvalue()


def _seed_children(seed: int) -> list[np.random.SeedSequence]:
    # children 0, 1 drive the engine; child 2 builds the scenario
    return np.random.SeedSequence(seed).spawn(3)


def make_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Route and trash-bit generators for an engine seed."""
    genes, trash, _ = _seed_children(seed)
    return np.random.default_rng(genes), np.random.default_rng(trash)


def scenario_stream(seed: int) -> np.random.Generator:
    """Generator used to draw the layout and both changes for ``seed``."""
    return np.random.default_rng(_seed_children(seed)[2])


# -- operators ---------------------------------------------------------------

def random_genomes(count: int, config: EngineConfig, rng, trash_rng=None) -> Population:
    trash_rng = rng if trash_rng is None else trash_rng
    routes = rng.integers(0, config.m, size=(count, config.n))
    trash = trash_rng.integers(0, 2, size=(count, config.trash_bits), dtype=np.uint8)
    return Population(routes, trash)


def init_population(config: EngineConfig, rng, trash_rng=None) -> Population:
    return random_genomes(config.population_size, config, rng, trash_rng)


def mutate_genomes(pop: Population, m: int, rng, trash_rng=None) -> Population:
    """Mutated copies: one random gene redrawn from all ``m`` values, one trash bit flipped."""
    trash_rng = rng if trash_rng is None else trash_rng
    k = len(pop)
    routes = pop.routes.copy()
    trash = pop.trash.copy()
    sites = rng.integers(0, pop.n, size=k)
    values = rng.integers(0, m, size=k)
    routes[np.arange(k), sites] = values
    if pop.t:
        bits = trash_rng.integers(0, pop.t, size=k)
        trash[np.arange(k), bits] ^= 1
    return Population(routes, trash)


def crossover_genomes(first: Population, second: Population, rng, trash_rng=None) -> Population:
    """Uniform crossover of row ``i`` of ``first`` with row ``i`` of ``second``."""
    trash_rng = rng if trash_rng is None else trash_rng
    if first.routes.shape != second.routes.shape or first.trash.shape != second.trash.shape:
        raise ValueError("crossover parents must have matching genome shapes")
    take_first = rng.random(first.routes.shape) < 0.5
    routes = np.where(take_first, first.routes, second.routes)
    if first.t:
        take_first_bits = trash_rng.random(first.trash.shape) < 0.5
        trash = np.where(take_first_bits, first.trash, second.trash)
    else:
        trash = first.trash.copy()
    return Population(routes, trash)


def select_mates(fitness: np.ndarray, count: int, rng) -> np.ndarray:
    """Binary tournaments between distinct random members; lower fitness wins, then lower index."""
    size = len(fitness)
    if size < 2:
        raise ValueError("mate selection needs at least 2 individuals")
    a = rng.integers(0, size, size=count)
    b = rng.integers(0, size - 1, size=count)
    b += b >= a
    a_wins = (fitness[a] < fitness[b]) | ((fitness[a] == fitness[b]) & (a < b))
    return np.where(a_wins, a, b)


def mutate(ind: Individual, config: EngineConfig, rng, trash_rng=None) -> Individual:
    return mutate_genomes(Population.from_individuals([ind]), config.m, rng, trash_rng)[0]


def crossover(a: Individual, b: Individual, rng, trash_rng=None) -> Individual:
    first = Population.from_individuals([a])
    second = Population.from_individuals([b])
    return crossover_genomes(first, second, rng, trash_rng)[0]


def select_mate(pop: Population, rng) -> Individual:
    if not pop.evaluated:
        raise ValueError("mate selection needs an evaluated population")
    return pop[int(select_mates(pop.fitness, 1, rng)[0])]


# -- evaluation and the generational loop -------------------------------------

def evaluate(pop: Population, layout: FactoryLayout, config: EngineConfig) -> Population:
    """Return a copy of ``pop`` with waycost and combined fitness filled in.

    The diversity penalty is measured against the whole of ``pop`` as given.
    """
    cost = waycosts(pop.routes, layout)
    fitness = cost.astype(np.float64)
    if config.mode is not DiversityMode.NONE and config.lam != 0 and len(pop) >= 2:
        fitness = fitness + config.lam * diversity.normalized_similarities(pop, config.mode, config.m)
    return Population(pop.routes, pop.trash, cost, fitness)


def generation_stats(pop: Population, config: EngineConfig, generation: int) -> GenerationStats:
    divs = diversity.diversities(pop, config.report_metric, config.m)
    best = int(np.argmin(pop.fitness))
    return GenerationStats(
        generation=generation,
        best_waycost=int(pop.waycost.min()),
        mean_waycost=float(pop.waycost.mean()),
        best_individual_diversity=float(divs[best]),
        mean_diversity=float(divs.mean()),
        best_combined_fitness=float(pop.fitness[best]),
    )


def breed(pop: Population, config: EngineConfig, rng, trash_rng=None) -> Population:
    """Offspring pool of one generation: crossover children, mutants, fresh randoms."""
    trash_rng = rng if trash_rng is None else trash_rng
    size = len(pop)
    parts = []

    first = np.flatnonzero(rng.random(size) < config.crossover_rate)
    if len(first):
        mates = select_mates(pop.fitness, len(first), rng)
        parts.append(crossover_genomes(pop.take(first), pop.take(mates), rng, trash_rng))

    chosen = np.flatnonzero(rng.random(size) < config.mutation_rate)
    if len(chosen):
        parts.append(mutate_genomes(pop.take(chosen), config.m, rng, trash_rng))

    fresh = int((rng.random(size) < config.hypermutation_rate).sum())
    if fresh:
        parts.append(random_genomes(fresh, config, rng, trash_rng))

    if not parts:
        return Population(np.empty((0, pop.n), dtype=np.int64), np.empty((0, pop.t), dtype=np.uint8))
    return parts[0].concat(*parts[1:])


def step_generation(pop: Population, layout: FactoryLayout, config: EngineConfig, rng,
                    trash_rng=None, generation: int = 0) -> tuple[Population, GenerationStats]:
    """Breed, evaluate parents and offspring together, keep the best ``population_size``.

    ``pop`` must already be evaluated against ``layout``. The survivors are
    re-evaluated among themselves so their cached fitness is ready for the
    next generation.
    """
    offspring = breed(pop, config, rng, trash_rng)
    pool = evaluate(pop.concat(offspring), layout, config)
    keep = np.argsort(pool.fitness, kind="stable")[: config.population_size]
    survivors = evaluate(pool.take(keep), layout, config)
    return survivors, generation_stats(survivors, config, generation)


def run(config: EngineConfig, f1: FactoryLayout, f2: FactoryLayout,
        changes: tuple[ChangeRecord | None, ChangeRecord | None] = (None, None)) -> RunRecord:
    """Evolve on ``f1`` and switch to ``f2`` at ``change_generation``.

    Row ``g`` of the stats describes the population held during generation
    ``g``, evaluated in that generation's layout: row 0 is the random initial
    population and row ``change_generation`` is the population bred on ``f1``
    measured in ``f2``, before any selection has seen the change.
    """
    if (f1.n, f1.m) != (config.n, config.m) or (f2.n, f2.m) != (config.n, config.m):
        raise ConfigError("layout dimensions do not match config n/m")
    rng, trash_rng = make_streams(config.seed)
    pop = evaluate(init_population(config, rng, trash_rng), f1, config)
    stats = [generation_stats(pop, config, 0)]
    for g in range(1, config.generations):
        previous = f1 if g - 1 < config.change_generation else f2
        pop, row = step_generation(pop, previous, config, rng, trash_rng, generation=g)
        if g == config.change_generation:
            pop = evaluate(pop, f2, config)
            row = generation_stats(pop, config, g)
        stats.append(row)
    return RunRecord(config, stats, changes, final_population=pop)

