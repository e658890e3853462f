"""Paired multi-run experiments: batches, parameter sweeps and the change-amplitude study.

Every run index ``r`` of a batch gets a scenario seed derived from the master
seed. That seed fixes the factory layout, both change applications and the
engine's random streams, and it is shared by all variants so comparisons are
paired per scenario. Run ``r`` can be replayed alone with ``run --seed``.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from resilient_evo.diversity import DiversityMode
from resilient_evo.domain import ChangeRecord, FactoryLayout, apply_change, generate_layout
from resilient_evo.errors import ConfigError
from resilient_evo.evolution import STATS_HEADER, EngineConfig, RunRecord, run, scenario_stream

logger = logging.getLogger(__name__)

FIELDS = STATS_HEADER[1:]
BEST_WAYCOST = FIELDS.index("best_waycost")
MEAN_DIVERSITY = FIELDS.index("mean_diversity")

# Tuned for normalised similarity on the 5x5 / 500x500 scenario.
DEFAULT_LAMBDA = {DiversityMode.DOMAIN: 8000.0, DiversityMode.GENEALOGICAL: 80000.0}

LAMBDA_SWEEP = tuple(float(500 * z) for z in range(20))
T_SWEEP = tuple(2**z for z in range(10))
A_SWEEP = (0, 1, 2, 4, 8, 12, 16, 20)

AXES = ("lambda", "t", "A")


@dataclass(frozen=True)
class Variant:
    """A planner variant: diversity mode, its weight and the reported metric.

    Text form is ``mode[:lambda][@metric]``, e.g. ``none``, ``dom:8000`` or
    ``none@gen`` (baseline planner reporting genealogical diversity).
    """

    mode: DiversityMode
    lam: float = 0.0
    metric: DiversityMode | None = None

    @property
    def label(self) -> str:
        text = self.mode.value
        if self.mode is not DiversityMode.NONE:
            text += f":{self.lam:g}"
        if self.metric is not None:
            text += f"@{self.metric.value}"
        return text

    @classmethod
    def parse(cls, text: str) -> Variant:
        text = text.strip()
        metric = None
        if "@" in text:
            text, metric_text = text.split("@", 1)
            metric = DiversityMode.parse(metric_text)
        mode_text, _, lam_text = text.partition(":")
        try:
            mode = DiversityMode.parse(mode_text)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if lam_text:
            try:
                lam = float(lam_text)
            except ValueError:
                raise ConfigError(f"variant {text!r}: lambda {lam_text!r} is not a number") from None
        else:
            lam = DEFAULT_LAMBDA.get(mode, 0.0)
        return cls(mode, lam, metric)

    def apply(self, config: EngineConfig) -> EngineConfig:
        return replace(config, mode=self.mode, lam=self.lam, metric=self.metric)


def parse_variants(text: str) -> tuple[Variant, ...]:
    variants = tuple(Variant.parse(part) for part in text.split(",") if part.strip())
    if not variants:
        raise ConfigError("variants: at least one variant is required")
    labels = [v.label for v in variants]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"variants: duplicate entries in {labels}")
    return variants


@dataclass(frozen=True)
class BatchSpec:
    base: EngineConfig
    runs: int = 1000
    master_seed: int = 0
    variants: tuple[Variant, ...] = (Variant(DiversityMode.NONE),)
    axis: str | None = None
    values: tuple = ()
    level: float = 0.95
    resamples: int = 2000

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if not self.variants:
            raise ConfigError("variants: at least one variant is required")
        if self.axis is not None:
            if self.axis not in AXES:
                raise ConfigError(f"axis must be one of {', '.join(AXES)}, got {self.axis!r}")
            if not self.values:
                raise ConfigError(f"axis {self.axis!r} needs at least one value")
            for value in self.values:
                if value < 0 or (self.axis == "t" and value < 1):
                    raise ConfigError(f"invalid {self.axis} sweep value {value}")
                if self.axis == "A" and value > self.base.n * self.base.m:
                    raise ConfigError(f"A sweep value {value} exceeds n*m = {self.base.n * self.base.m}")


@dataclass(frozen=True)
class Scenario:
    layout: FactoryLayout
    f1: FactoryLayout
    f2: FactoryLayout
    change1: ChangeRecord
    change2: ChangeRecord


def make_scenario(config: EngineConfig, seed: int) -> Scenario:
    """Fresh layout ``F`` and two independent changes ``F1 = c_A(F)``, ``F2 = c_A(F)``."""
    rng = scenario_stream(seed)
    layout = generate_layout(config.n, config.m, config.width, config.height, rng)
    f1, c1 = apply_change(layout, config.change_amount, config.offset, rng)
    f2, c2 = apply_change(layout, config.change_amount, config.offset, rng)
    return Scenario(layout, f1, f2, c1, c2)


def scenario_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(1)[0])


def run_scenario(config: EngineConfig, seed: int) -> RunRecord:
    scenario = make_scenario(config, seed)
    config = replace(config, seed=seed)
    return run(config, scenario.f1, scenario.f2, (scenario.change1, scenario.change2))


# -- statistics ---------------------------------------------------------------

def _bootstrap_weights(size: int, resamples: int, rng: np.random.Generator) -> np.ndarray:
    # row b counts how often each sample appears in resample b
    idx = rng.integers(0, size, size=(resamples, size))
    flat = (idx + size * np.arange(resamples)[:, None]).ravel()
    counts = np.bincount(flat, minlength=resamples * size).reshape(resamples, size)
    return counts / size


def bootstrap_columns(data: np.ndarray, level: float = 0.95, resamples: int = 2000,
                      rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Percentile bootstrap CI of the mean of every column of ``data`` (rows are samples).

    All columns share the same resamples.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if len(data) < 2:
        raise ValueError("bootstrap needs at least 2 samples")
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    rng = np.random.default_rng(0) if rng is None else rng
    means = _bootstrap_weights(len(data), resamples, rng) @ data
    tail = (1 - level) / 2 * 100
    lo, hi = np.percentile(means, [tail, 100 - tail], axis=0)
    # a constant column would otherwise pick up rounding noise from the matmul
    constant = np.all(data == data[0], axis=0)
    lo = np.where(constant, data[0], lo)
    hi = np.where(constant, data[0], hi)
    return lo, hi


def bootstrap_ci(samples, level: float = 0.95, resamples: int = 2000,
                 rng: np.random.Generator | None = None) -> tuple[float, float]:
    lo, hi = bootstrap_columns(np.asarray(samples, dtype=np.float64)[:, None], level, resamples, rng)
    return float(lo[0]), float(hi[0])


def spikes(data: np.ndarray, change_generation: int) -> np.ndarray:
    """Per-run jump of best waycost at the change, from a ``(runs, generations, fields)`` array."""
    best = data[:, :, BEST_WAYCOST]
    return best[:, change_generation] - best[:, change_generation - 1]


@dataclass
class AggregateSeries:
    """Per-generation means over runs, with bootstrap CI bounds, for one variant."""

    label: str
    mean: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray

    @property
    def generations(self) -> int:
        return len(self.mean)

    def column(self, name: str) -> np.ndarray:
        return self.mean[:, FIELDS.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["generation"]
        for name in FIELDS:
            header += [f"mean_{name}", f"ci_lo_{name}", f"ci_hi_{name}"]
        writer.writerow(header)
        for g in range(self.generations):
            row = [g]
            for k in range(len(FIELDS)):
                row += [f"{self.mean[g, k]:.6f}", f"{self.ci_lo[g, k]:.6f}", f"{self.ci_hi[g, k]:.6f}"]
            writer.writerow(row)
        return buf.getvalue()


def aggregate(label: str, data: np.ndarray, level: float = 0.95, resamples: int = 2000,
              rng: np.random.Generator | None = None) -> AggregateSeries:
    runs, generations, nfields = data.shape
    mean = data.mean(axis=0)
    if runs < 2:
        return AggregateSeries(label, mean, mean.copy(), mean.copy())
    lo, hi = bootstrap_columns(data.reshape(runs, -1), level, resamples, rng)
    lo = np.minimum(lo.reshape(generations, nfields), mean)
    hi = np.maximum(hi.reshape(generations, nfields), mean)
    return AggregateSeries(label, mean, lo, hi)


# -- batch execution ----------------------------------------------------------

@dataclass
class BatchResult:
    """Raw per-run statistics of a paired batch.

    ``data[label]`` is a ``(runs, generations, fields)`` array whose field
    order follows the run CSV columns after ``generation``.
    """

    spec: BatchSpec
    seeds: list[int]
    data: dict[str, np.ndarray]
    changes: list[tuple[ChangeRecord, ChangeRecord]]
    _aggregates: dict[str, AggregateSeries] = field(default_factory=dict, repr=False)

    @property
    def labels(self) -> list[str]:
        return list(self.data)

    def aggregate(self, label: str) -> AggregateSeries:
        if label not in self._aggregates:
            rng = np.random.default_rng([self.spec.master_seed, 0xB007])
            self._aggregates[label] = aggregate(
                label, self.data[label], self.spec.level, self.spec.resamples, rng
            )
        return self._aggregates[label]

    @property
    def aggregates(self) -> dict[str, AggregateSeries]:
        return {label: self.aggregate(label) for label in self.data}

    def spikes(self, label: str) -> np.ndarray:
        return spikes(self.data[label], self.spec.base.change_generation)

    def paired_spike_difference(self, first: str, second: str) -> tuple[float, float, float]:
        """Mean and bootstrap CI of ``spike(first) - spike(second)`` over paired runs."""
        diff = self.spikes(first) - self.spikes(second)
        if len(diff) < 2:
            raise ValueError("paired comparison needs at least 2 runs")
        rng = np.random.default_rng([self.spec.master_seed, 0x5B1C])
        lo, hi = bootstrap_ci(diff, self.spec.level, self.spec.resamples, rng)
        return float(diff.mean()), lo, hi


def _run_paired(args) -> tuple[list[np.ndarray], tuple[ChangeRecord, ChangeRecord]]:
    base, variants, seed = args
    scenario = make_scenario(base, seed)
    arrays = []
    for variant in variants:
        config = replace(variant.apply(base), seed=seed)
        record = run(config, scenario.f1, scenario.f2)
        arrays.append(record.as_array())
    return arrays, (scenario.change1, scenario.change2)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("RESILIENT_EVO_WORKERS", "1")))
    except ValueError:
        raise ConfigError("RESILIENT_EVO_WORKERS must be an integer") from None


def run_batch(spec: BatchSpec, workers: int | None = None) -> BatchResult:
    """Run every variant on the same ``spec.runs`` scenarios.

    Results are collected in run-index order, so ``workers`` never changes them.
    """
    workers = default_workers() if workers is None else workers
    for variant in spec.variants:
        variant.apply(spec.base)  # surface config errors before any run starts
    seeds = [scenario_seed(spec.master_seed, r) for r in range(spec.runs)]
    tasks = [(spec.base, spec.variants, seed) for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_paired, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_run_paired(task) for task in tasks]
    labels = [v.label for v in spec.variants]
    data = {label: np.stack([arrays[i] for arrays, _ in results]) for i, label in enumerate(labels)}
    changes = [c for _, c in results]
    logger.info("batch done: %d runs x %d variants", spec.runs, len(labels))
    return BatchResult(spec, seeds, data, changes)


def _spec_for_value(spec: BatchSpec, value) -> BatchSpec:
    if spec.axis == "lambda":
        variants = tuple(
            v if v.mode is DiversityMode.NONE else replace(v, lam=float(value)) for v in spec.variants
        )
        return replace(spec, variants=variants, axis=None, values=())
    if spec.axis == "t":
        return replace(spec, base=replace(spec.base, t=int(value)), axis=None, values=())
    return replace(spec, base=replace(spec.base, change_amount=int(value)), axis=None, values=())


def sweep(spec: BatchSpec, workers: int | None = None) -> dict:
    """One paired batch per value of ``spec.axis``; all values reuse the same seeds."""
    if spec.axis is None:
        raise ConfigError("sweep needs an axis")
    return {value: run_batch(_spec_for_value(spec, value), workers) for value in spec.values}


@dataclass
class AmplitudeReport:
    """Mean best waycost just before, at, and just after the change, per ``A`` and variant."""

    change_generation: int
    rows: list[tuple[int, str, float, float, float]]
    batches: dict = field(default_factory=dict, repr=False)

    def spike(self, amount: int, label: str) -> float:
        for a, lab, before, at, _ in self.rows:
            if a == amount and lab == label:
                return at - before
        raise KeyError((amount, label))

    def to_csv(self) -> str:
        c = self.change_generation
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["A", "variant", f"gen{c - 1}", f"gen{c}", f"gen{c + 1}"])
        for a, label, before, at, after in self.rows:
            writer.writerow([a, label, f"{before:.6f}", f"{at:.6f}", f"{after:.6f}"])
        return buf.getvalue()


def amplitude_analysis(spec: BatchSpec, workers: int | None = None) -> AmplitudeReport:
    if spec.axis != "A":
        raise ConfigError("amplitude analysis needs axis 'A'")
    c = spec.base.change_generation
    if not 1 <= c <= spec.base.generations - 2:
        raise ConfigError("amplitude analysis needs generations change-1 .. change+1 to exist")
    batches = sweep(spec, workers)
    rows = []
    for amount, batch in batches.items():
        for label in batch.labels:
            best = batch.data[label][:, :, BEST_WAYCOST].mean(axis=0)
            rows.append((int(amount), label, float(best[c - 1]), float(best[c]), float(best[c + 1])))
    return AmplitudeReport(c, rows, batches)
