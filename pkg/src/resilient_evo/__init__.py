"""Diversity-aware evolutionary online planning on a changing smart-factory layout."""

from resilient_evo.diversity import DiversityMode
from resilient_evo.domain import (
    ChangeRecord,
    Coord,
    FactoryLayout,
    apply_change,
    generate_layout,
    l1_distance,
    waycost,
)
from resilient_evo.errors import BudgetExceeded, ConfigError, DomainError
from resilient_evo.evolution import EngineConfig, GenerationStats, Individual, Population, RunRecord, run

__all__ = [
    "BudgetExceeded",
    "ChangeRecord",
    "ConfigError",
    "Coord",
    "DiversityMode",
    "DomainError",
    "EngineConfig",
    "FactoryLayout",
    "GenerationStats",
    "Individual",
    "Population",
    "RunRecord",
    "apply_change",
    "generate_layout",
    "l1_distance",
    "run",
    "waycost",
]
