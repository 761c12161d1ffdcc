"""Inverse-probability analysis weights for class-balanced samples."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .core import CLASS_NAMES, N_CLASSES, Dataset, QualityClass
from .errors import (
    EmptyPopulation,
    InvalidArgument,
    NegativeCount,
    UncoveredLabel,
    ZeroPopulationClass,
    ZeroSampleClass,
)
from .logging_setup import get_logger

log = get_logger(__name__)


@dataclass(frozen=True)
class PopulationCounts:
    counts: tuple[int, ...]
    unit: str

    def __post_init__(self) -> None:
        if len(self.counts) != N_CLASSES:
            raise InvalidArgument(f"expected {N_CLASSES} population counts, got {len(self.counts)}")
        if any(c < 0 for c in self.counts):
            raise NegativeCount(f"negative population count in {self.counts}")
        if sum(self.counts) <= 0:
            raise EmptyPopulation(f"population for unit {self.unit!r} has no members")

    @property
    def total(self) -> int:
        return sum(self.counts)

    def proportions(self) -> npt.NDArray[np.float64]:
        return np.asarray(self.counts, dtype=np.float64) / self.total

    def as_mapping(self) -> dict[str, int]:
        return dict(zip(CLASS_NAMES, self.counts))


# Published English Wikipedia totals (March 2020) for the two research units of analysis.
ARTICLE_COUNTS = PopulationCounts((3359351, 1019038, 235655, 128875, 31808, 7438), unit="article")
REVISION_COUNTS = PopulationCounts((12005611, 7828335, 3889639, 3640591, 924468, 365255), unit="revision")
CLASS_COUNTS = PopulationCounts((1,) * N_CLASSES, unit="class")

BUILTIN_UNITS = {
    "article": ARTICLE_COUNTS,
    "revision": REVISION_COUNTS,
    "class": CLASS_COUNTS,
}


def population_for_unit(unit: str) -> PopulationCounts:
    """Resolve a unit name to embedded counts, or read it as a population file path."""
    if unit in BUILTIN_UNITS:
        return BUILTIN_UNITS[unit]
    from .dataio import read_population

    return read_population(Path(unit))


@dataclass(frozen=True)
class WeightTable:
    weights: tuple[float, ...]
    unit: str
    sample_counts: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(self.weights) != N_CLASSES:
            raise InvalidArgument(f"expected {N_CLASSES} weights, got {len(self.weights)}")
        if not all(np.isfinite(w) and w >= 0 for w in self.weights):
            raise InvalidArgument(f"weights must be finite and non-negative: {self.weights}")

    def __getitem__(self, qc: QualityClass | int) -> float:
        return self.weights[int(qc)]

    def as_array(self) -> npt.NDArray[np.float64]:
        return np.asarray(self.weights, dtype=np.float64)

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(CLASS_NAMES, self.weights))


def compute_weights(
    sample_counts: Sequence[int],
    population: PopulationCounts,
    permissive: bool = False,
) -> WeightTable:
    """Weight each class by its population share over its sample share.

    With ``permissive`` a class absent from the population gets weight 0 instead of
    raising ``ZeroPopulationClass``; a class absent from the sample is always an error.
    """
    sample = [int(c) for c in sample_counts]
    if len(sample) != N_CLASSES:
        raise InvalidArgument(f"expected {N_CLASSES} sample counts, got {len(sample)}")
    if any(c < 0 for c in sample):
        raise NegativeCount(f"negative sample count in {sample}")
    for qc, (s, p) in zip(QualityClass, zip(sample, population.counts)):
        if s == 0 and p > 0:
            raise ZeroSampleClass(f"class {qc.label} is in the {population.unit} population but not in the sample")
        if p == 0 and not permissive:
            raise ZeroPopulationClass(f"class {qc.label} has zero {population.unit} population count")

    sample_total = sum(sample)
    pop_total = population.total
    weights = tuple(
        (p * sample_total) / (s * pop_total) if s > 0 else 0.0
        for s, p in zip(sample, population.counts)
    )
    log.debug("`weights` unit=%s weights=%s", population.unit, weights)
    return WeightTable(weights=weights, unit=population.unit, sample_counts=tuple(sample))


def apply_weights(dataset: Dataset, table: WeightTable) -> Dataset:
    """Set every instance's analysis weight to its class weight; order is preserved."""
    weights = table.as_array()
    present = np.flatnonzero(dataset.class_counts())
    uncovered = [QualityClass(int(k)).label for k in present if weights[k] <= 0]
    if uncovered:
        raise UncoveredLabel(f"weight table for unit {table.unit!r} does not cover classes {uncovered}")
    return dataset.with_weights(weights[dataset.labels])


def weights_for_unit(dataset: Dataset, unit: str, sample_counts: Sequence[int] | None = None) -> Dataset:
    """Convenience: weight ``dataset`` for a named unit, using its own class counts by default."""
    population = population_for_unit(unit)
    counts = dataset.class_counts() if sample_counts is None else sample_counts
    table = compute_weights(counts, population)
    log.info("`weights` Weighted %s instances for unit %s", len(dataset), population.unit)
    return apply_weights(dataset, table)
