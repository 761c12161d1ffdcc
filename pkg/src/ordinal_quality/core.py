from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from enum import IntEnum
from typing import Any

import numpy as np
import numpy.typing as npt

from .errors import (
    DegenerateData,
    InvalidArgument,
    NegativeProbability,
    NonFiniteInput,
    SumOutOfTolerance,
    UnknownLabel,
)

N_CLASSES = 6
N_THRESHOLDS = N_CLASSES - 1
SUM_TOLERANCE = 1e-6

PROBABILITY_COLUMNS = ("p_stub", "p_start", "p_c", "p_b", "p_ga", "p_fa")


class QualityClass(IntEnum):
    """Wikipedia assessment levels, ordered from lowest to highest quality."""

    STUB = 0
    START = 1
    C = 2
    B = 3
    GA = 4
    FA = 5

    @property
    def label(self) -> str:
        return _CANONICAL_NAMES[self]

    @classmethod
    def parse(cls, raw: object) -> QualityClass:
        if isinstance(raw, QualityClass):
            return raw
        key = str(raw).strip().lower()
        try:
            return _ALIASES[key]
        except KeyError:
            raise UnknownLabel(f"unknown quality label {raw!r}") from None

    def __str__(self) -> str:
        return self.label


_CANONICAL_NAMES = {
    QualityClass.STUB: "Stub",
    QualityClass.START: "Start",
    QualityClass.C: "C",
    QualityClass.B: "B",
    QualityClass.GA: "GA",
    QualityClass.FA: "FA",
}

# A-class and unassessed pages are deliberately absent.
_ALIASES: dict[str, QualityClass] = {
    **{name.lower(): qc for qc, name in _CANONICAL_NAMES.items()},
    "stub-class": QualityClass.STUB,
    "start-class": QualityClass.START,
    "c-class": QualityClass.C,
    "b-class": QualityClass.B,
}

CLASS_NAMES = tuple(qc.label for qc in QualityClass)


@dataclass(frozen=True)
class ProbabilityVector:
    """One classifier prediction: a point on the 6-class probability simplex."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != N_CLASSES:
            raise InvalidArgument(f"expected {N_CLASSES} probabilities, got {len(self.values)}")

    @classmethod
    def from_values(cls, values: Sequence[float], tolerance: float = SUM_TOLERANCE) -> ProbabilityVector:
        """Validate raw probabilities and renormalize them onto the simplex."""
        if len(values) != N_CLASSES:
            raise InvalidArgument(f"expected {N_CLASSES} probabilities, got {len(values)}")
        floats = [float(v) for v in values]
        if not all(math.isfinite(v) for v in floats):
            raise NonFiniteInput(f"non-finite probability in {floats}")
        if min(floats) < 0:
            raise NegativeProbability(f"negative probability in {floats}")
        total = math.fsum(floats)
        if abs(total - 1.0) > tolerance:
            raise SumOutOfTolerance(f"probabilities sum to {total!r}, outside 1 ± {tolerance}")
        return cls(_renormalize(floats, total))

    def as_array(self) -> npt.NDArray[np.float64]:
        return np.asarray(self.values, dtype=np.float64)

    def __iter__(self) -> Iterator[float]:
        return iter(self.values)

    def __getitem__(self, index: int) -> float:
        return self.values[index]


def _renormalize(values: list[float], total: float) -> tuple[float, ...]:
    scaled = [v / total for v in values]
    # the largest component absorbs the rounding residue so the sum is exactly one
    largest = max(range(N_CLASSES), key=lambda k: scaled[k])
    rest = math.fsum(v for k, v in enumerate(scaled) if k != largest)
    scaled[largest] = max(0.0, 1.0 - rest)
    return tuple(scaled)


@dataclass(frozen=True)
class LabeledInstance:
    id: str
    probs: ProbabilityVector
    label: QualityClass
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.weight) and self.weight > 0):
            raise InvalidArgument(f"instance {self.id!r}: weight must be positive and finite, got {self.weight!r}")


def validate_instance(
    raw_id: object,
    probabilities: Sequence[Any],
    label: object,
    weight: float = 1.0,
    tolerance: float = SUM_TOLERANCE,
) -> LabeledInstance:
    """Build a validated instance from one raw row (id, six probabilities, label string)."""
    qc = QualityClass.parse(label)
    try:
        floats = [float(v) for v in probabilities]
    except (TypeError, ValueError) as exc:
        raise NonFiniteInput(f"unparseable probability in {list(probabilities)!r}") from exc
    probs = ProbabilityVector.from_values(floats, tolerance=tolerance)
    return LabeledInstance(id=str(raw_id), probs=probs, label=qc, weight=float(weight))


def _frozen(array: npt.ArrayLike, dtype: Any) -> npt.NDArray[Any]:
    result = np.array(array, dtype=dtype, copy=True)
    result.setflags(write=False)
    return result


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar, read-only collection of labeled instances.

    Probabilities are stored as an ``n × 6`` matrix, labels as class codes and weights as
    analysis weights. Use :meth:`from_instances` to build from validated rows.
    """

    ids: tuple[str, ...]
    probs: npt.NDArray[np.float64]
    labels: npt.NDArray[np.int64]
    weights: npt.NDArray[np.float64]
    provenance: str = ""

    def __post_init__(self) -> None:
        n = len(self.ids)
        if n == 0:
            raise DegenerateData("dataset is empty")
        object.__setattr__(self, "probs", _frozen(self.probs, np.float64))
        object.__setattr__(self, "labels", _frozen(self.labels, np.int64))
        object.__setattr__(self, "weights", _frozen(self.weights, np.float64))
        if self.probs.shape != (n, N_CLASSES):
            raise InvalidArgument(f"probability matrix has shape {self.probs.shape}, expected ({n}, {N_CLASSES})")
        if not np.all(np.isfinite(self.probs)):
            bad = np.flatnonzero(~np.isfinite(self.probs).all(axis=1))
            raise NonFiniteInput(f"{len(bad)} probability rows are not finite, first at index {bad[0]}")
        if self.probs.min() < 0:
            raise NegativeProbability(f"negative probability at index {int(np.argmin(self.probs.min(axis=1)))}")
        off = np.abs(self.probs.sum(axis=1) - 1.0)
        if off.max() > SUM_TOLERANCE:
            raise SumOutOfTolerance(f"probability row {int(np.argmax(off))} sums to 1 ± {off.max():.3g}")
        if self.labels.shape != (n,) or self.weights.shape != (n,):
            raise InvalidArgument("labels and weights must have one entry per instance")
        if self.labels.min() < 0 or self.labels.max() >= N_CLASSES:
            raise InvalidArgument("label codes must lie in 0..5")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise InvalidArgument("weights must be positive and finite")

    @classmethod
    def from_instances(cls, instances: Sequence[LabeledInstance], provenance: str = "") -> Dataset:
        if not instances:
            raise DegenerateData("dataset is empty")
        return cls(
            ids=tuple(inst.id for inst in instances),
            probs=np.array([inst.probs.values for inst in instances], dtype=np.float64),
            labels=np.array([int(inst.label) for inst in instances], dtype=np.int64),
            weights=np.array([inst.weight for inst in instances], dtype=np.float64),
            provenance=provenance,
        )

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[LabeledInstance]:
        for index in range(len(self)):
            yield self.instance(index)

    def instance(self, index: int) -> LabeledInstance:
        return LabeledInstance(
            id=self.ids[index],
            probs=ProbabilityVector(tuple(float(v) for v in self.probs[index])),
            label=QualityClass(int(self.labels[index])),
            weight=float(self.weights[index]),
        )

    def class_counts(self) -> npt.NDArray[np.int64]:
        return np.bincount(self.labels, minlength=N_CLASSES).astype(np.int64)

    def weighted_class_totals(self) -> npt.NDArray[np.float64]:
        return np.bincount(self.labels, weights=self.weights, minlength=N_CLASSES)

    def distinct_labels(self) -> int:
        return int(np.count_nonzero(self.class_counts()))

    def require_fittable(self) -> None:
        if self.distinct_labels() < 2:
            raise DegenerateData("at least two distinct quality classes are required for fitting")

    def with_weights(self, weights: npt.ArrayLike) -> Dataset:
        return Dataset(
            ids=self.ids,
            probs=self.probs,
            labels=self.labels,
            weights=np.asarray(weights, dtype=np.float64),
            provenance=self.provenance,
        )

    def subset(self, indices: npt.ArrayLike) -> Dataset:
        idx = np.asarray(indices)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return Dataset(
            ids=tuple(self.ids[i] for i in idx),
            probs=self.probs[idx],
            labels=self.labels[idx],
            weights=self.weights[idx],
            provenance=self.provenance,
        )

    def split_holdout(self, size: int, seed: int = 0) -> tuple[Dataset, Dataset]:
        """Reserve a seeded random holdout of ``size`` instances; order is kept in both parts."""
        if not 0 < size < len(self):
            raise InvalidArgument(f"holdout size must be in 1..{len(self) - 1}, got {size}")
        rng = np.random.default_rng(seed)
        held = np.zeros(len(self), dtype=bool)
        held[rng.choice(len(self), size=size, replace=False)] = True
        return self.subset(~held), self.subset(held)
