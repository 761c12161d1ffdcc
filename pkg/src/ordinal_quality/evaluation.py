from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import numpy.typing as npt
from scipy import stats

from .core import N_CLASSES, Dataset, QualityClass
from .errors import ConstantInput, InvalidArgument, LengthMismatch
from .logging_setup import get_logger
from .ordinal import FittedOrdinalModel, class_probability_matrix
from .scoring import _argmax_low, normalize, predict_from_phi, score_dataset
from .weighting import apply_weights, compute_weights, population_for_unit

log = get_logger(__name__)

Array = npt.NDArray[np.float64]


def _lengths(*arrays: npt.ArrayLike) -> int:
    sizes = {len(np.asarray(a)) for a in arrays}
    if len(sizes) != 1:
        raise LengthMismatch(f"inputs have different lengths: {sorted(sizes)}")
    return sizes.pop()


def weighted_accuracy(truth: npt.ArrayLike, predictions: npt.ArrayLike, weights: npt.ArrayLike | None = None) -> tuple[float, float]:
    """Weighted share of exact predictions and of predictions within one level."""
    y = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(predictions, dtype=np.int64)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=np.float64)
    _lengths(y, pred, w)
    if np.any(w < 0) or w.sum() <= 0:
        raise InvalidArgument("weights must be non-negative with a positive total")
    total = w.sum()
    accuracy = float(w @ (pred == y) / total)
    off_by_one = float(w @ (np.abs(pred - y) <= 1) / total)
    return accuracy, off_by_one


@dataclass(frozen=True)
class ClassCalibration:
    quality_class: QualityClass
    diff: float
    stderr: float


def calibration_by_class(
    truth: npt.ArrayLike,
    probabilities: npt.ArrayLike,
    weights: npt.ArrayLike | None = None,
    method: Literal["delta", "bootstrap"] = "delta",
    bootstrap_samples: int = 200,
    seed: int = 0,
) -> list[ClassCalibration]:
    """True minus mean predicted probability for every class, with standard errors.

    ``delta`` uses the linearized variance of the weighted mean of the per-instance terms
    ``1[y_i = k] - p_ik``; ``bootstrap`` resamples instances with replacement.
    """
    y = np.asarray(truth, dtype=np.int64)
    probs = np.asarray(probabilities, dtype=np.float64)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=np.float64)
    _lengths(y, probs, w)
    terms = np.eye(N_CLASSES)[y] - probs
    total = w.sum()
    diffs = w @ terms / total

    if method == "delta":
        stderr = np.sqrt((w[:, None] ** 2 * (terms - diffs) ** 2).sum(axis=0)) / total
    elif method == "bootstrap":
        rng = np.random.default_rng(seed)
        replicates = np.empty((bootstrap_samples, N_CLASSES))
        for b in range(bootstrap_samples):
            idx = rng.integers(0, len(y), size=len(y))
            replicates[b] = w[idx] @ terms[idx] / w[idx].sum()
        stderr = replicates.std(axis=0, ddof=1)
    else:
        raise InvalidArgument(f"unknown calibration error method {method!r}")

    return [ClassCalibration(QualityClass(k), float(diffs[k]), float(stderr[k])) for k in range(N_CLASSES)]


def pearson_r(a: npt.ArrayLike, b: npt.ArrayLike) -> float:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if _lengths(x, y) < 2:
        raise InvalidArgument("at least 2 observations are required")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ConstantInput("Pearson correlation is undefined for constant input")
    return float(stats.pearsonr(x, y).statistic)


def _merge_count(values: list[float]) -> tuple[list[float], int]:
    """Stable merge sort returning the number of strict inversions."""
    if len(values) <= 1:
        return values, 0
    middle = len(values) // 2
    left, left_swaps = _merge_count(values[:middle])
    right, right_swaps = _merge_count(values[middle:])
    merged: list[float] = []
    swaps = left_swaps + right_swaps
    i = j = 0
    while i < len(left) and j < len(right):
        if right[j] < left[i]:
            merged.append(right[j])
            swaps += len(left) - i
            j += 1
        else:
            merged.append(left[i])
            i += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, swaps


def _tie_pairs(sorted_values: Sequence[float] | Sequence[tuple[float, float]]) -> int:
    pairs = 0
    run = 1
    for previous, current in zip(sorted_values, sorted_values[1:]):
        if current == previous:
            run += 1
        else:
            pairs += run * (run - 1) // 2
            run = 1
    return pairs + run * (run - 1) // 2


def _tau_b(numerator: int, untied_a: int, untied_b: int) -> float:
    if untied_a == 0 or untied_b == 0:
        raise ConstantInput("Kendall tau is undefined when one input is constant")
    return numerator / math.sqrt(untied_a * untied_b)


def _tau_inputs(a: npt.ArrayLike, b: npt.ArrayLike) -> tuple[list[float], list[float]]:
    x = [float(v) for v in np.asarray(a, dtype=np.float64)]
    y = [float(v) for v in np.asarray(b, dtype=np.float64)]
    if _lengths(x, y) < 2:
        raise InvalidArgument("at least 2 observations are required")
    return x, y


def kendall_tau(a: npt.ArrayLike, b: npt.ArrayLike) -> float:
    """Tie-corrected Kendall tau-b in O(n log n) by counting merge-sort inversions."""
    x, y = _tau_inputs(a, b)
    n = len(x)
    pairs = sorted(zip(x, y))
    tied_a = _tie_pairs([p[0] for p in pairs])
    tied_joint = _tie_pairs(pairs)
    sorted_b, swaps = _merge_count([p[1] for p in pairs])
    tied_b = _tie_pairs(sorted_b)
    total = n * (n - 1) // 2
    numerator = total - tied_a - tied_b + tied_joint - 2 * swaps
    return _tau_b(numerator, total - tied_a, total - tied_b)


def kendall_tau_bruteforce(a: npt.ArrayLike, b: npt.ArrayLike) -> float:
    """O(n²) pair count with the same tau-b formula."""
    x, y = _tau_inputs(a, b)
    n = len(x)
    concordant = discordant = tied_a = tied_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[i] > x[j]) - (x[i] < x[j])
            dy = (y[i] > y[j]) - (y[i] < y[j])
            if dx == 0:
                tied_a += 1
            if dy == 0:
                tied_b += 1
            if dx * dy > 0:
                concordant += 1
            elif dx * dy < 0:
                discordant += 1
    total = n * (n - 1) // 2
    return _tau_b(concordant - discordant, total - tied_a, total - tied_b)


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    names: tuple[str, ...]
    pearson: Array
    kendall: Array

    def pairs(self) -> list[tuple[str, str, float, float]]:
        return [
            (self.names[i], self.names[j], float(self.pearson[i, j]), float(self.kendall[i, j]))
            for i in range(len(self.names))
            for j in range(len(self.names))
        ]


def correlation_matrix(measures: Mapping[str, npt.ArrayLike]) -> CorrelationMatrix:
    names = tuple(measures)
    values = [np.asarray(measures[name], dtype=np.float64) for name in names]
    _lengths(*values)
    size = len(names)
    pearson = np.eye(size)
    kendall = np.eye(size)
    for i in range(size):
        for j in range(i + 1, size):
            pearson[i, j] = pearson[j, i] = pearson_r(values[i], values[j])
            kendall[i, j] = kendall[j, i] = kendall_tau(values[i], values[j])
    return CorrelationMatrix(names=names, pearson=pearson, kendall=kendall)


@dataclass(frozen=True)
class AccuracyRow:
    unit: str
    model: str
    ordinal: bool
    accuracy: float
    off_by_one: float


@dataclass(frozen=True)
class CalibrationRow:
    unit: str
    model: str
    quality_class: QualityClass
    diff: float
    stderr: float


@dataclass(frozen=True)
class UncertaintyPoint:
    model: str
    phi_norm: float
    ci_width: float


@dataclass
class EvaluationReport:
    accuracy: list[AccuracyRow] = field(default_factory=list)
    calibration: list[CalibrationRow] = field(default_factory=list)
    uncertainty: list[UncertaintyPoint] = field(default_factory=list)
    correlations: CorrelationMatrix | None = None


MPQC_MODEL = "ORES MPQC"


def evaluate_models(
    dataset: Dataset,
    models: Mapping[str, FittedOrdinalModel],
    units: Sequence[str],
    sample_counts: Sequence[int] | None = None,
    calibration_errors: Literal["delta", "bootstrap"] = "delta",
    bootstrap_samples: int = 200,
    draws: int = 1000,
    seed: int = 0,
) -> EvaluationReport:
    """Evaluate every model under every unit of analysis on a held-out dataset.

    Weights are recomputed from the evaluation dataset's class counts unless
    ``sample_counts`` is given.
    """
    report = EvaluationReport()
    counts = dataset.class_counts() if sample_counts is None else sample_counts
    predictions: dict[str, npt.NDArray[np.int64]] = {MPQC_MODEL: _argmax_low(dataset.probs)}
    probabilities: dict[str, Array] = {MPQC_MODEL: dataset.probs}
    measures: dict[str, Array] = {}

    for name, model in models.items():
        if model.pca is None:
            raise InvalidArgument(f"model {name!r} has no PCA transform")
        features = model.pca.transform(dataset.probs)
        phi = features @ model.coefficients
        predictions[name] = predict_from_phi(phi, model.thresholds)
        probabilities[name] = class_probability_matrix(features, model)
        measures[name] = phi

        records = normalize(score_dataset(dataset, model, draws=draws, seed=seed), model.thresholds).records
        report.uncertainty.extend(
            UncertaintyPoint(name, float(r.phi_norm), float(r.ci_norm_high - r.ci_norm_low))  # type: ignore[operator]
            for r in sorted(records, key=lambda r: r.phi)
        )

    for unit in units:
        population = population_for_unit(unit)
        weighted = apply_weights(dataset, compute_weights(counts, population))
        for name, predicted in predictions.items():
            accuracy, off_by_one = weighted_accuracy(weighted.labels, predicted, weighted.weights)
            report.accuracy.append(AccuracyRow(population.unit, name, name != MPQC_MODEL, accuracy, off_by_one))
            for cal in calibration_by_class(
                weighted.labels,
                probabilities[name],
                weighted.weights,
                method=calibration_errors,
                bootstrap_samples=bootstrap_samples,
                seed=seed,
            ):
                report.calibration.append(CalibrationRow(population.unit, name, cal.quality_class, cal.diff, cal.stderr))
            log.info("`eval` unit=%s model=%s accuracy=%.3f off_by_one=%.3f", population.unit, name, accuracy, off_by_one)

    measures["evenly spaced"] = dataset.probs @ np.arange(N_CLASSES, dtype=np.float64)
    if len(measures) >= 2:
        report.correlations = correlation_matrix(measures)
    return report
