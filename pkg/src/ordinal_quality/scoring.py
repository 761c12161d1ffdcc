from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np
import numpy.typing as npt

from .core import N_CLASSES, Dataset, ProbabilityVector, QualityClass
from .errors import DegenerateRange, InvalidArgument, NonFiniteInput
from .features import PcaTransform
from .logging_setup import get_logger
from .ordinal import FittedOrdinalModel, ParameterDraws, probabilities_from_phi, sample_parameters

log = get_logger(__name__)

TIE_TOLERANCE = 1e-12
MIN_DRAWS = 1000
SCORE_BLOCK = 512
EVEN_SPACING = np.arange(N_CLASSES, dtype=np.float64)


@dataclass(frozen=True)
class ScoreRecord:
    id: str
    phi: float
    ci_low: float
    ci_high: float
    predicted_class: QualityClass
    mpqc: QualityClass
    evenly_spaced: float
    phi_norm: float | None = None
    ci_norm_low: float | None = None
    ci_norm_high: float | None = None

    def __post_init__(self) -> None:
        if not self.ci_low <= self.phi <= self.ci_high:
            raise InvalidArgument(f"{self.id}: interval [{self.ci_low}, {self.ci_high}] does not contain phi={self.phi}")


@dataclass(frozen=True)
class NormalizationMap:
    """Increasing affine map ``offset + scale * phi`` onto the pooled [low, high] range."""

    offset: float
    scale: float
    low: float
    high: float

    @classmethod
    def from_range(cls, low: float, high: float) -> NormalizationMap:
        if not high > low:
            raise DegenerateRange(f"cannot normalize a range with low={low} and high={high}")
        span = high - low
        return cls(offset=-low / span, scale=1.0 / span, low=low, high=high)

    def __call__(self, values: npt.ArrayLike) -> npt.NDArray[np.float64]:
        v = np.asarray(values, dtype=np.float64)
        return (v - self.low) / (self.high - self.low)


@dataclass(frozen=True)
class NormalizedScores:
    map: NormalizationMap
    records: list[ScoreRecord]
    thresholds: npt.NDArray[np.float64]


def _simplex_array(probs: ProbabilityVector | npt.ArrayLike) -> npt.NDArray[np.float64]:
    values = probs.as_array() if isinstance(probs, ProbabilityVector) else np.asarray(probs, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteInput(f"non-finite probability vector {values}")
    return values / values.sum(axis=-1, keepdims=True)


def _require_pca(model: FittedOrdinalModel, pca: PcaTransform | None) -> PcaTransform:
    transform = pca or model.pca
    if transform is None:
        raise InvalidArgument("model has no PCA transform; pass the transform used at fit time")
    return transform


def score(probs: ProbabilityVector | npt.ArrayLike, model: FittedOrdinalModel, pca: PcaTransform | None = None) -> float:
    """Link-scale quality score ``phi = B . transform(p)``."""
    features = _require_pca(model, pca).transform(_simplex_array(probs))
    return float(features @ model.coefficients)


def _interval(phis: npt.NDArray[np.float64], phi: float, level: float) -> tuple[float, float]:
    tail = (1 - level) / 2 * 100
    low, high = np.percentile(phis, [tail, 100 - tail])
    return min(float(low), phi), max(float(high), phi)


def score_interval(
    probs: ProbabilityVector | npt.ArrayLike,
    model: FittedOrdinalModel,
    draws: int = 4000,
    seed: int = 0,
    level: float = 0.95,
    pca: PcaTransform | None = None,
) -> tuple[float, float]:
    """Percentile interval of ``phi`` over Laplace parameter draws."""
    if draws < MIN_DRAWS:
        raise InvalidArgument(f"at least {MIN_DRAWS} draws are required, got {draws}")
    features = _require_pca(model, pca).transform(_simplex_array(probs))
    sample = sample_parameters(model, draws, seed)
    return _interval(sample.coefficients @ features, float(features @ model.coefficients), level)


def predict_from_phi(phi: npt.ArrayLike, thresholds: npt.ArrayLike) -> npt.NDArray[np.int64]:
    """Most probable class per score; near-ties go to the lower class."""
    probs = probabilities_from_phi(phi, thresholds)
    return _argmax_low(probs)


def _argmax_low(probs: npt.NDArray[np.float64]) -> npt.NDArray[np.int64]:
    probs = np.atleast_2d(probs)
    tied = probs >= probs.max(axis=1, keepdims=True) - TIE_TOLERANCE
    return np.argmax(tied, axis=1).astype(np.int64)


def predict_class(probs: ProbabilityVector | npt.ArrayLike, model: FittedOrdinalModel, pca: PcaTransform | None = None) -> QualityClass:
    return QualityClass(int(predict_from_phi(score(probs, model, pca), model.thresholds)[0]))


def mpqc(probs: ProbabilityVector | npt.ArrayLike) -> QualityClass:
    """Most probable quality class of the classifier output itself."""
    values = probs.as_array() if isinstance(probs, ProbabilityVector) else np.asarray(probs, dtype=np.float64)
    return QualityClass(int(_argmax_low(values)[0]))


def evenly_spaced(probs: ProbabilityVector | npt.ArrayLike) -> float:
    """Weighted sum of class probabilities with handpicked coefficients 0..5."""
    values = probs.as_array() if isinstance(probs, ProbabilityVector) else np.asarray(probs, dtype=np.float64)
    return float(values @ EVEN_SPACING)


def score_dataset(
    dataset: Dataset,
    model: FittedOrdinalModel,
    draws: int = 4000,
    seed: int = 0,
    level: float = 0.95,
    pca: PcaTransform | None = None,
) -> list[ScoreRecord]:
    """Score every instance in input order, sharing one set of parameter draws."""
    if draws < MIN_DRAWS:
        raise InvalidArgument(f"at least {MIN_DRAWS} draws are required, got {draws}")
    features = _require_pca(model, pca).transform(dataset.probs)
    phis = features @ model.coefficients
    sample = sample_parameters(model, draws, seed)
    tail = (1 - level) / 2 * 100
    lows = np.empty(len(dataset))
    highs = np.empty(len(dataset))
    # one block of instances x draws at a time
    for start in range(0, len(dataset), SCORE_BLOCK):
        block = slice(start, start + SCORE_BLOCK)
        lows[block], highs[block] = np.percentile(features[block] @ sample.coefficients.T, [tail, 100 - tail], axis=1)
    predicted = predict_from_phi(phis, model.thresholds)
    classifier_mpqc = _argmax_low(dataset.probs)
    even = dataset.probs @ EVEN_SPACING

    records = [
        ScoreRecord(
            id=dataset.ids[i],
            phi=float(phis[i]),
            ci_low=min(float(lows[i]), float(phis[i])),
            ci_high=max(float(highs[i]), float(phis[i])),
            predicted_class=QualityClass(int(predicted[i])),
            mpqc=QualityClass(int(classifier_mpqc[i])),
            evenly_spaced=float(even[i]),
        )
        for i in range(len(dataset))
    ]
    log.info("`score` Scored %s instances with %s draws (seed=%s)", len(records), draws, seed)
    return records


def normalize(records: Sequence[ScoreRecord], thresholds: npt.ArrayLike) -> NormalizedScores:
    """Rescale scores, interval bounds and thresholds by the pooled min/max of scores and thresholds."""
    alpha = np.asarray(thresholds, dtype=np.float64)
    pooled = np.concatenate([[r.phi for r in records], alpha])
    norm = NormalizationMap.from_range(float(pooled.min()), float(pooled.max()))
    normalized = [
        replace(
            r,
            phi_norm=float(norm(r.phi)),
            ci_norm_low=float(norm(r.ci_low)),
            ci_norm_high=float(norm(r.ci_high)),
        )
        for r in records
    ]
    return NormalizedScores(map=norm, records=normalized, thresholds=norm(alpha))


def class_intervals(normalized_thresholds: npt.ArrayLike) -> list[tuple[QualityClass, float, float]]:
    """Share of the normalized scale occupied by each class between adjacent thresholds."""
    edges = np.concatenate([[0.0], np.asarray(normalized_thresholds, dtype=np.float64), [1.0]])
    return [(qc, float(edges[qc]), float(edges[qc + 1])) for qc in QualityClass]


@dataclass(frozen=True)
class ThresholdRow:
    threshold: int
    alpha: float
    alpha_norm: float
    ci_low: float
    ci_high: float
    ci_low_norm: float
    ci_high_norm: float


def threshold_report(
    model: FittedOrdinalModel,
    norm: NormalizationMap,
    draws: int = 4000,
    seed: int = 0,
    level: float = 0.95,
    sample: ParameterDraws | None = None,
) -> list[ThresholdRow]:
    sample = sample or sample_parameters(model, draws, seed)
    tail = (1 - level) / 2 * 100
    lows, highs = np.percentile(sample.thresholds, [tail, 100 - tail], axis=0)
    rows = []
    for k, alpha in enumerate(model.thresholds):
        low, high = min(float(lows[k]), float(alpha)), max(float(highs[k]), float(alpha))
        rows.append(
            ThresholdRow(
                threshold=k + 1,
                alpha=float(alpha),
                alpha_norm=float(norm(alpha)),
                ci_low=low,
                ci_high=high,
                ci_low_norm=float(norm(low)),
                ci_high_norm=float(norm(high)),
            )
        )
    return rows
