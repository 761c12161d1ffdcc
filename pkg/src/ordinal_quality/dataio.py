"""Dataset, population, model and report files.

Dataset CSV columns are ``id,p_stub,p_start,p_c,p_b,p_ga,p_fa,label``. JSONL rows carry
``id``, ``label`` and either a ``probs`` list or the same ``p_*`` keys. Model files are
versioned JSON written atomically.
"""
from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, ValidationError

from .core import CLASS_NAMES, PROBABILITY_COLUMNS, SUM_TOLERANCE, Dataset, LabeledInstance, QualityClass, validate_instance
from .errors import (
    DataError,
    InvalidArgument,
    IoFailure,
    MalformedRow,
    MissingClass,
    MissingColumn,
    NegativeCount,
    RowProblem,
    RowValidationError,
    SchemaVersionMismatch,
)
from .features import PcaTransform
from .logging_setup import get_logger
from .ordinal import FittedOrdinalModel
from .utils import atomic_write, atomic_write_text
from .weighting import PopulationCounts

log = get_logger(__name__)

SCHEMA_VERSION = 1
DATASET_COLUMNS = ("id", *PROBABILITY_COLUMNS, "label")
SCORE_COLUMNS = (
    "id",
    "phi",
    "ci_low",
    "ci_high",
    "phi_norm",
    "predicted_class",
    "mpqc",
    "evenly_spaced",
    "ci_norm_low",
    "ci_norm_high",
)

DatasetFormat = Literal["csv", "jsonl"]
# a parsed (id, probs, label) row, or the problem that kept it from parsing
RawRow = tuple[object, list[Any], object] | DataError


@dataclass
class IngestReport:
    path: str
    rows: int = 0
    class_counts: dict[str, int] = field(default_factory=dict)
    dropped: list[RowProblem] = field(default_factory=list)

    @property
    def accepted(self) -> int:
        return self.rows - len(self.dropped)


def _infer_format(path: Path, fmt: str | None) -> DatasetFormat:
    if fmt is None:
        fmt = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv"
    if fmt not in ("csv", "jsonl"):
        raise InvalidArgument(f"unsupported dataset format {fmt!r}")
    return fmt  # type: ignore[return-value]


def _read_csv_rows(path: Path) -> list[RawRow]:
    # every cell is read as text; floats are parsed per row so one bad cell is one bad row
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing = [column for column in DATASET_COLUMNS if column not in frame.columns]
    if missing:
        raise MissingColumn(f"{path}: missing columns {missing}")
    return [
        (row["id"], [row[column] for column in PROBABILITY_COLUMNS], row["label"])
        for row in frame.to_dict(orient="records")
    ]


def _jsonl_row(record: object) -> RawRow:
    if not isinstance(record, dict):
        return MalformedRow(f"expected a JSON object, got {type(record).__name__}")
    if "probs" in record:
        probs = record["probs"]
        if not isinstance(probs, list):
            return MalformedRow(f"'probs' must be a list, got {type(probs).__name__}")
    else:
        absent = [key for key in PROBABILITY_COLUMNS if key not in record]
        if absent:
            return MissingColumn(f"missing keys {absent}")
        probs = [record[key] for key in PROBABILITY_COLUMNS]
    if "id" not in record or "label" not in record:
        return MissingColumn("rows need 'id' and 'label'")
    return record["id"], probs, record["label"]


def _read_jsonl_rows(path: Path) -> list[RawRow]:
    rows: list[RawRow] = []
    with path.open("r", encoding="utf-8") as file:
        for number, line in enumerate(file, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IoFailure(f"{path}:{number}: invalid JSON: {exc}") from exc
            rows.append(_jsonl_row(record))
    return rows


def read_dataset(
    path: Path | str,
    fmt: DatasetFormat | None = None,
    strict: bool = True,
    tolerance: float = SUM_TOLERANCE,
) -> tuple[Dataset, IngestReport]:
    """Read and validate a labeled dataset.

    In strict mode any invalid row raises :class:`RowValidationError` listing every problem;
    otherwise invalid rows are dropped and listed in the report. Row numbers are 1-based and
    count data rows only.
    """
    source = Path(path)
    kind = _infer_format(source, fmt)
    try:
        raw_rows = _read_csv_rows(source) if kind == "csv" else _read_jsonl_rows(source)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IoFailure(f"cannot read {source}: {exc}") from exc

    report = IngestReport(path=str(source), rows=len(raw_rows))
    instances: list[LabeledInstance] = []
    for number, raw in enumerate(raw_rows, start=1):
        if isinstance(raw, DataError):
            report.dropped.append(RowProblem(number, raw.code, raw.message))
            continue
        raw_id, probs, label = raw
        try:
            instances.append(validate_instance(raw_id, probs, label, tolerance=tolerance))
        except (DataError, InvalidArgument) as exc:
            report.dropped.append(RowProblem(number, exc.code, exc.message))

    if report.dropped:
        if strict:
            raise RowValidationError(report.dropped)
        log.warning("`io` Dropped %s of %s rows from %s", len(report.dropped), report.rows, source)

    dataset = Dataset.from_instances(instances, provenance=str(source))
    report.class_counts = dict(zip(CLASS_NAMES, (int(c) for c in dataset.class_counts())))
    log.info("`io` Read %s instances from %s: %s", len(dataset), source, report.class_counts)
    return dataset, report


def write_dataset(dataset: Dataset, path: Path | str) -> None:
    frame = pd.DataFrame(dataset.probs, columns=list(PROBABILITY_COLUMNS))
    frame.insert(0, "id", list(dataset.ids))
    frame["label"] = [QualityClass(int(code)).label for code in dataset.labels]
    _write_frame(path, frame)


def read_population(path: Path | str) -> PopulationCounts:
    """Read a flat ``class name: count`` YAML map with an optional ``unit`` key."""
    source = Path(path)
    try:
        with source.open("r", encoding="utf-8") as file:
            loaded = yaml.safe_load(file) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise IoFailure(f"cannot read population file {source}: {exc}") from exc
    if not isinstance(loaded, dict):
        raise InvalidArgument(f"{source}: population file must be a mapping of class names to counts")

    unit = str(loaded.pop("unit", source.stem))
    counts: dict[QualityClass, int] = {}
    for key, value in loaded.items():
        qc = QualityClass.parse(key)
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidArgument(f"{source}: count for {qc.label} must be an integer, got {value!r}")
        if value < 0:
            raise NegativeCount(f"{source}: negative count {value} for {qc.label}")
        counts[qc] = value

    missing = [qc.label for qc in QualityClass if qc not in counts]
    if missing:
        raise MissingClass(f"{source}: no count for classes {missing}; write 0 explicitly")
    population = PopulationCounts(tuple(counts[qc] for qc in QualityClass), unit=unit)
    log.debug("`io` Population %s from %s: %s", unit, source, population.counts)
    return population


def population_yaml(population: PopulationCounts) -> str:
    return yaml.safe_dump({"unit": population.unit, **population.as_mapping()}, sort_keys=False)


class _PcaDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mean: list[float]
    loadings: list[list[float]]
    eigenvalues: list[float]


class _FitDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    loglik: float
    n: int
    n_effective: float
    converged: bool
    grad_norm: float
    iterations: int = 0
    penalty: str = "none"


class _ModelDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int
    unit: str
    pca: _PcaDocument | None
    coefficients: list[float]
    thresholds: list[float]
    covariance: list[list[float]]
    fit: _FitDocument


def model_document(model: FittedOrdinalModel) -> dict[str, Any]:
    pca = None
    if model.pca is not None:
        pca = {
            "mean": model.pca.mean.tolist(),
            "loadings": model.pca.loadings.tolist(),
            "eigenvalues": model.pca.eigenvalues.tolist(),
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "unit": model.unit,
        "pca": pca,
        "coefficients": model.coefficients.tolist(),
        "thresholds": model.thresholds.tolist(),
        "covariance": model.covariance.tolist(),
        "fit": {
            "loglik": float(model.loglik),
            "n": int(model.n),
            "n_effective": float(model.n_effective),
            "converged": bool(model.converged),
            "grad_norm": float(model.grad_norm),
            "iterations": int(model.iterations),
            "penalty": model.penalty,
        },
    }


def write_model(model: FittedOrdinalModel, path: Path | str) -> None:
    """Write a model as JSON; floats use shortest round-trip repr so reads are bit-exact."""
    text = json.dumps(model_document(model), indent=2, allow_nan=False) + "\n"
    atomic_write_text(path, text)
    log.info("`io` Model written to %s", path)


def read_model(path: Path | str) -> FittedOrdinalModel:
    source = Path(path)
    try:
        raw = json.loads(source.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read model file {source}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoFailure(f"{source} is not a JSON model file: {exc}") from exc

    version = raw.get("schema_version") if isinstance(raw, dict) else None
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"{source}: schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
    try:
        document = _ModelDocument.model_validate(raw)
    except ValidationError as exc:
        raise IoFailure(f"{source}: malformed model file: {exc}") from exc

    pca = None
    if document.pca is not None:
        pca = PcaTransform(
            mean=np.asarray(document.pca.mean),
            loadings=np.asarray(document.pca.loadings),
            eigenvalues=np.asarray(document.pca.eigenvalues),
        )
    return FittedOrdinalModel(
        coefficients=np.asarray(document.coefficients),
        thresholds=np.asarray(document.thresholds),
        covariance=np.asarray(document.covariance),
        loglik=document.fit.loglik,
        n=document.fit.n,
        n_effective=document.fit.n_effective,
        converged=document.fit.converged,
        grad_norm=document.fit.grad_norm,
        iterations=document.fit.iterations,
        penalty=document.fit.penalty,
        unit=document.unit,
        pca=pca,
    )


def _write_frame(path: Path | str, frame: pd.DataFrame) -> None:
    atomic_write(path, lambda file: frame.to_csv(file, index=False, lineterminator="\n"))


def _rows_frame(rows: Iterable[object], columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame([[getattr(row, column) for column in columns] for row in rows], columns=list(columns))


def write_scores(path: Path | str, records: Sequence[Any]) -> None:
    frame = _rows_frame(records, SCORE_COLUMNS)
    for column in ("predicted_class", "mpqc"):
        frame[column] = [QualityClass(int(v)).label for v in frame[column]]
    _write_frame(path, frame)
    log.info("`io` Wrote %s scores to %s", len(frame), path)


def read_scores(path: Path | str) -> pd.DataFrame:
    source = Path(path)
    try:
        frame = pd.read_csv(source, dtype={"id": str}, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IoFailure(f"cannot read score file {source}: {exc}") from exc
    missing = [column for column in ("id", "phi") if column not in frame.columns]
    if missing:
        raise MissingColumn(f"{source}: missing columns {missing}")
    return frame


def write_threshold_report(path: Path | str, rows: Sequence[Any]) -> None:
    columns = ("threshold", "alpha", "alpha_norm", "ci_low", "ci_high", "ci_low_norm", "ci_high_norm")
    _write_frame(path, _rows_frame(rows, columns))


def write_class_intervals(path: Path | str, intervals: Sequence[tuple[QualityClass, float, float]]) -> None:
    frame = pd.DataFrame(
        [(qc.label, low, high, high - low) for qc, low, high in intervals],
        columns=["class", "low", "high", "width"],
    )
    _write_frame(path, frame)


def write_accuracy(path: Path | str, rows: Sequence[Any]) -> None:
    _write_frame(path, _rows_frame(rows, ("unit", "model", "ordinal", "accuracy", "off_by_one")))


def write_calibration(path: Path | str, rows: Sequence[Any]) -> None:
    frame = _rows_frame(rows, ("unit", "model", "quality_class", "diff", "stderr"))
    frame = frame.rename(columns={"quality_class": "class"})
    frame["class"] = [QualityClass(int(v)).label for v in frame["class"]]
    _write_frame(path, frame)


def write_uncertainty(path: Path | str, points: Sequence[Any]) -> None:
    _write_frame(path, _rows_frame(points, ("model", "phi_norm", "ci_width")))


def write_correlations(path: Path | str, pairs: Sequence[tuple[str, str, float, float]]) -> None:
    _write_frame(path, pd.DataFrame(list(pairs), columns=["measure_a", "measure_b", "pearson", "kendall"]))


def write_features(path: Path | str, ids: Sequence[str], features: np.ndarray) -> None:
    frame = pd.DataFrame(features, columns=[f"pc{k + 1}" for k in range(features.shape[1])])
    frame.insert(0, "id", list(ids))
    _write_frame(path, frame)


def write_truth(path: Path | str, ids: Sequence[str], latent: np.ndarray, phi: np.ndarray, class_probs: np.ndarray) -> None:
    frame = pd.DataFrame(latent, columns=[f"x{k + 1}" for k in range(latent.shape[1])])
    frame.insert(0, "id", list(ids))
    frame["phi"] = phi
    for k, column in enumerate(PROBABILITY_COLUMNS):
        frame[f"true_{column}"] = class_probs[:, k]
    _write_frame(path, frame)
