from __future__ import annotations

from dataclasses import dataclass


class OrdinalQualityError(Exception):
    """Base error; ``code`` is the stable name reported by the CLI."""

    code = "OrdinalQualityError"

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


class DataError(OrdinalQualityError):
    code = "DataError"


class ModelError(OrdinalQualityError):
    code = "ModelError"


class InvalidArgument(OrdinalQualityError):
    code = "InvalidArgument"


class NegativeProbability(DataError):
    code = "NegativeProbability"


class SumOutOfTolerance(DataError):
    code = "SumOutOfTolerance"


class UnknownLabel(DataError):
    code = "UnknownLabel"


class MissingColumn(DataError):
    code = "MissingColumn"


class IoFailure(DataError):
    code = "IoFailure"


class MalformedRow(DataError):
    code = "MalformedRow"


class SchemaVersionMismatch(DataError):
    code = "SchemaVersionMismatch"


class MissingClass(DataError):
    code = "MissingClass"


class NegativeCount(DataError):
    code = "NegativeCount"


class EmptyPopulation(DataError):
    code = "EmptyPopulation"


class ZeroSampleClass(DataError):
    code = "ZeroSampleClass"


class ZeroPopulationClass(DataError):
    code = "ZeroPopulationClass"


class UncoveredLabel(DataError):
    code = "UncoveredLabel"


class DegenerateData(DataError):
    code = "DegenerateData"


class NonFiniteInput(DataError):
    code = "NonFiniteInput"


class LengthMismatch(DataError):
    code = "LengthMismatch"


class ConstantInput(DataError):
    code = "ConstantInput"


class DegenerateRange(DataError):
    code = "DegenerateRange"


class NonFiniteLikelihood(ModelError):
    code = "NonFiniteLikelihood"


class NotConverged(ModelError):
    code = "NotConverged"

    def __init__(self, message: str, model: object | None = None) -> None:
        super().__init__(message)
        self.model = model


class SeparationDetected(ModelError):
    code = "SeparationDetected"


class CovarianceNotPSD(ModelError):
    code = "CovarianceNotPSD"


@dataclass(frozen=True)
class RowProblem:
    row: int
    code: str
    message: str


class RowValidationError(DataError):
    code = "RowValidationError"

    def __init__(self, problems: list[RowProblem]) -> None:
        preview = "; ".join(f"row {p.row}: {p.code}: {p.message}" for p in problems[:5])
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        super().__init__(f"{len(problems)} invalid rows: {preview}{more}")
        self.problems = problems
