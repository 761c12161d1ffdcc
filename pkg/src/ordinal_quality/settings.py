from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator


class AppSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "ordinal-quality"
    logging_config: Path | None = None


class IngestSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tolerance: float = Field(default=1e-6, gt=0)
    strict: bool = True


class FitSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    unit: str = "article"
    penalty: Literal["t", "none"] = "t"
    prior_df: float = Field(default=3.0, gt=0)
    prior_scale: float = Field(default=2.5, gt=0)
    max_iterations: int = Field(default=500, ge=1)
    gradient_tolerance: float = Field(default=1e-8, gt=0)
    weighted_pca: bool = True
    holdout: int = Field(default=0, ge=0)
    full_sample_weights: bool = False
    separation_limit: float = Field(default=50.0, gt=0)
    seed: int = 0


class ScoreSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    draws: int = Field(default=4000, ge=1000)
    level: float = Field(default=0.95, gt=0, lt=1)
    seed: int = 0


class EvaluateSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    units: list[str] = Field(default_factory=lambda: ["class", "revision", "article"])
    calibration_errors: Literal["delta", "bootstrap"] = "delta"
    bootstrap_samples: int = Field(default=200, ge=10)
    draws: int = Field(default=1000, ge=1000)
    seed: int = 0


class SynthSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(default=30000, ge=1)
    kappa: float = Field(default=50.0, gt=0)
    thresholds: list[float] = Field(default_factory=lambda: [-2.0, 0.0, 0.8, 2.0, 3.5])
    coefficients: list[float] = Field(default_factory=lambda: [1.5, -0.8, 0.5, 0.3, -0.2])
    seed: int = 0

    @field_validator("thresholds", "coefficients")
    @classmethod
    def _five_values(cls, value: list[float]) -> list[float]:
        if len(value) != 5:
            raise ValueError("exactly 5 values are required")
        return value


class Settings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    app: AppSettings = Field(default_factory=AppSettings)
    ingest: IngestSettings = Field(default_factory=IngestSettings)
    fit: FitSettings = Field(default_factory=FitSettings)
    score: ScoreSettings = Field(default_factory=ScoreSettings)
    evaluate: EvaluateSettings = Field(default_factory=EvaluateSettings)
    synth: SynthSettings = Field(default_factory=SynthSettings)
    logging: dict[str, Any] = Field(default_factory=dict)
