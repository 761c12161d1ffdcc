"""Synthetic datasets drawn from a known cumulative-logit model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import special

from .core import N_CLASSES, N_THRESHOLDS, Dataset
from .errors import InvalidArgument
from .logging_setup import get_logger
from .ordinal import probabilities_from_phi

log = get_logger(__name__)

Array = npt.NDArray[np.float64]


@dataclass(frozen=True)
class GeneratorSpec:
    thresholds: tuple[float, ...]
    coefficients: tuple[float, ...]
    kappa: float = 50.0
    n: int = 30000
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "thresholds", tuple(float(a) for a in self.thresholds))
        object.__setattr__(self, "coefficients", tuple(float(b) for b in self.coefficients))
        if len(self.thresholds) != N_THRESHOLDS or len(self.coefficients) != N_THRESHOLDS:
            raise InvalidArgument(f"{N_THRESHOLDS} thresholds and {N_THRESHOLDS} coefficients are required")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise InvalidArgument(f"true thresholds must be strictly increasing: {self.thresholds}")
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise InvalidArgument(f"kappa must be positive, got {self.kappa}")
        if self.n < 1:
            raise InvalidArgument(f"n must be at least 1, got {self.n}")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    features: Array
    phi: Array
    class_probs: Array


def _dirichlet_rows(rng: np.random.Generator, alpha: Array) -> Array:
    """One Dirichlet draw per row of ``alpha``, normalized in log space.

    Gamma(a) is drawn as Gamma(a + 1) * U ** (1 / a), so shapes far below one never
    underflow a whole row to zeros.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        log_gamma = np.log(rng.standard_gamma(alpha + 1.0)) + np.log(rng.random(alpha.shape)) / alpha
    # a zero shape is a point mass at zero
    return special.softmax(np.where(alpha > 0, log_gamma, -np.inf), axis=1)


def generate(spec: GeneratorSpec, latent: npt.ArrayLike | None = None) -> tuple[Dataset, GroundTruth]:
    """Draw a labeled dataset whose probability vectors are Dirichlet noise around the truth.

    Latent features are standard normal unless ``latent`` (``n × 5``) is supplied. One
    generator stream per call: features, then labels, then the Dirichlet draws.
    """
    rng = np.random.default_rng(spec.seed)
    if latent is None:
        x = rng.standard_normal((spec.n, N_THRESHOLDS))
    else:
        x = np.asarray(latent, dtype=np.float64)
        if x.shape != (spec.n, N_THRESHOLDS):
            raise InvalidArgument(f"latent features have shape {x.shape}, expected ({spec.n}, {N_THRESHOLDS})")
    phi = x @ np.asarray(spec.coefficients)
    class_probs = probabilities_from_phi(phi, spec.thresholds)

    cumulative = np.cumsum(class_probs, axis=1)[:, :-1]
    labels = (rng.random(spec.n)[:, None] >= cumulative).sum(axis=1).astype(np.int64)

    probs = _dirichlet_rows(rng, spec.kappa * class_probs)

    width = max(6, len(str(spec.n)))
    dataset = Dataset(
        ids=tuple(f"synth-{i:0{width}d}" for i in range(1, spec.n + 1)),
        probs=probs,
        labels=np.minimum(labels, N_CLASSES - 1),
        weights=np.ones(spec.n),
        provenance=f"synth(seed={spec.seed}, n={spec.n}, kappa={spec.kappa})",
    )
    log.info("`synth` Generated %s instances (seed=%s, kappa=%s)", spec.n, spec.seed, spec.kappa)
    return dataset, GroundTruth(features=x, phi=phi, class_probs=class_probs)

