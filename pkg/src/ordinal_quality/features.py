from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.linalg import helmert

from .core import N_CLASSES, N_THRESHOLDS, Dataset, ProbabilityVector
from .errors import DegenerateData, InvalidArgument
from .logging_setup import get_logger

log = get_logger(__name__)

N_COMPONENTS = N_THRESHOLDS
EIGENVALUE_FLOOR = -1e-12


@dataclass(frozen=True, eq=False)
class PcaTransform:
    """Weighted principal components of simplex vectors.

    ``loadings`` has one orthonormal row per component, ordered by descending
    ``eigenvalues``. The sixth direction is dropped: simplex vectors sum to one, so
    their covariance is singular along it.
    """

    mean: npt.NDArray[np.float64]
    loadings: npt.NDArray[np.float64]
    eigenvalues: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        for name, shape in (("mean", (N_CLASSES,)), ("loadings", (N_COMPONENTS, N_CLASSES)), ("eigenvalues", (N_COMPONENTS,))):
            value = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if value.shape != shape:
                raise InvalidArgument(f"PCA {name} has shape {value.shape}, expected {shape}")
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def transform(self, probs: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Map one vector (6,) or a matrix (n, 6) of probabilities to features."""
        p = np.asarray(probs, dtype=np.float64)
        return (p - self.mean) @ self.loadings.T

    def reconstruct(self, features: npt.ArrayLike) -> npt.NDArray[np.float64]:
        return self.mean + np.asarray(features, dtype=np.float64) @ self.loadings


def fit_pca(dataset: Dataset, weighted: bool = True) -> PcaTransform:
    """Fit the top-5 components of the (weighted) covariance of the probability vectors."""
    probs = dataset.probs
    if len(np.unique(probs, axis=0)) < 2:
        raise DegenerateData("fewer than 2 distinct probability vectors; PCA is undefined")
    weights = dataset.weights if weighted else np.ones(len(dataset))
    total = weights.sum()
    mean = weights @ probs / total
    centered = probs - mean
    covariance = (centered * weights[:, None]).T @ centered / total
    covariance = (covariance + covariance.T) / 2

    # diagonalize inside the sum-zero subspace so the dropped direction is always (1,..,1)
    basis = helmert(N_CLASSES)
    eigenvalues, eigenvectors = np.linalg.eigh(basis @ covariance @ basis.T)
    order = np.argsort(eigenvalues, kind="stable")[::-1]
    eigenvalues = eigenvalues[order]
    loadings = (basis.T @ eigenvectors[:, order]).T

    # sign convention: each row's largest-magnitude entry is positive
    pivots = np.argmax(np.abs(loadings), axis=1)
    signs = np.sign(loadings[np.arange(N_COMPONENTS), pivots])
    loadings = loadings * signs[:, None]

    if eigenvalues.min() < EIGENVALUE_FLOOR:
        log.warning("`pca` Negative eigenvalue %.3g clamped to 0", eigenvalues.min())
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    log.debug("`pca` eigenvalues=%s weighted=%s", eigenvalues, weighted)
    return PcaTransform(mean=mean, loadings=loadings, eigenvalues=eigenvalues)


def transform(probs: ProbabilityVector | npt.ArrayLike, t: PcaTransform) -> npt.NDArray[np.float64]:
    values = probs.as_array() if isinstance(probs, ProbabilityVector) else probs
    return t.transform(values)


def transform_dataset(dataset: Dataset, t: PcaTransform) -> npt.NDArray[np.float64]:
    return t.transform(dataset.probs)
