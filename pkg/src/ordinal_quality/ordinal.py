"""Weighted cumulative-logit (proportional odds) regression.

Thresholds are optimized through an unconstrained parametrization
``alpha_1 = theta_1, alpha_k = alpha_{k-1} + exp(theta_k)`` so every estimate and every
posterior draw has strictly increasing thresholds. Parameters are ordered
``(theta_1..theta_5, B_1..B_5)`` throughout.
"""
from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import numpy.typing as npt
from scipy import linalg, optimize, special, stats

from .core import N_CLASSES, N_THRESHOLDS, Dataset, ProbabilityVector
from .errors import (
    CovarianceNotPSD,
    DegenerateData,
    InvalidArgument,
    NonFiniteInput,
    NonFiniteLikelihood,
    NotConverged,
    SeparationDetected,
)
from .features import PcaTransform, transform_dataset
from .logging_setup import get_logger

log = get_logger(__name__)

N_FEATURES = N_THRESHOLDS
N_PARAMS = N_THRESHOLDS + N_FEATURES
LN2 = float(np.log(2.0))
PSD_TOLERANCE = 1e-8
ARMIJO = 1e-4
MIN_STEP = 1e-12

Array = npt.NDArray[np.float64]


@dataclass(frozen=True)
class FitOptions:
    penalty: Literal["t", "none"] = "t"
    prior_df: float = 3.0
    prior_scale: float = 2.5
    max_iterations: int = 500
    gradient_tolerance: float = 1e-8
    separation_limit: float = 50.0
    require_convergence: bool = False


@dataclass(frozen=True, eq=False)
class FittedOrdinalModel:
    coefficients: Array
    thresholds: Array
    covariance: Array
    loglik: float
    n: int
    n_effective: float
    converged: bool
    grad_norm: float
    iterations: int = 0
    penalty: str = "none"
    unit: str = "custom"
    pca: PcaTransform | None = None
    history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        for name, shape in (
            ("coefficients", (N_FEATURES,)),
            ("thresholds", (N_THRESHOLDS,)),
            ("covariance", (N_PARAMS, N_PARAMS)),
        ):
            value = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if value.shape != shape:
                raise InvalidArgument(f"model {name} has shape {value.shape}, expected {shape}")
            if not np.all(np.isfinite(value)):
                raise NonFiniteInput(f"model {name} contains non-finite values")
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        if np.any(np.diff(self.thresholds) <= 0):
            raise InvalidArgument(f"thresholds must be strictly increasing: {self.thresholds}")

    @property
    def theta(self) -> Array:
        return thresholds_to_theta(self.thresholds)

    @property
    def params(self) -> Array:
        return np.concatenate([self.theta, self.coefficients])

    def natural_covariance(self) -> Array:
        """Delta-method covariance over ``(alpha_1..alpha_5, B_1..B_5)``."""
        jacobian = linalg.block_diag(threshold_jacobian(self.theta), np.eye(N_FEATURES))
        return jacobian @ self.covariance @ jacobian.T

    def standard_errors(self) -> tuple[Array, Array]:
        """Standard errors of ``(thresholds, coefficients)``."""
        se = np.sqrt(np.clip(np.diag(self.natural_covariance()), 0.0, None))
        return se[:N_THRESHOLDS], se[N_THRESHOLDS:]


def thresholds_to_theta(thresholds: npt.ArrayLike) -> Array:
    alpha = np.asarray(thresholds, dtype=np.float64)
    return np.concatenate([alpha[..., :1], np.log(np.diff(alpha, axis=-1))], axis=-1)


def theta_to_thresholds(theta: npt.ArrayLike) -> Array:
    t = np.asarray(theta, dtype=np.float64)
    increments = np.cumsum(np.exp(t[..., 1:]), axis=-1)
    zeros = np.zeros(t.shape[:-1] + (1,))
    return t[..., :1] + np.concatenate([zeros, increments], axis=-1)


def threshold_jacobian(theta: npt.ArrayLike) -> Array:
    """``d alpha_k / d theta_j``."""
    t = np.asarray(theta, dtype=np.float64)
    jacobian = np.tril(np.ones((N_THRESHOLDS, N_THRESHOLDS)) * np.exp(t))
    jacobian[:, 0] = 1.0
    return jacobian


def _log1mexp(a: Array) -> Array:
    """``log(1 - exp(a))`` for ``a <= 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > -LN2, np.log(-np.expm1(a)), np.log1p(-np.exp(a)))


def log_interval_probability(upper: Array, lower: Array) -> Array:
    """``log(F(upper) - F(lower))`` for the logistic CDF ``F``, stable in both tails."""
    with np.errstate(invalid="ignore"):
        log_f_upper = special.log_expit(upper)
        log_f_lower = special.log_expit(lower)
        log_s_upper = special.log_expit(-upper)
        log_s_lower = special.log_expit(-lower)
        from_cdf = log_f_upper + _log1mexp(log_f_lower - log_f_upper)
        from_survival = log_s_lower + _log1mexp(log_s_upper - log_s_lower)
    return np.where(lower > 0, from_survival, from_cdf)


def _extended_thresholds(thresholds: Array) -> Array:
    return np.concatenate([[-np.inf], thresholds, [np.inf]])


def cumulative_probabilities(phi: float, model: FittedOrdinalModel) -> Array:
    """``Pr(y <= k)`` for the five cut points."""
    return special.expit(model.thresholds - phi)


def class_probability_matrix(features: npt.ArrayLike, model: FittedOrdinalModel) -> Array:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("features contain non-finite values")
    phi = X @ model.coefficients
    return probabilities_from_phi(phi, model.thresholds)


def probabilities_from_phi(phi: npt.ArrayLike, thresholds: npt.ArrayLike) -> Array:
    """Class probabilities ``(n, 6)`` for link-scale scores ``phi``."""
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    cuts = _extended_thresholds(np.asarray(thresholds, dtype=np.float64))
    upper = cuts[1:][None, :] - phi[:, None]
    lower = cuts[:-1][None, :] - phi[:, None]
    return np.exp(log_interval_probability(upper, lower))


def class_probabilities(x: npt.ArrayLike, model: FittedOrdinalModel) -> ProbabilityVector:
    probs = class_probability_matrix(x, model)[0]
    return ProbabilityVector(tuple(float(p) for p in probs))


@dataclass(frozen=True)
class NllResult:
    value: float
    gradient: Array
    hessian: Array


@dataclass(frozen=True)
class _InstanceTerms:
    log_p: Array
    d_alpha: Array  # (n, 5) d log p_i / d alpha
    d_phi: Array  # d log p_i / d phi
    h_uu: Array
    h_ll: Array
    h_ul: Array
    upper: Array
    lower: Array


def _instance_terms(alpha: Array, phi: Array, labels: npt.NDArray[np.int64]) -> _InstanceTerms:
    has_upper = labels < N_THRESHOLDS
    has_lower = labels > 0
    upper = np.minimum(labels, N_THRESHOLDS - 1)
    lower = np.maximum(labels - 1, 0)
    u = np.where(has_upper, alpha[upper] - phi, np.inf)
    l = np.where(has_lower, alpha[lower] - phi, -np.inf)
    log_p = log_interval_probability(u, l)

    with np.errstate(invalid="ignore", over="ignore"):
        g_u = np.exp(special.log_expit(u) + special.log_expit(-u) - log_p)
        g_l = np.exp(special.log_expit(l) + special.log_expit(-l) - log_p)
        f_u = special.expit(u)
        f_l = special.expit(l)
        h_uu = g_u * (1 - 2 * f_u) - g_u**2
        h_ll = -g_l * (1 - 2 * f_l) - g_l**2
        h_ul = g_u * g_l

    rows = np.arange(len(labels))
    d_alpha = np.zeros((len(labels), N_THRESHOLDS))
    d_alpha[rows, upper] += g_u
    d_alpha[rows, lower] -= g_l
    return _InstanceTerms(
        log_p=log_p,
        d_alpha=d_alpha,
        d_phi=g_l - g_u,
        h_uu=h_uu,
        h_ll=h_ll,
        h_ul=h_ul,
        upper=upper,
        lower=lower,
    )


def _penalty(params: Array, df: float, scale: float) -> tuple[float, Array, Array]:
    """Independent Student-t negative log-density on every parameter."""
    value = -float(np.sum(stats.t.logpdf(params, df, loc=0.0, scale=scale)))
    denom = df * scale**2 + params**2
    gradient = (df + 1) * params / denom
    hessian = np.diag((df + 1) * (df * scale**2 - params**2) / denom**2)
    return value, gradient, hessian


def _check_inputs(features: npt.ArrayLike, labels: npt.ArrayLike, weights: npt.ArrayLike) -> tuple[Array, npt.NDArray[np.int64], Array]:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise InvalidArgument(f"features must have shape (n, {N_FEATURES}), got {X.shape}")
    if y.shape != (X.shape[0],) or w.shape != (X.shape[0],):
        raise InvalidArgument("labels and weights must have one entry per feature row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(w))):
        raise NonFiniteInput("features or weights contain non-finite values")
    if np.any(w < 0):
        raise InvalidArgument("weights must be non-negative")
    if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
        raise InvalidArgument("labels must be class codes 0..5")
    return X, y, w


def nll_weighted(
    features: npt.ArrayLike,
    labels: npt.ArrayLike,
    weights: npt.ArrayLike,
    params: npt.ArrayLike,
    penalty: Literal["t", "none"] = "t",
    prior_df: float = 3.0,
    prior_scale: float = 2.5,
) -> NllResult:
    """Weighted negative log-likelihood with exact gradient and Hessian over ``(theta, B)``."""
    X, y, w = _check_inputs(features, labels, weights)
    value, gradient, hessian, _ = _nll(X, y, w, np.asarray(params, dtype=np.float64), penalty, prior_df, prior_scale)
    return NllResult(value=value, gradient=gradient, hessian=hessian)


def _nll(
    X: Array,
    y: npt.NDArray[np.int64],
    w: Array,
    params: Array,
    penalty: str,
    prior_df: float,
    prior_scale: float,
    with_scores: bool = False,
) -> tuple[float, Array, Array, Array | None]:
    theta, beta = params[:N_THRESHOLDS], params[N_THRESHOLDS:]
    alpha = theta_to_thresholds(theta)
    phi = X @ beta
    terms = _instance_terms(alpha, phi, y)
    if not np.all(np.isfinite(terms.log_p)):
        raise NonFiniteLikelihood("log-likelihood is not finite at the current parameters")

    value = -float(w @ terms.log_p)
    grad_alpha = -(terms.d_alpha.T @ w)
    grad_beta = -(X.T @ (w * terms.d_phi))

    h_phi = terms.h_uu + 2 * terms.h_ul + terms.h_ll
    flat = np.bincount(
        np.concatenate([
            terms.upper * N_THRESHOLDS + terms.upper,
            terms.lower * N_THRESHOLDS + terms.lower,
            terms.upper * N_THRESHOLDS + terms.lower,
            terms.lower * N_THRESHOLDS + terms.upper,
        ]),
        weights=np.concatenate([w * terms.h_uu, w * terms.h_ll, w * terms.h_ul, w * terms.h_ul]),
        minlength=N_THRESHOLDS * N_THRESHOLDS,
    )
    h_alpha = -flat.reshape(N_THRESHOLDS, N_THRESHOLDS)

    rows = np.arange(len(y))
    cross = np.zeros((len(y), N_THRESHOLDS))
    cross[rows, terms.upper] -= terms.h_uu + terms.h_ul
    cross[rows, terms.lower] -= terms.h_ul + terms.h_ll
    h_alpha_beta = -((cross * w[:, None]).T @ X)
    h_beta = -(X.T @ (X * (w * h_phi)[:, None]))

    jacobian = threshold_jacobian(theta)
    grad_theta = jacobian.T @ grad_alpha
    h_theta = jacobian.T @ h_alpha @ jacobian
    # second-order term of the log-increment reparametrization
    tail_sums = np.cumsum(grad_alpha[::-1])[::-1]
    h_theta[1:, 1:] += np.diag(np.exp(theta[1:]) * tail_sums[1:])
    h_theta_beta = jacobian.T @ h_alpha_beta

    gradient = np.concatenate([grad_theta, grad_beta])
    hessian = np.block([[h_theta, h_theta_beta], [h_theta_beta.T, h_beta]])
    hessian = (hessian + hessian.T) / 2

    if penalty == "t":
        p_value, p_gradient, p_hessian = _penalty(params, prior_df, prior_scale)
        value += p_value
        gradient = gradient + p_gradient
        hessian = hessian + p_hessian

    scores = None
    if with_scores:
        scores = np.hstack([terms.d_alpha @ jacobian, terms.d_phi[:, None] * X])
    return value, gradient, hessian, scores


def _objective_value(X: Array, y: npt.NDArray[np.int64], w: Array, params: Array, options: FitOptions) -> float:
    theta, beta = params[:N_THRESHOLDS], params[N_THRESHOLDS:]
    alpha = theta_to_thresholds(theta)
    if not np.all(np.isfinite(alpha)) or np.any(np.diff(alpha) <= 0):
        return np.inf
    upper_cut = _extended_thresholds(alpha)[y + 1] - X @ beta
    lower_cut = _extended_thresholds(alpha)[y] - X @ beta
    log_p = log_interval_probability(upper_cut, lower_cut)
    if not np.all(np.isfinite(log_p)):
        return np.inf
    value = -float(w @ log_p)
    if options.penalty == "t":
        value += _penalty(params, options.prior_df, options.prior_scale)[0]
    return value


def initial_params(labels: npt.ArrayLike, weights: npt.ArrayLike) -> Array:
    """Start at ``B = 0`` with thresholds at the logits of weighted cumulative class frequencies."""
    y = np.asarray(labels, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    totals = np.bincount(y, weights=w, minlength=N_CLASSES)
    cumulative = np.clip(np.cumsum(totals)[:N_THRESHOLDS] / totals.sum(), 1e-4, 1 - 1e-4)
    alpha = special.logit(cumulative)
    for k in range(1, N_THRESHOLDS):
        alpha[k] = max(alpha[k], alpha[k - 1] + 1e-3)
    return np.concatenate([thresholds_to_theta(alpha), np.zeros(N_FEATURES)])


def _newton_direction(gradient: Array, hessian: Array) -> Array:
    scale = max(float(np.max(np.abs(np.diag(hessian)))), 1.0)
    damping = 0.0
    for _ in range(60):
        try:
            factor = linalg.cho_factor(hessian + damping * np.eye(len(gradient)))
            return -linalg.cho_solve(factor, gradient)
        except linalg.LinAlgError:
            damping = scale * 1e-10 if damping == 0.0 else damping * 10
    return -gradient / scale


def _sandwich(hessian: Array, scores: Array, weights: Array) -> Array:
    weighted = scores * weights[:, None]
    meat = weighted.T @ weighted
    try:
        bread = linalg.inv(hessian)
    except linalg.LinAlgError:
        log.warning("`fit` Hessian is singular at the optimum; using a pseudo-inverse")
        bread = np.linalg.pinv(hessian)
    covariance = bread @ meat @ bread
    return (covariance + covariance.T) / 2


def fit_features(
    features: npt.ArrayLike,
    labels: npt.ArrayLike,
    weights: npt.ArrayLike,
    options: FitOptions | None = None,
    unit: str = "custom",
    pca: PcaTransform | None = None,
) -> FittedOrdinalModel:
    """Fit thresholds and coefficients on a feature matrix by damped Newton iterations."""
    options = options or FitOptions()
    X, y, w = _check_inputs(features, labels, weights)
    if np.count_nonzero(np.bincount(y[w > 0], minlength=N_CLASSES)) < 2:
        raise DegenerateData("at least two classes with positive weight are required")

    params = initial_params(y, w)
    value, gradient, hessian, _ = _nll(X, y, w, params, options.penalty, options.prior_df, options.prior_scale)
    history = [value]
    fallback_used = False
    iteration = 0

    for iteration in range(1, options.max_iterations + 1):
        if np.max(np.abs(gradient)) < options.gradient_tolerance:
            iteration -= 1
            break
        direction = _newton_direction(gradient, hessian)
        slope = float(gradient @ direction)
        step = 1.0
        accepted = False
        while step >= MIN_STEP:
            trial = params + step * direction
            trial_value = _objective_value(X, y, w, trial, options)
            if trial_value <= value + ARMIJO * step * slope:
                accepted = True
                break
            if np.isfinite(trial_value) and abs(trial_value - value) <= 1e-12 * max(1.0, abs(value)):
                # change is below rounding noise; accept only if the gradient shrinks
                _, trial_gradient, _, _ = _nll(X, y, w, trial, options.penalty, options.prior_df, options.prior_scale)
                if np.max(np.abs(trial_gradient)) < np.max(np.abs(gradient)):
                    accepted = True
                    break
            step /= 2

        if not accepted:
            if fallback_used:
                log.warning("`fit` Line search failed after quasi-Newton fallback; stopping")
                break
            fallback_used = True
            log.info("`fit` Line search failed at iteration %s; switching to BFGS", iteration)
            params = _quasi_newton(X, y, w, params, options)
        else:
            params = trial

        value, gradient, hessian, _ = _nll(X, y, w, params, options.penalty, options.prior_df, options.prior_scale)
        history.append(value)
        log.debug("`fit` iteration=%s nll=%.12g grad=%.3g step=%.3g", iteration, value, np.max(np.abs(gradient)), step)

    value, gradient, hessian, scores = _nll(
        X, y, w, params, options.penalty, options.prior_df, options.prior_scale, with_scores=True
    )
    assert scores is not None
    covariance = _sandwich(hessian, scores, w)
    grad_norm = float(np.max(np.abs(gradient)))
    converged = grad_norm < options.gradient_tolerance
    loglik = -value + (_penalty(params, options.prior_df, options.prior_scale)[0] if options.penalty == "t" else 0.0)

    model = FittedOrdinalModel(
        coefficients=params[N_THRESHOLDS:],
        thresholds=theta_to_thresholds(params[:N_THRESHOLDS]),
        covariance=covariance,
        loglik=loglik,
        n=int(len(y)),
        n_effective=float(w.sum() ** 2 / np.sum(w**2)),
        converged=bool(converged),
        grad_norm=grad_norm,
        iterations=iteration,
        penalty=options.penalty,
        unit=unit,
        pca=pca,
        history=tuple(history),
    )
    _check_separation(X, w, model, options)

    if not model.converged:
        log.warning("`fit` Not converged after %s iterations (grad_norm=%.3g)", iteration, grad_norm)
        if options.require_convergence:
            raise NotConverged(f"not converged after {iteration} iterations (grad_norm={grad_norm:.3g})", model=model)
    else:
        log.info("`fit` Converged in %s iterations: loglik=%.6f grad_norm=%.3g", iteration, loglik, grad_norm)
    return model


def _quasi_newton(X: Array, y: npt.NDArray[np.int64], w: Array, params: Array, options: FitOptions) -> Array:
    def fun(p: Array) -> tuple[float, Array]:
        try:
            value, gradient, _, _ = _nll(X, y, w, p, options.penalty, options.prior_df, options.prior_scale)
        except NonFiniteLikelihood:
            return np.inf, np.zeros_like(p)
        return value, gradient

    result = optimize.minimize(
        fun,
        params,
        jac=True,
        method="BFGS",
        options={"gtol": options.gradient_tolerance, "maxiter": options.max_iterations},
    )
    start_value = fun(params)[0]
    return result.x if result.fun <= start_value else params


def _check_separation(X: Array, w: Array, model: FittedOrdinalModel, options: FitOptions) -> None:
    mean = w @ X / w.sum()
    spread = np.sqrt(w @ (X - mean) ** 2 / w.sum())
    standardized = np.abs(model.coefficients) * spread
    if np.any(standardized > options.separation_limit):
        raise SeparationDetected(
            f"standardized coefficients {np.round(standardized, 2).tolist()} exceed {options.separation_limit}; "
            "classes look perfectly separable"
        )


def fit(dataset: Dataset, pca: PcaTransform, options: FitOptions | None = None, unit: str = "custom") -> FittedOrdinalModel:
    """Fit on the PCA features of a weighted dataset; the transform is stored with the model."""
    dataset.require_fittable()
    features = transform_dataset(dataset, pca)
    log.info("`fit` Fitting %s instances for unit %s", len(dataset), unit)
    return fit_features(features, dataset.labels, dataset.weights, options=options, unit=unit, pca=pca)


@dataclass(frozen=True, eq=False)
class ParameterDraws:
    """Laplace draws; iterating yields ``(thresholds, coefficients)`` pairs."""

    params: Array
    thresholds: Array
    coefficients: Array

    def __len__(self) -> int:
        return len(self.params)

    def __iter__(self) -> Iterator[tuple[Array, Array]]:
        return iter(zip(self.thresholds, self.coefficients))


def sample_parameters(model: FittedOrdinalModel, count: int, seed: int = 0) -> ParameterDraws:
    """Draw ``(theta, B)`` from the Laplace normal and map theta to increasing thresholds."""
    if count < 0:
        raise InvalidArgument(f"draw count must be non-negative, got {count}")
    eigenvalues, eigenvectors = np.linalg.eigh(model.covariance)
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    if eigenvalues.min() < -PSD_TOLERANCE * scale:
        raise CovarianceNotPSD(f"covariance has eigenvalue {eigenvalues.min():.3g}")
    factor = eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, N_PARAMS))
    params = model.params + z @ factor.T
    return ParameterDraws(
        params=params,
        thresholds=theta_to_thresholds(params[:, :N_THRESHOLDS]) if count else np.empty((0, N_THRESHOLDS)),
        coefficients=params[:, N_THRESHOLDS:],
    )