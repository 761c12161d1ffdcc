import math

import numpy as np
import pytest
from conftest import TRUE_COEFFICIENTS, TRUE_THRESHOLDS
from scipy import special, stats

from ordinal_quality.errors import (
    CovarianceNotPSD,
    DegenerateData,
    NonFiniteInput,
    NotConverged,
    SeparationDetected,
)
from ordinal_quality.ordinal import (
    FitOptions,
    FittedOrdinalModel,
    class_probabilities,
    class_probability_matrix,
    cumulative_probabilities,
    fit_features,
    initial_params,
    nll_weighted,
    sample_parameters,
    theta_to_thresholds,
    thresholds_to_theta,
)
from ordinal_quality.synth import GeneratorSpec, generate

UNIFORM_THRESHOLDS = special.logit(np.arange(1, 6) / 6)
NO_PENALTY = FitOptions(penalty="none")


def make_model(thresholds, coefficients=(1.0, 0.0, 0.0, 0.0, 0.0), covariance=None):
    return FittedOrdinalModel(
        coefficients=np.asarray(coefficients, dtype=np.float64),
        thresholds=np.asarray(thresholds, dtype=np.float64),
        covariance=np.zeros((10, 10)) if covariance is None else covariance,
        loglik=0.0,
        n=1,
        n_effective=1.0,
        converged=True,
        grad_norm=0.0,
    )


def synth(n, seed, thresholds=TRUE_THRESHOLDS, coefficients=TRUE_COEFFICIENTS):
    dataset, truth = generate(GeneratorSpec(thresholds, coefficients, kappa=50.0, n=n, seed=seed))
    return truth.features, dataset.labels


@pytest.mark.parametrize("k", range(5))
def test_score_at_threshold_is_even_odds(k):
    model = make_model(TRUE_THRESHOLDS)
    x = np.array([TRUE_THRESHOLDS[k], 0, 0, 0, 0])
    probs = class_probability_matrix(x, model)[0]
    assert math.fsum(probs[: k + 1]) == pytest.approx(0.5, abs=1e-14)
    assert cumulative_probabilities(TRUE_THRESHOLDS[k], model)[k] == 0.5


def test_uniform_thresholds_give_equal_probabilities():
    model = make_model(UNIFORM_THRESHOLDS, coefficients=np.zeros(5))
    rng = np.random.default_rng(0)
    for x in rng.normal(size=(20, 5)):
        assert class_probabilities(x, model).as_array() == pytest.approx(np.full(6, 1 / 6), abs=1e-12)


def test_far_above_top_threshold_is_fa():
    model = make_model(TRUE_THRESHOLDS)
    probs = class_probability_matrix([TRUE_THRESHOLDS[4] + 50, 0, 0, 0, 0], model)[0]
    # 1 - 1e-20 rounds to 1.0, so the bound is checked on the complement
    assert math.fsum(probs[:5]) < 1e-20
    assert probs[5] > 1 - 1e-15


def test_probabilities_sum_to_one():
    model = make_model(TRUE_THRESHOLDS, TRUE_COEFFICIENTS)
    X = np.random.default_rng(1).normal(scale=20, size=(500, 5))
    probs = class_probability_matrix(X, model)
    assert np.all(probs >= 0)
    assert np.abs(probs.sum(axis=1) - 1) == pytest.approx(np.zeros(500), abs=1e-12)


def test_non_finite_features_are_rejected():
    with pytest.raises(NonFiniteInput):
        class_probability_matrix([np.nan, 0, 0, 0, 0], make_model(TRUE_THRESHOLDS))


def test_theta_parametrization_round_trip():
    theta = thresholds_to_theta(TRUE_THRESHOLDS)
    assert theta[0] == TRUE_THRESHOLDS[0]
    assert theta_to_thresholds(theta) == pytest.approx(TRUE_THRESHOLDS, abs=1e-14)
    assert np.all(np.diff(theta_to_thresholds(np.array([0.0, -30, 5, -2, 0]))) > 0)


def test_single_uniform_instance_costs_log_six():
    params = np.concatenate([thresholds_to_theta(UNIFORM_THRESHOLDS), np.zeros(5)])
    x = np.ones((1, 5))
    plain = nll_weighted(x, [3], [1.0], params, penalty="none")
    assert plain.value == pytest.approx(math.log(6), abs=1e-12)
    penalized = nll_weighted(x, [3], [1.0], params, penalty="t")
    expected_penalty = -np.sum(stats.t.logpdf(params, 3, scale=2.5))
    assert penalized.value == pytest.approx(math.log(6) + expected_penalty, abs=1e-10)


def test_doubling_weights_doubles_data_term():
    X, y = synth(300, seed=2)
    params = initial_params(y, np.ones(len(y))) + 0.1
    once = nll_weighted(X, y, np.ones(len(y)), params, penalty="none")
    twice = nll_weighted(X, y, np.full(len(y), 2.0), params, penalty="none")
    assert twice.value == pytest.approx(2 * once.value, rel=1e-14)
    assert twice.gradient == pytest.approx(2 * once.gradient, rel=1e-12, abs=1e-12)
    assert twice.hessian == pytest.approx(2 * once.hessian, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("penalty", ["none", "t"])
def test_gradient_and_hessian_match_finite_differences(penalty):
    X, y = synth(500, seed=3)
    rng = np.random.default_rng(4)
    w = rng.uniform(0.2, 3.0, size=len(y))
    step = 1e-5
    for _ in range(100):
        params = np.concatenate([[rng.normal(-1, 1)], rng.normal(0, 0.5, size=4), rng.normal(0, 0.5, size=5)])
        result = nll_weighted(X, y, w, params, penalty=penalty)
        fd_gradient = np.empty(10)
        fd_hessian = np.empty((10, 10))
        for j in range(10):
            shift = np.zeros(10)
            shift[j] = step
            plus = nll_weighted(X, y, w, params + shift, penalty=penalty)
            minus = nll_weighted(X, y, w, params - shift, penalty=penalty)
            fd_gradient[j] = (plus.value - minus.value) / (2 * step)
            fd_hessian[:, j] = (plus.gradient - minus.gradient) / (2 * step)
        scale = max(1.0, np.max(np.abs(result.gradient)))
        assert np.max(np.abs(result.gradient - fd_gradient)) <= 1e-6 * scale
        h_scale = max(1.0, np.max(np.abs(result.hessian)))
        assert np.max(np.abs(result.hessian - fd_hessian)) <= 1e-4 * h_scale


def test_recovers_truth_on_synthetic_data():
    X, y = synth(30000, seed=5)
    model = fit_features(X, y, np.ones(len(y)), NO_PENALTY)
    assert model.converged
    alpha_se, beta_se = model.standard_errors()
    span = TRUE_THRESHOLDS[4] - TRUE_THRESHOLDS[0]
    assert np.all(np.abs(model.thresholds - TRUE_THRESHOLDS) < 4 * alpha_se)
    assert np.all(np.abs(model.coefficients - TRUE_COEFFICIENTS) < 4 * beta_se)
    assert np.all(np.abs(model.thresholds - TRUE_THRESHOLDS) < 0.05 * span)
    assert np.all(np.abs(model.coefficients - TRUE_COEFFICIENTS) < 0.05 * span)


def test_recovery_coverage_over_replications():
    inside_alpha = np.zeros(5)
    inside_beta = np.zeros(5)
    replications = 20
    for seed in range(replications):
        X, y = synth(30000, seed=100 + seed)
        model = fit_features(X, y, np.ones(len(y)), NO_PENALTY)
        assert np.all(np.diff(model.thresholds) > 0)
        alpha_se, beta_se = model.standard_errors()
        inside_alpha += np.abs(model.thresholds - TRUE_THRESHOLDS) < 3 * alpha_se
        inside_beta += np.abs(model.coefficients - TRUE_COEFFICIENTS) < 3 * beta_se
    assert np.all(inside_alpha >= 0.95 * replications)
    assert np.all(inside_beta >= 0.95 * replications)


def test_error_shrinks_with_sample_size():
    truth = np.concatenate([TRUE_THRESHOLDS, TRUE_COEFFICIENTS])

    def rms_error(n):
        errors = []
        for seed in range(5):
            X, y = synth(n, seed=200 + seed)
            model = fit_features(X, y, np.ones(len(y)), NO_PENALTY)
            errors.append(np.concatenate([model.thresholds, model.coefficients]) - truth)
        return float(np.sqrt(np.mean(np.square(errors))))

    ratio = rms_error(3000) / rms_error(30000)
    assert math.sqrt(10) / 2 < ratio < math.sqrt(10) * 2


def test_constant_weights_do_not_move_the_estimate():
    X, y = synth(4000, seed=6)
    ones = fit_features(X, y, np.ones(len(y)), NO_PENALTY)
    scaled = fit_features(X, y, np.full(len(y), 3.7), NO_PENALTY)
    assert scaled.thresholds == pytest.approx(ones.thresholds, abs=1e-8)
    assert scaled.coefficients == pytest.approx(ones.coefficients, abs=1e-8)


def test_single_class_fails_before_optimizing():
    X = np.random.default_rng(0).normal(size=(10, 5))
    with pytest.raises(DegenerateData):
        fit_features(X, np.zeros(10, dtype=int), np.ones(10))


def test_objective_decreases_monotonically():
    X, y = synth(3000, seed=7)
    model = fit_features(X, y, np.ones(len(y)))
    history = np.asarray(model.history)
    assert len(history) >= 2
    assert np.all(np.diff(history) <= 1e-9 * np.abs(history[1:]))


def test_hessian_at_optimum_is_consistent():
    X, y = synth(3000, seed=8)
    w = np.ones(len(y))
    model = fit_features(X, y, w, NO_PENALTY)
    result = nll_weighted(X, y, w, model.params, penalty="none")
    assert np.max(np.abs(result.gradient)) < 1e-6
    assert np.all(np.linalg.eigvalsh(result.hessian) > 0)
    covariance = model.covariance
    assert covariance == pytest.approx(covariance.T, abs=1e-10)
    assert np.linalg.eigvalsh(covariance).min() >= -1e-8


def test_translation_shifts_thresholds_only():
    X, y = synth(5000, seed=9)
    w = np.ones(len(y))
    shift = np.array([0.5, -1.0, 0.25, 2.0, -0.3])
    base = fit_features(X, y, w, NO_PENALTY)
    moved = fit_features(X + shift, y, w, NO_PENALTY)
    assert moved.coefficients == pytest.approx(base.coefficients, abs=1e-6)
    assert moved.thresholds == pytest.approx(base.thresholds + base.coefficients @ shift, abs=1e-6)
    assert class_probability_matrix(X[:50] + shift, moved) == pytest.approx(class_probability_matrix(X[:50], base), abs=1e-6)


def test_refit_is_bit_reproducible():
    X, y = synth(2000, seed=10)
    a = fit_features(X, y, np.ones(len(y)))
    b = fit_features(X, y, np.ones(len(y)))
    assert np.array_equal(a.thresholds, b.thresholds)
    assert np.array_equal(a.coefficients, b.coefficients)
    assert np.array_equal(a.covariance, b.covariance)


def test_separation_guard():
    X, y = synth(2000, seed=12)
    with pytest.raises(SeparationDetected):
        fit_features(X, y, np.ones(len(y)), FitOptions(separation_limit=0.1))


def test_not_converged_is_flagged_or_raised():
    X, y = synth(2000, seed=13)
    flagged = fit_features(X, y, np.ones(len(y)), FitOptions(max_iterations=1))
    assert not flagged.converged
    with pytest.raises(NotConverged) as excinfo:
        fit_features(X, y, np.ones(len(y)), FitOptions(max_iterations=1, require_convergence=True))
    assert excinfo.value.model is not None


def test_zero_draws_is_empty():
    draws = sample_parameters(make_model(TRUE_THRESHOLDS), 0)
    assert len(draws) == 0
    assert list(draws) == []


def test_zero_covariance_draws_equal_the_estimate():
    model = make_model(TRUE_THRESHOLDS, TRUE_COEFFICIENTS)
    draws = sample_parameters(model, 50, seed=1)
    assert np.allclose(draws.thresholds, model.thresholds, rtol=0, atol=1e-14)
    assert np.array_equal(draws.coefficients, np.tile(model.coefficients, (50, 1)))


def test_draw_covariance_matches_model(fitted_model):
    draws = sample_parameters(fitted_model, 100_000, seed=2)
    empirical = np.cov(draws.params.T)
    error = np.linalg.norm(empirical - fitted_model.covariance) / np.linalg.norm(fitted_model.covariance)
    assert error < 0.05
    assert np.all(np.diff(draws.thresholds, axis=1) > 0)


def test_draws_are_seeded(fitted_model):
    a = sample_parameters(fitted_model, 1000, seed=3)
    b = sample_parameters(fitted_model, 1000, seed=3)
    assert np.array_equal(a.params, b.params)


def test_indefinite_covariance_is_rejected():
    covariance = np.eye(10)
    covariance[0, 0] = -1.0
    with pytest.raises(CovarianceNotPSD):
        sample_parameters(make_model(TRUE_THRESHOLDS, covariance=covariance), 10)
