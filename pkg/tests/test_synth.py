import math

import numpy as np
import pytest
from conftest import TRUE_COEFFICIENTS, TRUE_THRESHOLDS

from ordinal_quality.core import validate_instance
from ordinal_quality.errors import InvalidArgument
from ordinal_quality.ordinal import fit_features
from ordinal_quality.scoring import NormalizationMap, class_intervals
from ordinal_quality.synth import GeneratorSpec, generate


def test_large_concentration_reproduces_true_probabilities():
    dataset, truth = generate(GeneratorSpec(TRUE_THRESHOLDS, TRUE_COEFFICIENTS, kappa=1e9, n=500, seed=1))
    assert np.max(np.abs(dataset.probs - truth.class_probs)) < 1e-3


def test_labels_follow_class_probabilities_at_zero_score():
    n = 100_000
    spec = GeneratorSpec(TRUE_THRESHOLDS, TRUE_COEFFICIENTS, n=n, seed=2)
    dataset, truth = generate(spec, latent=np.zeros((n, 5)))
    frequencies = np.bincount(dataset.labels, minlength=6) / n
    assert frequencies == pytest.approx(truth.class_probs[0], abs=0.01)
    assert np.all(truth.phi == 0)


def test_same_seed_same_dataset():
    spec = GeneratorSpec(TRUE_THRESHOLDS, TRUE_COEFFICIENTS, n=200, seed=3)
    a, _ = generate(spec)
    b, _ = generate(spec)
    assert a.ids == b.ids
    assert np.array_equal(a.probs, b.probs)
    assert np.array_equal(a.labels, b.labels)
    c, _ = generate(GeneratorSpec(TRUE_THRESHOLDS, TRUE_COEFFICIENTS, n=200, seed=4))
    assert not np.array_equal(a.probs, c.probs)


def test_rows_pass_validation():
    dataset, _ = generate(GeneratorSpec(TRUE_THRESHOLDS, TRUE_COEFFICIENTS, kappa=5.0, n=300, seed=5))
    for instance in dataset:
        checked = validate_instance(instance.id, list(instance.probs), instance.label.label)
        assert math.fsum(checked.probs) == 1.0
    assert dataset.ids[0] == "synth-000001"
    assert np.all(dataset.weights == 1.0)


def test_tiny_concentration_still_gives_simplex_rows():
    dataset, _ = generate(GeneratorSpec(TRUE_THRESHOLDS, TRUE_COEFFICIENTS, kappa=0.01, n=20000, seed=1))
    assert np.all(np.isfinite(dataset.probs))
    assert dataset.probs.min() >= 0
    assert dataset.probs.sum(axis=1) == pytest.approx(np.ones(20000), abs=1e-9)
    # nearly all mass lands on a single class
    assert np.median(dataset.probs.max(axis=1)) > 0.99
    for index in range(0, 20000, 997):
        instance = dataset.instance(index)
        validate_instance(instance.id, list(instance.probs), instance.label.label)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"thresholds": (0, 1, 2, 3)},
        {"thresholds": (0, 1, 1, 2, 3)},
        {"coefficients": (1, 2)},
        {"kappa": 0.0},
        {"kappa": float("inf")},
        {"n": 0},
    ],
)
def test_generator_spec_validation(kwargs):
    values = {"thresholds": TRUE_THRESHOLDS, "coefficients": TRUE_COEFFICIENTS, **kwargs}
    with pytest.raises(InvalidArgument):
        GeneratorSpec(**values)


def test_latent_shape_is_checked():
    with pytest.raises(InvalidArgument):
        generate(GeneratorSpec(TRUE_THRESHOLDS, TRUE_COEFFICIENTS, n=10), latent=np.zeros((10, 4)))


def test_uneven_true_spacing_gives_uneven_class_intervals():
    thresholds = np.cumsum([-3.0, 2.0, 2.0, 0.3, 1.0])
    spec = GeneratorSpec(tuple(thresholds), TRUE_COEFFICIENTS, n=30000, seed=6)
    dataset, truth = generate(spec)
    model = fit_features(truth.features, dataset.labels, dataset.weights)
    assert np.diff(model.thresholds) == pytest.approx(np.diff(thresholds), abs=0.25)

    phi = truth.features @ model.coefficients
    norm = NormalizationMap.from_range(min(phi.min(), model.thresholds[0]), max(phi.max(), model.thresholds[-1]))
    intervals = class_intervals(norm(model.thresholds))
    middle = [high - low for _, low, high in intervals[1:-1]]
    assert max(middle) > 3 * min(middle)
