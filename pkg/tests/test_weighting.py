from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ordinal_quality.core import Dataset
from ordinal_quality.errors import (
    EmptyPopulation,
    NegativeCount,
    UncoveredLabel,
    ZeroPopulationClass,
    ZeroSampleClass,
)
from ordinal_quality.weighting import (
    ARTICLE_COUNTS,
    CLASS_COUNTS,
    REVISION_COUNTS,
    PopulationCounts,
    WeightTable,
    apply_weights,
    compute_weights,
    population_for_unit,
    weights_for_unit,
)

PUBLISHED_SAMPLE = (4969, 4979, 4988, 4990, 4999, 4995)


def _dataset(labels):
    n = len(labels)
    return Dataset(
        ids=tuple(str(i) for i in range(n)),
        probs=np.eye(6)[labels],
        labels=np.asarray(labels),
        weights=np.ones(n),
    )


def test_published_article_weights():
    table = compute_weights(PUBLISHED_SAMPLE, ARTICLE_COUNTS)
    assert table.weights == pytest.approx((4.23, 1.28, 0.30, 0.16, 0.04, 0.01), abs=0.005)
    assert table.unit == "article"


def test_published_revision_weights():
    table = compute_weights(PUBLISHED_SAMPLE, REVISION_COUNTS)
    assert table.weights == pytest.approx((2.52, 1.64, 0.81, 0.76, 0.19, 0.08), abs=0.005)


def test_proportional_population_gives_unit_weights():
    table = compute_weights((10, 20, 30, 40, 50, 60), PopulationCounts((1, 2, 3, 4, 5, 6), unit="custom"))
    assert table.weights == (1.0,) * 6


def test_class_unit_gives_equal_weights():
    table = compute_weights((250,) * 6, CLASS_COUNTS)
    assert table.weights == (1.0,) * 6


def test_zero_sample_class_is_an_error():
    with pytest.raises(ZeroSampleClass):
        compute_weights((0, 1, 1, 1, 1, 1), ARTICLE_COUNTS)


def test_zero_population_class_needs_permissive_mode():
    population = PopulationCounts((5, 5, 5, 5, 5, 0), unit="no-fa")
    with pytest.raises(ZeroPopulationClass):
        compute_weights((1, 1, 1, 1, 1, 1), population)
    table = compute_weights((1, 1, 1, 1, 1, 1), population, permissive=True)
    assert table.weights[5] == 0.0
    assert table.weights[0] == pytest.approx(1.2)


def test_population_validation():
    with pytest.raises(EmptyPopulation):
        PopulationCounts((0,) * 6, unit="empty")
    with pytest.raises(NegativeCount):
        PopulationCounts((1, -1, 1, 1, 1, 1), unit="bad")


@given(st.integers(min_value=1, max_value=1000))
def test_population_scale_does_not_change_weights(scale):
    scaled = PopulationCounts(tuple(c * scale for c in (3, 1, 4, 1, 5, 9)), unit="scaled")
    base = PopulationCounts((3, 1, 4, 1, 5, 9), unit="base")
    sample = (7, 3, 5, 2, 8, 1)
    assert compute_weights(sample, scaled).weights == pytest.approx(compute_weights(sample, base).weights, rel=1e-12)


def test_all_stub_dataset_gets_stub_weight():
    table = WeightTable((4.23, 1, 1, 1, 1, 1), unit="article")
    weighted = apply_weights(_dataset([0, 0, 0]), table)
    assert weighted.weights.tolist() == [4.23] * 3


def test_unit_weights_leave_dataset_unchanged():
    dataset = _dataset([0, 1, 2, 5])
    weighted = apply_weights(dataset, WeightTable((1.0,) * 6, unit="class"))
    assert np.array_equal(weighted.weights, dataset.weights)
    assert weighted.ids == dataset.ids


def test_uncovered_label():
    with pytest.raises(UncoveredLabel):
        apply_weights(_dataset([0, 5]), WeightTable((1, 1, 1, 1, 1, 0), unit="no-fa"))


def test_weighted_proportions_reproduce_population_exactly():
    labels = [0] * 3 + [1] * 2 + [2] * 4 + [3] + [4] * 5 + [5] * 2
    dataset = _dataset(labels)
    sample = dataset.class_counts()
    population = PopulationCounts((7, 3, 2, 5, 1, 4), unit="small")
    weighted = apply_weights(dataset, compute_weights(sample, population))
    totals = weighted.weighted_class_totals()
    assert totals / totals.sum() == pytest.approx(population.proportions(), abs=1e-12)

    # the same identity in exact rational arithmetic
    n = int(sample.sum())
    exact = [Fraction(p * n, int(s) * population.total) * int(s) for p, s in zip(population.counts, sample)]
    assert [e / sum(exact) for e in exact] == [Fraction(p, population.total) for p in population.counts]


def test_published_article_proportions():
    dataset = _dataset([k for k, count in enumerate((50, 40, 60, 45, 55, 30)) for _ in range(count)])
    weighted = weights_for_unit(dataset, "article")
    totals = weighted.weighted_class_totals()
    assert totals / totals.sum() == pytest.approx(ARTICLE_COUNTS.proportions(), abs=1e-12)


def test_population_for_unit_reads_files(tmp_path):
    path = tmp_path / "pop.yaml"
    path.write_text("unit: tiny\nStub: 1\nStart: 2\nC: 3\nB: 4\nGA: 5\nFA: 6\n", encoding="utf-8")
    assert population_for_unit("revision") is REVISION_COUNTS
    population = population_for_unit(str(path))
    assert population.unit == "tiny"
    assert population.counts == (1, 2, 3, 4, 5, 6)
