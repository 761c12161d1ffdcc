import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np
import pytest

from ordinal_quality.core import PROBABILITY_COLUMNS
from ordinal_quality.features import fit_pca
from ordinal_quality.ordinal import fit
from ordinal_quality.synth import GeneratorSpec, generate

TRUE_THRESHOLDS = (-2.0, 0.0, 0.8, 2.0, 3.5)
TRUE_COEFFICIENTS = (1.5, -0.8, 0.5, 0.3, -0.2)


def pytest_addoption(parser):
    parser.addoption(
        "--paper-data",
        action="store",
        default=None,
        help="Directory with the published labeled score dataset for the reproduction test.",
    )


@pytest.fixture(scope="session")
def paper_data(request):
    path = request.config.getoption("--paper-data")
    if not path:
        pytest.skip("published dataset not supplied (use --paper-data)")
    return Path(path)


@pytest.fixture(scope="session")
def synth_pair():
    spec = GeneratorSpec(TRUE_THRESHOLDS, TRUE_COEFFICIENTS, kappa=50.0, n=3000, seed=11)
    return generate(spec)


@pytest.fixture(scope="session")
def synth_dataset(synth_pair):
    return synth_pair[0]


@pytest.fixture(scope="session")
def fitted_model(synth_dataset):
    pca = fit_pca(synth_dataset)
    return fit(synth_dataset, pca, unit="class")


def write_dataset_csv(path, rows):
    """Write (id, probs, label) rows as a dataset CSV."""
    lines = [",".join(("id", *PROBABILITY_COLUMNS, "label"))]
    for row_id, probs, label in rows:
        lines.append(",".join([str(row_id), *(repr(float(p)) for p in probs), str(label)]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def random_simplex(rng, n):
    return rng.dirichlet(np.ones(6), size=n)
