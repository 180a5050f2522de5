import os

import numpy as np
import pytest

from app import create_app
from ghist.core import sort_sample
from ghist.ingest import ingest_csv
from ghist.uniformity import BandTable

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
IRIS_CSV = os.path.join(DATA_DIR, "iris.csv")


@pytest.fixture
def iris_csv():
    return IRIS_CSV


@pytest.fixture
def iris_petal_length():
    return ingest_csv(IRIS_CSV, "petal_length", "species")


@pytest.fixture(scope="session")
def small_bands():
    """Cheap bands for tests that only need a consistent criterion."""
    return BandTable(alpha=0.05, m_replicates=300, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def two_clouds(rng):
    values = np.concatenate((rng.uniform(0, 1, 200), rng.uniform(9, 10, 200)))
    labels = ["low"] * 200 + ["high"] * 200
    return sort_sample(values, labels)


@pytest.fixture
def app():
    return create_app({"TESTING": True})


@pytest.fixture
def runner(app):
    return app.test_cli_runner()
