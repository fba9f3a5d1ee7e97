import numpy as np
import pytest

from calx import explainer
from calx.dataset import DataTable, FeatureSchema, Kind, SplitSpec, split
from calx.forest import fit_forest
from calx.synthetic import mixed


class LinearModel:
    """``h(x) = intercept + coef . x``; deterministic and exactly additive."""

    def __init__(self, coef, intercept=0.0):
        self.coef = np.asarray(coef, dtype=np.float64)
        self.intercept = float(intercept)

    def predict(self, rows):
        X = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        return X @ self.coef + self.intercept


@pytest.fixture(scope="session")
def mixed_data():
    return mixed(900, seed=3)


@pytest.fixture(scope="session")
def mixed_split(mixed_data):
    return split(mixed_data, SplitSpec(0.5, 300, seed=7))


@pytest.fixture(scope="session")
def mixed_model(mixed_split):
    train, _, _ = mixed_split
    return fit_forest(train, n_trees=20, min_leaf=3, seed=1)


@pytest.fixture(scope="session")
def mixed_state(mixed_model, mixed_split):
    _, cal, _ = mixed_split
    return explainer.initialize(mixed_model, cal, seed=5)


@pytest.fixture
def numeric_schema():
    return FeatureSchema.numeric(["a", "b"], target="y")


@pytest.fixture
def color_schema():
    return FeatureSchema(("a", "color"), (Kind.NUMERICAL, Kind.CATEGORICAL),
                         (None, ("red", "green", "blue")), target="y")


def table(rows, targets, schema):
    return DataTable(np.asarray(rows, dtype=float), targets, schema)
