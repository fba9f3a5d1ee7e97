import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calx import kernels
from calx.dataset import DataTable, FeatureSchema
from calx.errors import EmptyTraining, SchemaMismatch
from calx.forest import (
    ForestModel,
    PredictionTable,
    RegressorContract,
    fit_forest,
    per_member_predictions,
    predict,
)

from oracles import best_split_enumeration

BACKENDS = kernels.available()


def numeric(X, y=None):
    X = np.asarray(X, dtype=float)
    X = X.reshape(-1, 1) if X.ndim == 1 else X
    return DataTable(X, y, FeatureSchema.numeric([f"f{j}" for j in range(X.shape[1])]))


def test_constant_target():
    t = numeric(np.arange(10.0), np.full(10, 10.0))
    m = fit_forest(t, n_trees=5, seed=0)
    assert np.all(m.predict(np.random.default_rng(0).normal(size=(7, 1))) == 10)
    assert np.all(m.oob_predictions() == 10)


@pytest.mark.parametrize("backend", BACKENDS)
def test_depth_one_stump_threshold(backend):
    t = numeric([1, 2, 3, 4], [0, 0, 10, 10])
    m = fit_forest(t, n_trees=1, max_depth=1, seed=0, backend=backend)
    internal = m.feature >= 0
    assert internal.sum() <= 1
    # the bootstrap may drop rows; when it keeps both classes the split separates them
    if internal.any():
        thr = m.threshold[internal][0]
        assert 1 < thr < 4


def test_stump_on_full_data_separates_classes():
    # best split on the full sample, as a single tree sees it without bootstrap
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0.0, 0.0, 10.0, 10.0])
    f, thr, _ = kernels.get().best_split(X, y, np.arange(4), np.array([0]), 1, 1)
    assert f == 0 and 2 < thr <= 3
    assert thr == 2.5


def test_deterministic_for_seed():
    rng = np.random.default_rng(1)
    t = numeric(rng.normal(size=(80, 3)), rng.normal(size=80))
    a = fit_forest(t, n_trees=2, seed=9)
    b = fit_forest(t, n_trees=2, seed=9)
    np.testing.assert_array_equal(a.per_member_predictions(t), b.per_member_predictions(t))


def _leaf_of(m, root, x):
    node = root
    while m.feature[node] >= 0:
        node = m.left[node] if x[m.feature[node]] <= m.threshold[node] else m.right[node]
    return node


def test_leaf_value_is_in_bag_mean():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 2))
    y = rng.normal(size=60)
    m = fit_forest(numeric(X, y), n_trees=3, min_leaf=4, seed=3)
    for t in range(m.n_trees):
        # replay the bootstrap draw to get multiplicities
        rng_t = np.random.default_rng(np.random.SeedSequence(3).spawn(3)[t])
        draws = rng_t.integers(0, 60, 60)
        assert set(draws) == set(np.flatnonzero(m.bootstrap_masks[t]))
        routed = {}
        for i in draws:
            routed.setdefault(_leaf_of(m, m.roots[t], X[i]), []).append(y[i])
        for leaf, values in routed.items():
            assert m.value[leaf] == pytest.approx(np.mean(values), abs=1e-12)


def test_oob_excludes_in_bag_trees():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(40, 2))
    t = numeric(X, rng.normal(size=40))
    m = fit_forest(t, n_trees=15, seed=2)
    members = m.per_member_predictions(X)
    for i in range(40):
        out = ~m.bootstrap_masks[:, i]
        if out.any():
            assert m.oob_prediction[i] == pytest.approx(members[out, i].mean())
            assert not m.oob_missing[i]
        else:
            assert m.oob_missing[i]
            assert m.oob_prediction[i] == pytest.approx(members[:, i].mean())


def test_every_row_in_bag_is_flagged():
    t = numeric([0.0, 1.0], [0.0, 1.0])
    m = fit_forest(t, n_trees=1, seed=0)
    assert (m.oob_missing == m.bootstrap_masks[0]).all()


def test_predict_is_member_mean(mixed_model, mixed_split):
    _, _, test = mixed_split
    members = per_member_predictions(mixed_model, test)
    assert members.shape == (mixed_model.n_trees, len(test))
    np.testing.assert_allclose(predict(mixed_model, test), members.mean(axis=0), rtol=1e-12)


def test_single_tree_predict_equals_member():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(30, 2))
    m = fit_forest(numeric(X, rng.normal(size=30)), n_trees=1, seed=0)
    np.testing.assert_array_equal(m.predict(X), m.per_member_predictions(X)[0])


def test_schema_mismatch(mixed_model):
    with pytest.raises(SchemaMismatch):
        mixed_model.predict(np.zeros((2, 3)))


def test_empty_training():
    with pytest.raises(EmptyTraining):
        fit_forest(numeric(np.zeros((0, 1)), np.zeros(0)))


def test_json_round_trip(tmp_path, mixed_model, mixed_split):
    _, _, test = mixed_split
    mixed_model.save(tmp_path / "m.json")
    back = ForestModel.load(tmp_path / "m.json")
    np.testing.assert_array_equal(back.predict(test), mixed_model.predict(test))
    np.testing.assert_array_equal(back.bootstrap_masks, mixed_model.bootstrap_masks)
    np.testing.assert_array_equal(back.oob_missing, mixed_model.oob_missing)


def test_version_is_checked(mixed_model):
    doc = mixed_model.to_dict()
    doc["version"] = 99
    with pytest.raises(ValueError, match="version"):
        ForestModel.from_dict(doc)


def test_contract(mixed_model):
    assert isinstance(mixed_model, RegressorContract)
    assert isinstance(PredictionTable(np.zeros((1, 2)), [1.0]), RegressorContract)


def test_prediction_table_records_missing():
    pt = PredictionTable([[1.0, 2.0], [3.0, 4.0]], [10.0, 20.0])
    out = pt.predict([[3.0, 4.0], [5.0, 6.0]])
    assert out[0] == 20.0 and np.isnan(out[1])
    assert list(pt.missing) == [(5.0, 6.0)]


# split search against exhaustive enumeration -------------------------------------------

@pytest.mark.parametrize("backend", BACKENDS)
@settings(max_examples=150, deadline=None)
@given(data=st.data())
def test_best_split_matches_enumeration(backend, data):
    n = data.draw(st.integers(2, 12))
    d = data.draw(st.integers(1, 3))
    min_leaf = data.draw(st.integers(1, 3))
    X = np.array(data.draw(st.lists(st.lists(st.integers(0, 5), min_size=d, max_size=d),
                                    min_size=n, max_size=n)), dtype=float)
    y = np.array(data.draw(st.lists(st.integers(-5, 5), min_size=n, max_size=n)), dtype=float)
    f, thr, score = kernels.get(backend).best_split(X, y, np.arange(n), np.arange(d), d, min_leaf)
    oracle = best_split_enumeration([X[:, j].tolist() for j in range(d)], y.tolist(), min_leaf)
    if oracle is None:
        assert f == -1
        return
    assert f >= 0
    left = y[X[:, f] <= thr]
    right = y[X[:, f] > thr]
    cost = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
    assert cost == pytest.approx(oracle[0], abs=1e-9)
    # the chosen threshold is a midpoint of two distinct adjacent values
    vals = np.unique(X[:, f])
    assert any(thr == (a + b) / 2 for a, b in zip(vals, vals[1:]))
