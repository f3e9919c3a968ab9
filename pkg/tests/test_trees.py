import json

import numpy as np
import pytest

from autofuse.exceptions import SingleClassError
from autofuse.trees import GradientBoosting, RandomForest


def test_single_tree_memorizes_distinct_points(rng):
    X = rng.normal(size=(50, 6))
    y = rng.integers(0, 4, size=50)
    model = RandomForest(n_trees=1, max_depth=None, min_leaf=1, seed=0).fit(X, y)
    assert (model.predict(X) == y).mean() == 1.0


def test_forest_probabilities_on_simplex(rng):
    X = rng.normal(size=(60, 5))
    y = rng.integers(0, 3, size=60)
    P = RandomForest(n_trees=10, max_depth=4, seed=1).fit(X, y).predict_proba(X)
    assert (P >= 0).all()
    assert np.abs(P.sum(axis=1) - 1).max() < 1e-12


def test_forest_deterministic_given_seed(rng):
    X = rng.normal(size=(40, 5))
    y = rng.integers(0, 2, size=40)
    a = RandomForest(n_trees=7, seed=3).fit(X, y).predict_proba(X)
    b = RandomForest(n_trees=7, seed=3).fit(X, y).predict_proba(X)
    assert np.array_equal(a, b)


def test_forest_learns_simple_rule(rng):
    X = rng.normal(size=(200, 4))
    y = (X[:, 2] > 0.3).astype(int)
    X_test = rng.normal(size=(100, 4))
    y_test = (X_test[:, 2] > 0.3).astype(int)
    model = RandomForest(n_trees=20, max_depth=4, seed=0).fit(X, y)
    assert (model.predict(X_test) == y_test).mean() >= 0.95


def test_bootstrap_flag(rng):
    X = rng.normal(size=(40, 3))
    y = rng.integers(0, 2, size=40)
    a = RandomForest(n_trees=5, bootstrap=True, seed=0).fit(X, y).predict_proba(X)
    b = RandomForest(n_trees=5, bootstrap=False, seed=0).fit(X, y).predict_proba(X)
    assert not np.array_equal(a, b)


def test_single_class_error(rng):
    X = rng.normal(size=(10, 2))
    with pytest.raises(SingleClassError):
        RandomForest().fit(X, np.ones(10, dtype=int))
    with pytest.raises(SingleClassError):
        GradientBoosting().fit(X, np.ones(10, dtype=int))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_boosting_loss_non_increasing(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(80, 5))
    y = rng.integers(0, 3, size=80)
    model = GradientBoosting(n_rounds=25, learning_rate=0.3).fit(X, y)
    diffs = np.diff(model.loss_history_)
    assert (diffs <= 1e-12).all()


def test_boosting_improves_and_predicts(rng):
    X = rng.normal(size=(150, 4))
    y = ((X[:, 0] + X[:, 1]) > 0).astype(int)
    model = GradientBoosting(n_rounds=30, learning_rate=0.2).fit(X, y)
    assert model.loss_history_[-1] < model.loss_history_[0] * 0.5
    assert (model.predict(X) == y).mean() >= 0.95


def test_boosting_serialization_round_trip(rng):
    X = rng.normal(size=(40, 3))
    y = rng.integers(0, 2, size=40)
    model = GradientBoosting(n_rounds=8).fit(X, y)
    restored = GradientBoosting.from_dict(json.loads(json.dumps(model.to_dict())))
    assert np.array_equal(model.predict_proba(X), restored.predict_proba(X))


def test_forest_serialization_round_trip(rng):
    X = rng.normal(size=(40, 3))
    y = rng.integers(0, 3, size=40)
    model = RandomForest(n_trees=4, seed=2).fit(X, y)
    restored = RandomForest.from_dict(json.loads(json.dumps(model.to_dict())))
    assert np.array_equal(model.predict_proba(X), restored.predict_proba(X))


def test_argmax_tie_breaks_to_lower_class(rng):
    # two identical points with different labels give a 50/50 leaf
    X = np.zeros((2, 1))
    y = np.array([0, 1])
    model = RandomForest(n_trees=1, seed=0).fit(X, y)
    assert model.predict(X).tolist() == [0, 0]
