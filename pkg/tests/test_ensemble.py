import itertools

import numpy as np
import pytest

from helpers import random_dataset
from lcbench.classifiers import BASE_KINDS
from lcbench.ensemble import (
    BAGGING_KINDS, STACKING_KINDS, BaggingModel, accuracy_weights, bag_predict, dumps_ensemble, ensemble_from_dict,
    error_correlation, mean_off_diagonal, train_bases, train_bagging, train_ensemble, train_stacking,
)

ALL_VOTES = np.array(list(itertools.product((0, 1), repeat=6)))


def test_or_and_rules_on_every_vote_pattern():
    assert np.array_equal(bag_predict("max", ALL_VOTES), ALL_VOTES.any(axis=1).astype(int))
    assert np.array_equal(bag_predict("min", ALL_VOTES), ALL_VOTES.all(axis=1).astype(int))


def test_majority_with_coin_on_ties():
    out = bag_predict("mean", ALL_VOTES, rng=np.random.default_rng(0))
    s = ALL_VOTES.sum(axis=1)
    assert np.all(out[s > 3] == 1) and np.all(out[s < 3] == 0)
    ties = out[s == 3]
    assert 0 < ties.sum() < len(ties)  # 20 fair coins
    with pytest.raises(ValueError):
        bag_predict("mean", [1, 1, 1, 0, 0, 0])


def test_weighted_vote_strictly_above_half():
    w = np.full(6, 1 / 6)
    out = bag_predict("mean*", ALL_VOTES, w)
    assert np.array_equal(out, (ALL_VOTES.sum(axis=1) > 3).astype(int))
    # one dominant voter decides alone
    w = np.array([0.6, 0.08, 0.08, 0.08, 0.08, 0.08])
    assert np.array_equal(bag_predict("mean*", ALL_VOTES, w), ALL_VOTES[:, 0])
    # exactly half is not a majority
    assert bag_predict("mean*", [1, 1, 1, 0, 0, 0], np.full(6, 1 / 6)) == 0


def test_unknown_rule():
    with pytest.raises(ValueError):
        bag_predict("median", ALL_VOTES)


def test_accuracy_weights():
    w = accuracy_weights([0.1, 0.2, 0.3, 0.0, 0.5, 1.0])
    acc = np.array([0.9, 0.8, 0.7, 1.0, 0.5, 0.0])
    np.testing.assert_allclose(w, acc / acc.sum())
    np.testing.assert_allclose(accuracy_weights([1.0] * 6), np.full(6, 1 / 6))


def test_min_mean_max_ordering_on_random_votes():
    rng = np.random.default_rng(1)
    for _ in range(100):
        votes = rng.integers(0, 2, size=(50, 6))
        lo = bag_predict("min", votes)
        mid = bag_predict("mean", votes, rng=rng)
        hi = bag_predict("max", votes)
        assert np.all(lo <= mid) and np.all(mid <= hi)


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(2)
    X, y = random_dataset(300, 3, rng)
    return X, y, train_bases(X, y)


@pytest.mark.parametrize("kind", BAGGING_KINDS + STACKING_KINDS)
def test_ensembles_round_trip(fitted, kind):
    X, y, bases = fitted
    m = train_ensemble(kind, X, y, bases, seed=3)
    back = ensemble_from_dict(m.to_dict())
    np.testing.assert_array_equal(back.predict(X), m.predict(X))
    assert dumps_ensemble(back) == dumps_ensemble(m)


def test_bagging_needs_six_bases(fitted):
    _, _, bases = fitted
    with pytest.raises(ValueError):
        BaggingModel("max", bases[:5])


def test_weighted_bagging_weights_from_training_error(fitted):
    X, y, bases = fitted
    m = train_bagging("mean*", X, y, bases)
    errs = [np.mean(b.predict(X) != y) for b in bases]
    np.testing.assert_allclose(m.weights, accuracy_weights(errs))


def test_stacking_sees_features_and_base_votes(fitted):
    X, y, bases = fitted
    m = train_stacking("LR", X, y, bases)
    aug = m.augment(X)
    assert aug.shape == (len(X), 3 + 6)
    np.testing.assert_array_equal(aug[:, 3:], np.column_stack([b.predict(X) for b in bases]))
    np.testing.assert_array_equal(m.predict(X), m.meta.predict(aug))
    assert m.kind == "stack-LR" and train_stacking("stack-LR", X, y, bases).kind == "stack-LR"


def test_stacking_on_a_perfect_base_copies_it():
    # feature 0 decides the label exactly, so the tree base is perfect and the meta tree follows it
    rng = np.random.default_rng(4)
    X = rng.normal(size=(200, 2))
    y = (X[:, 0] > 0.1).astype(int)
    m = train_stacking("DT", X, y)
    assert np.array_equal(m.predict(X), y)


def test_error_correlation_matches_corrcoef():
    rng = np.random.default_rng(5)
    y = rng.integers(0, 2, 200)
    preds = {k: np.where(rng.random(200) < 0.2, 1 - y, y) for k in BASE_KINDS}
    names, C = error_correlation(preds, y)
    E = np.column_stack([(preds[k] != y).astype(float) for k in names])
    np.testing.assert_allclose(C, np.corrcoef(E.T), atol=1e-12)
    off = C[~np.eye(6, dtype=bool)]
    assert mean_off_diagonal(C) == pytest.approx(off.mean())


def test_error_correlation_degenerate_models():
    y = np.array([0, 1, 0, 1])
    names, C = error_correlation({"a": y, "b": 1 - y, "c": np.array([1, 1, 0, 0])}, y)
    assert np.isnan(C[0, 2]) and np.isnan(C[1, 2])  # a and b never vary in their errors
    assert np.all(np.diag(C) == 1.0)
    names, C = error_correlation({"x": np.array([1, 0, 0, 1]), "z": np.array([1, 0, 0, 1])}, y)
    assert C[0, 1] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        error_correlation({"a": [1]}, [1])
