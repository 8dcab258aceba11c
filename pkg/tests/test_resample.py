import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from keydyn.resample import (LabeledSet, smote, smote_balance, undersample,
                             undersample_indices, undersample_keep, weighted_sampler)


def test_weighted_sampler_balances():
    labels = np.array([0] * 90 + [1] * 10)
    idx = weighted_sampler(labels, seed=3, n=10_000)
    share = np.mean(labels[idx] == 1)
    assert abs(share - 0.5) < 0.02
    assert np.array_equal(idx, weighted_sampler(labels, seed=3, n=10_000))
    bal = weighted_sampler(np.array([0, 1] * 50), seed=0, n=20_000)
    counts = np.bincount(bal, minlength=100)
    assert counts.min() > 100 and counts.max() < 320


def test_weighted_sampler_empty():
    with pytest.raises(ValueError):
        weighted_sampler(np.array([], dtype=int), seed=0)


def test_smote_midpoint():
    out = smote(np.array([[0.0, 0.0], [2.0, 2.0]]), 3, k_neighbors=1, seed=0, u=0.5)
    assert np.allclose(out, 1.0)


def test_smote_errors_and_clamp(caplog):
    with pytest.raises(ValueError):
        smote(np.zeros((1, 3)), 5)
    with pytest.raises(ValueError):
        smote(np.zeros((4, 3)), 5, k_neighbors=0)
    with caplog.at_level(logging.WARNING):
        out = smote(np.eye(3), 4, k_neighbors=10)
    assert "clamped" in caplog.text and out.shape == (4, 3)
    assert smote(np.eye(3), 0).shape == (0, 3)


def test_smote_convexity_and_determinism(rng):
    x = rng.normal(size=(40, 12))
    out, base, pick = smote(x, 10_000, k_neighbors=5, seed=9, return_parents=True)
    assert out.shape == (10_000, 12)
    assert out.tobytes() == smote(x, 10_000, k_neighbors=5, seed=9).tobytes()
    lo = np.minimum(x[base], x[pick])
    hi = np.maximum(x[base], x[pick])
    assert np.all((out >= lo) & (out <= hi))
    assert np.all(base != pick)


def test_smote_parents_are_k_nearest(rng):
    x = rng.normal(size=(30, 5))
    _, base, pick = smote(x, 300, k_neighbors=4, seed=1, return_parents=True)
    d = np.linalg.norm(x[:, None] - x[None], axis=2)
    np.fill_diagonal(d, np.inf)
    nearest = np.argsort(d, axis=1)[:, :4]
    assert all(p in nearest[b] for b, p in zip(base, pick))


def test_smote_neighbours_are_nearest():
    # two well separated clusters: synthetic points never bridge them when k=2
    a = np.array([[0.0, 0], [0.1, 0], [0, 0.1]])
    x = np.vstack([a, a + 100])
    out = smote(x, 500, k_neighbors=2, seed=1)
    near_a = np.all(out < 1, axis=1)
    near_b = np.all(out > 99, axis=1)
    assert np.all(near_a | near_b)


def test_smote_balance_counts():
    pos, neg = 310, 12797
    assert math.floor(0.1 * neg) == 1279
    rows = np.random.default_rng(0).normal(size=(pos + neg, 3))
    data = LabeledSet.real(rows, np.array([1] * pos + [0] * neg))
    out = smote_balance(data, 0.1, seed=0)
    assert out.counts() == (1279, neg)
    assert out.synthetic.sum() == 1279 - pos
    assert np.all(out.labels[out.synthetic] == 1)
    assert np.array_equal(out.rows[:len(data)], data.rows)
    same = smote_balance(data, 0.01, seed=0)
    assert same is data


@pytest.mark.parametrize("pos,neg,ratio,kept", [(100, 10000, 1.0, 100), (100, 10000, 0.1, 1000),
                                                (100, 500, 0.1, 500)])
def test_undersample_counts(pos, neg, ratio, kept):
    assert undersample_keep(pos, neg, ratio) == kept
    labels = np.array([1] * pos + [0] * neg)
    idx = undersample_indices(labels, ratio, seed=1)
    assert np.sum(labels[idx] == 0) == kept and np.sum(labels[idx] == 1) == pos


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 200), st.floats(0.05, 5.0), st.integers(0, 99))
def test_undersample_preserves_positives(pos, neg, ratio, seed):
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.array([1] * pos + [0] * neg))
    data = LabeledSet.real(rng.normal(size=(pos + neg, 5)), labels)
    out = undersample(data, ratio, seed)
    assert out.rows[out.labels == 1].tobytes() == data.rows[data.labels == 1].tobytes()
    assert out.counts()[1] == undersample_keep(pos, neg, ratio)
    again = undersample(data, ratio, seed)
    assert out.rows.tobytes() == again.rows.tobytes()


def test_undersample_bad_ratio():
    with pytest.raises(ValueError):
        undersample_keep(5, 5, 0)
