import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from keydyn import keys, synth
from keydyn.features import (HOLD_X, TIMING_COLS, DigraphVector, NormStats, WindowSet,
                             apply_norm, digraph_matrix, digraphs, export_csv, fit_norm,
                             fold_data, fuse, import_csv, rate_features, session_windows,
                             window_starts, windows)
from keydyn.ingest import FOLDS, KeyPress, SessionRecord, parse_session


def kp(name, d, u):
    return KeyPress(keys.key_id(name), d, u)


def test_digraph_example():
    v = digraphs([kp("A", 100, 180), kp("S", 210, 290)])
    assert v == [DigraphVector(keys.key_id("A"), keys.key_id("S"), 80, 80, 190, 110)]


def test_digraph_degenerate():
    assert digraphs([kp("A", 1, 2)]) == []
    assert digraphs(SessionRecord("u", 0)) == []
    assert digraph_matrix([]).shape == (0, 6)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 300), st.integers(0, 200)), min_size=1, max_size=60))
def test_digraph_length_and_gaps(items):
    t, presses = 0, []
    for gap, hold in items:
        t += gap
        presses.append(kp("A", t, t + hold))
    v = digraphs(presses)
    assert len(v) == len(presses) - 1
    downs = [p.down_ms for p in presses]
    assert [d.down_down for d in v] == list(np.diff(downs))
    assert all(d.down_down >= 0 and d.hold_x >= 0 and d.hold_y >= 0 for d in v)
    m = digraph_matrix(presses)
    assert np.array_equal(m, np.array([d.as_tuple() for d in v]).reshape(-1, 6))


def test_digraph_count_on_random_sessions(rng):
    profiles = synth.make_profiles(4, seed=0)
    for i in range(1000):
        p = profiles[i % 4]
        n = int(rng.integers(2, 40))
        s = parse_session(synth.render_session(p, i, n), p.user_id, 0)
        assert len(digraphs(s)) == len(s.presses) - 1


@pytest.mark.parametrize("n,L,stride,count", [(250, 250, 250, 1), (600, 250, 250, 2),
                                              (100, 250, 250, 0), (10, 3, 2, 4)])
def test_window_count(n, L, stride, count):
    assert len(windows(np.zeros((n, 6)), L, stride)) == count


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 300), st.integers(1, 50), st.integers(1, 50))
def test_window_formula(n, L, stride):
    w = window_starts(n, L, stride)
    assert len(w) == ((n - L) // stride + 1 if n >= L else 0)
    assert all(s + L <= n for s in w)


def test_windows_are_exact_subrows(rng):
    m = rng.normal(size=(57, 6))
    for s, w in zip(window_starts(57, 10, 7), windows(m, 10, 7)):
        assert np.array_equal(w, m[s:s + 10])
    with pytest.raises(ValueError):
        window_starts(10, 0)


def test_norm_closed_form():
    w = np.zeros((3, 6))
    w[:, TIMING_COLS] = np.array([1.0, 2.0, 3.0])[:, None]
    w[:, 0] = [0, 52.5, 105]
    out = apply_norm(w, fit_norm([w]))
    assert np.allclose(out[:, HOLD_X], [-1.224744871391589, 0, 1.224744871391589], atol=1e-12)
    assert np.allclose(out[:, 0], [0, 0.5, 1.0])


def test_norm_constant_column_clamped(caplog):
    w = np.ones((4, 6)) * 7.0
    w[:, 3] = [1, 2, 3, 4]
    with caplog.at_level(logging.WARNING):
        st_ = fit_norm([w])
    assert st_.clamped == (0, 2, 3) and "clamped" in caplog.text
    out = apply_norm(w, st_)
    assert np.allclose(out[:, 2], 0.0)


def test_norm_moments_on_synthetic():
    c = synth.generate(synth.make_profiles(5, seed=2), presses_per_session=300)
    d = fold_data(c, FOLDS[2], 40, 20)
    x = d.train.timing.reshape(-1, 6)[:, TIMING_COLS]
    assert np.all(np.abs(x.mean(axis=0)) < 1e-6)
    assert np.all(np.abs(x.var(axis=0) - 1) < 1e-4)
    assert d.train.timing[..., :2].min() >= 0 and d.train.timing[..., :2].max() <= 1
    # test windows use training statistics, not their own
    assert not np.allclose(d.test.timing.reshape(-1, 6)[:, TIMING_COLS].mean(axis=0), 0, atol=1e-6)


def test_norm_is_affine_and_serializable(rng):
    w = rng.normal(size=(5, 8, 6)) * 30 + 100
    s = fit_norm(list(w))
    a, b = rng.normal(size=(8, 6)), rng.normal(size=(8, 6))
    lhs = apply_norm(0.3 * a + 0.7 * b, s)
    rhs = 0.3 * apply_norm(a, s) + 0.7 * apply_norm(b, s)
    assert np.allclose(lhs, rhs)
    s2 = NormStats.from_dict(s.to_dict())
    assert np.array_equal(s2.mean, s.mean) and np.array_equal(s2.std, s.std)


def test_rate_examples():
    assert np.array_equal(rate_features([]), np.zeros(7))
    presses = [kp("Back", i, i + 1) for i in range(5)] + [kp("A", i, i + 1) for i in range(95)]
    r = rate_features(presses)
    assert r[0] == pytest.approx(0.05) and np.all(r[1:] == 0)
    assert np.all(rate_features([kp("A", 0, 1)] * 10) == 0)
    r = rate_features([kp("LShiftKey", i, i + 1) for i in range(4)])
    assert r[1] == 1.0 and r.sum() == 1.0
    # arrows combine left and right
    r = rate_features([kp("Left", 0, 1), kp("Right", 2, 3), kp("A", 4, 5), kp("A", 6, 7)])
    assert r[6] == 0.5


@settings(max_examples=80, deadline=None)
@given(st.lists(st.sampled_from(keys.KEY_NAMES), min_size=1, max_size=50), st.integers(0, 10**6))
def test_rates_bounded_and_translation_invariant(names, shift):
    presses = [kp(n, 10 * i, 10 * i + 5) for i, n in enumerate(names)]
    moved = [KeyPress(p.key_id, p.down_ms + shift, p.up_ms + shift) for p in presses]
    r = rate_features(presses)
    assert np.all((r >= 0) & (r <= 1))
    assert np.array_equal(r, rate_features(moved))


def test_fuse_checks():
    t = np.zeros((5, 6))
    w = fuse(t, np.zeros(7), "u", span=(0, 6), rate_span=(0, 6))
    assert w.length == 5 and np.all(w.rates == 0)
    assert fuse(t, None, "u").rates is None
    with pytest.raises(ValueError, match="span"):
        fuse(t, np.zeros(7), "u", span=(0, 6), rate_span=(1, 7))
    with pytest.raises(ValueError):
        fuse(t, np.zeros(6), "u")


def test_session_windows_use_own_span():
    presses = tuple(kp("Back" if i % 4 == 0 else "A", 10 * i, 10 * i + 3) for i in range(21))
    s = SessionRecord("u", 0, "", presses)
    ws = session_windows(s, 5, 5)
    assert len(ws) == 4
    for w in ws:
        span = presses[w.start:w.start + 6]
        assert np.array_equal(w.rates, rate_features(span))
    assert all(w.rates is None for w in session_windows(s, 5, 5, fusion=False))


def test_csv_round_trip(tmp_path, rng):
    ws = WindowSet(rng.normal(size=(4, 3, 6)), rng.random((4, 7)),
                   np.array(["a", "b", "a", "c"], dtype=object), np.array([0, 1, 2, 0]),
                   np.array([False, True, False, False]))
    export_csv(tmp_path / "f.csv", ws, "s01-train-s2-test", "train")
    back, folds, roles = import_csv(tmp_path / "f.csv")
    assert np.array_equal(back.timing, ws.timing) and np.array_equal(back.rates, ws.rates)
    assert list(back.users) == list(ws.users) and list(back.synthetic) == list(ws.synthetic)
    assert folds == ["s01-train-s2-test"] * 4 and roles == ["train"] * 4
    flat = ws.flat()
    assert flat.shape == (4, 3 * 6 + 7)
    assert np.array_equal(WindowSet.from_flat(flat, 3, True, ws.users, ws.sessions).timing, ws.timing)
