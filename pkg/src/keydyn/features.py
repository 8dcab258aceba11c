"""Digraph timing vectors, key-rate features, normalization and windowing."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import keys
from .ingest import Corpus, Fold, KeyPress, SessionRecord, build_folds

log = logging.getLogger(__name__)

# timing matrix column layout
ID_X, ID_Y, HOLD_X, HOLD_Y, DOWN_UP, DOWN_DOWN = range(6)
TIMING_COLS = (HOLD_X, HOLD_Y, DOWN_UP, DOWN_DOWN)
N_TIMING = 6
N_RATES = len(keys.RATE_NAMES)

_RATE_IDS = keys.rate_key_ids()


@dataclass(frozen=True)
class DigraphVector:
    id_x: int
    id_y: int
    hold_x: int
    hold_y: int
    down_up: int
    down_down: int

    def as_tuple(self) -> tuple[int, ...]:
        return (self.id_x, self.id_y, self.hold_x, self.hold_y, self.down_up, self.down_down)


def digraphs(session: SessionRecord | Sequence[KeyPress]) -> list[DigraphVector]:
    presses = session.presses if isinstance(session, SessionRecord) else session
    out = []
    for x, y in zip(presses, presses[1:]):
        out.append(DigraphVector(x.key_id, y.key_id, x.up_ms - x.down_ms,
                                 y.up_ms - y.down_ms, y.up_ms - x.down_ms,
                                 y.down_ms - x.down_ms))
    return out


def digraph_matrix(presses: Sequence[KeyPress]) -> np.ndarray:
    """Vectorized ``digraphs`` as an (n-1, 6) float array."""
    if len(presses) < 2:
        return np.zeros((0, N_TIMING))
    a = np.array([(p.key_id, p.down_ms, p.up_ms) for p in presses], dtype=np.float64)
    k, d, u = a[:, 0], a[:, 1], a[:, 2]
    hold = u - d
    return np.column_stack([k[:-1], k[1:], hold[:-1], hold[1:], u[1:] - d[:-1], d[1:] - d[:-1]])


def window_starts(n: int, length: int, stride: int | None = None) -> list[int]:
    stride = length if stride is None else stride
    if length < 1 or stride < 1:
        raise ValueError("length and stride must be >= 1")
    if n < length:
        return []
    return list(range(0, (n - length) // stride * stride + 1, stride))


def windows(vectors, length: int, stride: int | None = None) -> list[np.ndarray]:
    """Non-padded sliding windows of ``length`` rows; trailing remainder dropped."""
    m = np.asarray([v.as_tuple() if isinstance(v, DigraphVector) else v for v in vectors],
                   dtype=np.float64).reshape(-1, N_TIMING)
    return [m[s:s + length] for s in window_starts(len(m), length, stride)]


def rate_features(presses: Sequence[KeyPress]) -> np.ndarray:
    """Share of presses in the span that hit each special-key group."""
    if not len(presses):
        return np.zeros(N_RATES)
    ids = [p.key_id for p in presses]
    n = len(ids)
    return np.array([sum(k in group for k in ids) / n for group in _RATE_IDS])


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    clamped: tuple[int, ...] = ()
    id_scale: float = float(keys.KEY_TABLE_SIZE)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "clamped": list(self.clamped), "id_scale": self.id_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64),
                   tuple(d["clamped"]), float(d["id_scale"]))


def fit_norm(train_windows) -> NormStats:
    """Population mean/std of the four timing columns over training windows."""
    x = np.concatenate([np.asarray(w, dtype=np.float64).reshape(-1, N_TIMING)
                        for w in train_windows])
    cols = x[:, TIMING_COLS]
    mean = cols.mean(axis=0)
    std = cols.std(axis=0)
    clamped = tuple(int(i) for i in np.flatnonzero(std == 0))
    if clamped:
        log.warning("zero-variance timing columns %s; std clamped to 1", clamped)
        std = np.where(std == 0, 1.0, std)
    return NormStats(mean, std, clamped)


def apply_norm(window: np.ndarray, stats: NormStats) -> np.ndarray:
    w = np.array(window, dtype=np.float64)
    w[..., TIMING_COLS] = (w[..., TIMING_COLS] - stats.mean) / stats.std
    w[..., [ID_X, ID_Y]] /= stats.id_scale
    return w


@dataclass
class FeatureWindow:
    timing: np.ndarray
    rates: np.ndarray | None
    label: str
    session_index: int = -1
    start: int = 0

    @property
    def length(self) -> int:
        return len(self.timing)


def fuse(timing: np.ndarray, rates: np.ndarray | None, label: str, *,
         span: tuple[int, int] | None = None, rate_span: tuple[int, int] | None = None,
         session_index: int = -1) -> FeatureWindow:
    """Pair a timing block with its rate block (``rates=None`` for timing-only)."""
    if rates is not None:
        rates = np.asarray(rates, dtype=np.float64)
        if rates.shape != (N_RATES,):
            raise ValueError(f"expected {N_RATES} rates, got shape {rates.shape}")
        if span is not None and rate_span is not None and span != rate_span:
            raise ValueError(f"timing span {span} != rate span {rate_span}")
    start = span[0] if span else 0
    return FeatureWindow(np.asarray(timing, dtype=np.float64), rates, label,
                         session_index, start)


def session_windows(session: SessionRecord, length: int, stride: int | None = None,
                    fusion: bool = True) -> list[FeatureWindow]:
    """Raw (unnormalized) windows; rates use the window's own L+1 presses."""
    m = digraph_matrix(session.presses)
    out = []
    for s in window_starts(len(m), length, stride):
        span = (s, s + length + 1)
        rates = rate_features(session.presses[span[0]:span[1]]) if fusion else None
        out.append(fuse(m[s:s + length], rates, session.user_id, span=span,
                        rate_span=span, session_index=session.session_index))
    return out


@dataclass
class WindowSet:
    """Stacked windows ready for the network."""

    timing: np.ndarray          # (N, L, 6)
    rates: np.ndarray | None    # (N, 7)
    users: np.ndarray           # (N,) user ids (str)
    sessions: np.ndarray        # (N,)
    synthetic: np.ndarray = field(default=None)  # (N,) bool

    def __post_init__(self):
        if self.synthetic is None:
            self.synthetic = np.zeros(len(self.timing), dtype=bool)

    def __len__(self) -> int:
        return len(self.timing)

    def subset(self, idx) -> "WindowSet":
        return WindowSet(self.timing[idx], None if self.rates is None else self.rates[idx],
                         self.users[idx], self.sessions[idx], self.synthetic[idx])

    def flat(self) -> np.ndarray:
        x = self.timing.reshape(len(self), -1)
        return x if self.rates is None else np.hstack([x, self.rates])

    @classmethod
    def from_flat(cls, rows: np.ndarray, length: int, fusion: bool, users, sessions,
                  synthetic=None) -> "WindowSet":
        rows = np.asarray(rows, dtype=np.float64)
        t = rows[:, :length * N_TIMING].reshape(-1, length, N_TIMING)
        r = rows[:, length * N_TIMING:] if fusion else None
        return cls(t, r, np.asarray(users), np.asarray(sessions),
                   None if synthetic is None else np.asarray(synthetic, dtype=bool))

    @classmethod
    def concat(cls, sets: Sequence["WindowSet"]) -> "WindowSet":
        rates = None if sets[0].rates is None else np.concatenate([s.rates for s in sets])
        return cls(np.concatenate([s.timing for s in sets]), rates,
                   np.concatenate([s.users for s in sets]),
                   np.concatenate([s.sessions for s in sets]),
                   np.concatenate([s.synthetic for s in sets]))


def stack(wins: Sequence[FeatureWindow], length: int, fusion: bool) -> WindowSet:
    if not wins:
        return WindowSet(np.zeros((0, length, N_TIMING)),
                         np.zeros((0, N_RATES)) if fusion else None,
                         np.array([], dtype=object), np.array([], dtype=int))
    return WindowSet(np.stack([w.timing for w in wins]),
                     np.stack([w.rates for w in wins]) if fusion else None,
                     np.array([w.label for w in wins], dtype=object),
                     np.array([w.session_index for w in wins]))


@dataclass
class FoldData:
    fold: Fold
    train: WindowSet
    test: WindowSet
    norm: NormStats
    users: list[str]
    length: int
    fusion: bool


def fold_data(corpus: Corpus, fold: Fold, length: int, stride: int | None = None,
              fusion: bool = True, norm: NormStats | None = None) -> FoldData:
    """Normalized train/test windows for one fold.

    Stats are fitted on the training windows unless ``norm`` is given (a
    backbone's stored statistics when fine-tuning).
    """
    folds, _ = build_folds(corpus)
    _, train_s, test_s = next(f for f in folds if f[0] == fold)
    train_w = [w for s in train_s for w in session_windows(s, length, stride, fusion)]
    test_w = [w for s in test_s for w in session_windows(s, length, stride, fusion)]
    if not train_w:
        raise ValueError(f"no training windows of length {length}")
    norm = norm or fit_norm([w.timing for w in train_w])
    train, test = stack(train_w, length, fusion), stack(test_w, length, fusion)
    train.timing = apply_norm(train.timing, norm)
    test.timing = apply_norm(test.timing, norm)
    users = sorted({s.user_id for s in train_s})
    return FoldData(fold, train, test, norm, users, length, fusion)


# -- feature-matrix export -----------------------------------------------------

def export_csv(path: str | Path, ws: WindowSet, fold_name: str = "", role: str = "") -> None:
    """One row per window: t{i}_{c} timing values, rate_* columns, label, tags."""
    length = ws.timing.shape[1]
    header = [f"t{i}_{c}" for i in range(length) for c in range(N_TIMING)]
    if ws.rates is not None:
        header += [f"rate_{n}" for n in keys.RATE_NAMES]
    header += ["label", "session", "synthetic", "fold", "role"]
    flat = ws.flat()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row, u, s, syn in zip(flat, ws.users, ws.sessions, ws.synthetic):
            w.writerow([repr(float(v)) for v in row] + [u, int(s), int(syn), fold_name, role])


def import_csv(path: str | Path) -> tuple[WindowSet, list[str], list[str]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    n_t = sum(h.startswith("t") and "_" in h for h in header)
    length = n_t // N_TIMING
    fusion = any(h.startswith("rate_") for h in header)
    n_num = n_t + (N_RATES if fusion else 0)
    data = np.array([[float(v) for v in row[:n_num]] for row in rows]).reshape(len(rows), n_num)
    ws = WindowSet.from_flat(data, length, fusion,
                             np.array([row[n_num] for row in rows], dtype=object),
                             [int(row[n_num + 1]) for row in rows],
                             [bool(int(row[n_num + 2])) for row in rows])
    return ws, [row[n_num + 3] for row in rows], [row[n_num + 4] for row in rows]
