"""Class-imbalance handling: weighted sampling, SMOTE and undersampling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class LabeledSet:
    rows: np.ndarray            # (N, D)
    labels: np.ndarray          # (N,)
    synthetic: np.ndarray       # (N,) bool

    @classmethod
    def real(cls, rows, labels) -> "LabeledSet":
        rows = np.asarray(rows, dtype=np.float64)
        return cls(rows, np.asarray(labels), np.zeros(len(rows), dtype=bool))

    def __len__(self) -> int:
        return len(self.rows)

    def counts(self) -> tuple[int, int]:
        pos = int(np.sum(self.labels == 1))
        return pos, len(self.labels) - pos


def weighted_sampler(labels, seed: int, n: int | None = None) -> np.ndarray:
    """Indices drawn with replacement, each class equally likely overall."""
    labels = np.asarray(labels)
    classes, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if len(labels) == 0 or np.any(counts == 0):
        raise ValueError("weighted sampler needs at least one example per class")
    p = 1.0 / counts[inverse]
    p /= p.sum()
    rng = np.random.default_rng(seed)
    return rng.choice(len(labels), size=len(labels) if n is None else n, p=p)


def _knn(rows: np.ndarray, k: int) -> np.ndarray:
    sq = np.einsum("ij,ij->i", rows, rows)
    d2 = sq[:, None] + sq[None, :] - 2.0 * rows @ rows.T
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote(minority_rows, target_count: int, k_neighbors: int = 5, seed: int = 0,
          u: np.ndarray | None = None, return_parents: bool = False):
    """``target_count`` synthetic rows on segments between minority neighbours.

    ``u`` optionally fixes the interpolation fractions (testing hook). With
    ``return_parents`` the result is ``(rows, base_index, neighbour_index)``.
    """
    x = np.asarray(minority_rows, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("SMOTE needs at least 2 minority rows")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    if k_neighbors > len(x) - 1:
        log.warning("k_neighbors=%d clamped to %d", k_neighbors, len(x) - 1)
        k_neighbors = len(x) - 1
    if target_count <= 0:
        empty = np.zeros((0, x.shape[1]))
        return (empty, np.zeros(0, int), np.zeros(0, int)) if return_parents else empty
    nn = _knn(x, k_neighbors)
    rng = np.random.default_rng(seed)
    base = rng.integers(0, len(x), size=target_count)
    pick = nn[base, rng.integers(0, k_neighbors, size=target_count)]
    if u is None:
        u = rng.random(target_count)
    u = np.broadcast_to(np.asarray(u, dtype=np.float64), (target_count,))
    rows = x[base] + u[:, None] * (x[pick] - x[base])
    return (rows, base, pick) if return_parents else rows


def smote_balance(data: LabeledSet, ratio: float, seed: int, k_neighbors: int = 5) -> LabeledSet:
    """Top positives up to floor(ratio * negatives) with SMOTE rows."""
    pos, neg = data.counts()
    target = math.floor(ratio * neg)
    if target <= pos:
        return data
    new = smote(data.rows[data.labels == 1], target - pos, k_neighbors, seed)
    return LabeledSet(np.vstack([data.rows, new]),
                      np.concatenate([data.labels, np.ones(len(new), dtype=data.labels.dtype)]),
                      np.concatenate([data.synthetic, np.ones(len(new), dtype=bool)]))


def undersample_keep(pos: int, neg: int, ratio: float) -> int:
    if ratio <= 0:
        raise ValueError("ratio must be > 0")
    return min(neg, math.floor(pos / ratio))


def undersample_indices(labels, ratio: float, seed: int) -> np.ndarray:
    """Sorted row indices kept by ``undersample`` (all positives plus a random
    floor(positives / ratio) negatives)."""
    labels = np.asarray(labels)
    pos_idx = np.flatnonzero(labels == 1)
    neg_idx = np.flatnonzero(labels != 1)
    keep = undersample_keep(len(pos_idx), len(neg_idx), ratio)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(neg_idx, size=keep, replace=False)
    return np.sort(np.concatenate([pos_idx, chosen]))


def undersample(data: LabeledSet, ratio: float, seed: int) -> LabeledSet:
    idx = undersample_indices(data.labels, ratio, seed)
    return LabeledSet(data.rows[idx], data.labels[idx], data.synthetic[idx])
