"""Local surrogate explanations (LIME-style) for window classifiers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .features import N_RATES, N_TIMING
from .nn import KeystrokeNet

log = logging.getLogger(__name__)

GROUPS = ("key-id", "hold", "down-up", "down-down", "rates")
_COL_GROUP = {0: "key-id", 1: "key-id", 2: "hold", 3: "hold", 4: "down-up", 5: "down-down"}


@dataclass
class Explanation:
    weights: np.ndarray
    intercept: float
    fidelity: float
    group_importance: dict[str, float] = field(default_factory=dict)
    group_mean: dict[str, float] = field(default_factory=dict)

    def ranking(self) -> list[str]:
        """Groups from most to least important (by total |weight|)."""
        return sorted(self.group_importance, key=self.group_importance.get, reverse=True)

    def coarse_importance(self) -> dict[str, float]:
        """Totals over equal-width groups: key-id, hold and difference times
        each span two columns per digraph row."""
        g = self.group_importance
        out = {"key-id": g.get("key-id", 0.0), "hold": g.get("hold", 0.0),
               "difference": g.get("down-up", 0.0) + g.get("down-down", 0.0)}
        if "rates" in g:
            out["rates"] = g["rates"]
        return out


def feature_groups(length: int, fusion: bool) -> np.ndarray:
    """Group name for every column of a flattened window."""
    cols = [_COL_GROUP[c] for _ in range(length) for c in range(N_TIMING)]
    if fusion:
        cols += ["rates"] * N_RATES
    return np.array(cols)


def model_scorer(model: KeystrokeNet, target_class: int | None = None) -> Callable:
    """Flattened-window -> probability function for ``model``.

    Binary models score the positive class; multiclass models need ``target_class``.
    """
    length = model.config.length
    fusion = model.config.fusion

    def score(rows):
        rows = np.asarray(rows)
        t = rows[:, :length * N_TIMING].reshape(-1, length, N_TIMING)
        r = rows[:, length * N_TIMING:] if fusion else None
        p = model.predict_proba(t, r)
        return p if p.ndim == 1 else p[:, target_class]

    return score


def lime_explain(predict: Callable, x, n_perturb: int = 1000, seed: int = 0, *,
                 noise: float = 0.25, mask_prob: float = 0.1, background=None,
                 scale=None, kernel_width: float | None = None, ridge: float = 1e-3,
                 groups: np.ndarray | None = None) -> Explanation:
    """Fit a proximity-weighted ridge surrogate around ``x``.

    Work happens in standardized units ``(z - x) / scale`` where ``scale`` is
    the per-feature training std (ones by default). Perturbations add
    N(0, noise^2) in those units and, with probability ``mask_prob``, replace a
    feature by its ``background`` value (training mean; zeros by default).
    Returned weights are per standardized unit.
    """
    if n_perturb < 50:
        raise ValueError("n_perturb must be >= 50")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = len(x)
    bg = np.zeros(d) if background is None else np.asarray(background, dtype=np.float64)
    sc = np.ones(d) if scale is None else np.asarray(scale, dtype=np.float64)
    sc = np.where(sc > 0, sc, 1.0)
    rng = np.random.default_rng(seed)
    U = noise * rng.standard_normal((n_perturb, d))
    mask = rng.random((n_perturb, d)) < mask_prob
    U = np.where(mask, (bg - x) / sc, U)
    U[0] = 0.0
    y = np.asarray(predict(x + U * sc), dtype=np.float64).reshape(-1)

    width = kernel_width if kernel_width is not None else 0.75 * np.sqrt(d)
    dist2 = np.sum(U ** 2, axis=1)
    pi = np.exp(-dist2 / width ** 2)
    pi /= pi.sum()

    groups = groups if groups is not None else _guess_groups(d)
    mu_y = pi @ y
    if np.allclose(y, y[0]):
        log.warning("model output constant over the neighbourhood; explanation is empty")
        w, b, fid = np.zeros(d), float(mu_y), 0.0
    else:
        mu_z = pi @ U
        Zc, yc = U - mu_z, y - mu_y
        A = (Zc * pi[:, None]).T @ Zc + ridge * np.eye(d)
        w = np.linalg.solve(A, (Zc * pi[:, None]).T @ yc)
        b = float(mu_y - mu_z @ w)
        resid = yc - Zc @ w
        ss_res, ss_tot = pi @ resid ** 2, pi @ yc ** 2
        fid = float(np.clip(1 - ss_res / ss_tot, 0.0, 1.0))
    total = {g: float(np.sum(np.abs(w[groups == g]))) for g in GROUPS if np.any(groups == g)}
    mean = {g: float(np.mean(np.abs(w[groups == g]))) for g in GROUPS if np.any(groups == g)}
    return Explanation(w, b, fid, total, mean)


def _guess_groups(d: int) -> np.ndarray:
    if d % N_TIMING == 0:
        return feature_groups(d // N_TIMING, False)
    if (d - N_RATES) % N_TIMING == 0:
        return feature_groups((d - N_RATES) // N_TIMING, True)
    return np.array(["feature"] * d)
