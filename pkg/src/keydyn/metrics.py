"""Confusion-matrix metrics, ROC/AUC, equal error rate and label swapping."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ScoredSet:
    """Probabilities of label 1 plus ground truth.

    ``swapped`` marks the label-swap view: the positive class becomes label 0
    and scores are read as 1 - p. The raw arrays never change, so swapping
    twice gives back exactly the original.
    """

    probs: np.ndarray
    labels: np.ndarray
    swapped: bool = False
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        y = np.asarray(self.labels).reshape(-1).astype(int)
        if p.shape != y.shape:
            raise ValueError("probs and labels differ in length")
        if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any((y != 0) & (y != 1)):
            raise ValueError("labels must be 0/1")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return len(self.probs)

    @property
    def scores(self) -> np.ndarray:
        """Positive-class scores under the current convention."""
        return 1.0 - self.probs if self.swapped else self.probs

    @property
    def positives(self) -> np.ndarray:
        return self.labels == (0 if self.swapped else 1)


def label_swap(scored: ScoredSet) -> ScoredSet:
    return replace(scored, swapped=not scored.swapped)


@dataclass
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    eer: float
    eer_threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    positive_label: int
    threshold: float = 0.5
    roc: tuple = ()

    def to_dict(self, with_roc: bool = False) -> dict:
        d = asdict(self)
        if not with_roc:
            d.pop("roc")
        else:
            d["roc"] = [list(map(float, col)) for col in self.roc]
        return d

    def table(self) -> str:
        rows = [("accuracy", self.accuracy), ("precision", self.precision),
                ("recall", self.recall), ("f1", self.f1), ("auc", self.auc),
                ("eer", self.eer)]
        lines = [f"{k:<10} {v:.4f}" for k, v in rows]
        lines.append(f"{'confusion':<10} tp={self.tp} fp={self.fp} tn={self.tn} fn={self.fn}")
        lines.append(f"{'positive':<10} label {self.positive_label}")
        return "\n".join(lines)


def confusion(scored: ScoredSet, threshold: float = 0.5) -> tuple[int, int, int, int]:
    pred = scored.scores >= threshold
    pos = scored.positives
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    tn = int(np.sum(~pred & ~pos))
    fn = int(np.sum(~pred & pos))
    return tp, fp, tn, fn


def _div(a, b):
    return a / b if b else math.nan


def roc_curve(scores, positives) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds), one point per distinct score plus the (0, 0) start.

    A window is predicted positive when its score is >= the threshold.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s, pos = s[order], pos[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tps = np.cumsum(pos)[last]
    fps = (last + 1) - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    thr = np.r_[np.inf, s[last]]
    return fpr, tpr, thr


def auc(fpr, tpr) -> float:
    """Trapezoid-rule area under the ROC polyline."""
    f, t = np.asarray(fpr, dtype=np.float64), np.asarray(tpr, dtype=np.float64)
    return float(np.sum(np.diff(f) * (t[1:] + t[:-1]) / 2.0))


def eer(fpr, tpr, thresholds=None) -> tuple[float, float]:
    """Equal error rate by linear interpolation on the ROC segment where
    FPR - FNR changes sign; returns (eer, threshold at the crossing)."""
    fpr = np.asarray(fpr, dtype=np.float64)
    fnr = 1.0 - np.asarray(tpr, dtype=np.float64)
    d = fpr - fnr
    i = int(np.argmax(d >= 0))
    if d[i] < 0:
        raise ValueError("ROC never reaches FPR >= FNR")
    thr = np.full_like(fpr, np.nan) if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    if i == 0 or d[i] == 0:
        return float(fpr[i]), float(thr[i])
    t = d[i - 1] / (d[i - 1] - d[i])
    rate = fpr[i - 1] + t * (fpr[i] - fpr[i - 1])
    lo, hi = thr[i - 1], thr[i]
    if np.isinf(lo):
        at = hi
    else:
        at = lo + t * (hi - lo)
    return float(rate), float(at)


def classify_metrics(scored: ScoredSet, threshold: float = 0.5) -> EvalReport:
    if len(scored) == 0:
        raise ValueError("cannot evaluate an empty set")
    tp, fp, tn, fn = confusion(scored, threshold)
    precision = _div(tp, tp + fp)
    recall = _div(tp, tp + fn)
    # equals 2PR/(P+R) whenever both are defined; 0 when nothing was caught
    f1 = _div(2 * tp, 2 * tp + fp + fn)
    pos = scored.positives
    if pos.all() or not pos.any():
        a, e, et, roc = math.nan, math.nan, math.nan, ()
    else:
        roc = roc_curve(scored.scores, pos)
        a = auc(roc[0], roc[1])
        e, et = eer(*roc)
    return EvalReport(accuracy=(tp + tn) / len(scored), precision=precision, recall=recall,
                      f1=f1, auc=a, eer=e, eer_threshold=et, tp=tp, fp=fp, tn=tn, fn=fn,
                      positive_label=0 if scored.swapped else 1, threshold=threshold, roc=roc)


def mean_report(reports: list[EvalReport]) -> dict:
    """Average over runs (undefined values skipped), plus pooled-count metrics.

    Precision is undefined for a run that flags nothing; such runs are left
    out of the precision average rather than counted as 0.
    """
    keys = ["accuracy", "precision", "recall", "f1", "auc", "eer"]
    out = {}
    for k in keys:
        vals = np.array([getattr(r, k) for r in reports], dtype=np.float64)
        out[k] = float(np.mean(vals[~np.isnan(vals)])) if np.any(~np.isnan(vals)) else math.nan
    for k in ("tp", "fp", "tn", "fn"):
        out[k] = int(sum(getattr(r, k) for r in reports))
    out["pooled_precision"] = _div(out["tp"], out["tp"] + out["fp"])
    out["pooled_recall"] = _div(out["tp"], out["tp"] + out["fn"])
    out["n_precision_undefined"] = int(sum(math.isnan(r.precision) for r in reports))
    out["n"] = len(reports)
    return out


def multiclass_accuracy(probs: np.ndarray, labels) -> float:
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


# -- file interfaces -----------------------------------------------------------

def read_scores(path: str | Path) -> ScoredSet:
    """CSV with at least ``score,label`` columns (header required)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no scores")
    return ScoredSet(np.array([float(r["score"]) for r in rows]),
                     np.array([int(r["label"]) for r in rows]))


def write_scores(path: str | Path, scored: ScoredSet, extra: dict[str, list] | None = None) -> None:
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["score", "label"] + list(extra))
        for i, (p, y) in enumerate(zip(scored.probs, scored.labels)):
            w.writerow([repr(float(p)), int(y)] + [extra[k][i] for k in extra])


def write_roc(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fpr", "tpr", "threshold"])
        for row in zip(*report.roc):
            w.writerow([repr(float(v)) for v in row])


def write_report(path: str | Path, report: EvalReport | dict) -> None:
    d = report.to_dict() if isinstance(report, EvalReport) else report
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
