"""Training pipelines: identification, fine-tuned verification, distillation,
pos-weight sweeps and probability-averaging ensembles."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import features
from .features import FoldData, NormStats, WindowSet
from .ingest import Corpus, fold_by_name
from .metrics import (EvalReport, ScoredSet, classify_metrics, mean_report,
                      multiclass_accuracy)
from .nn import (AdamW, KeystrokeNet, ModelConfig, MultiStepLR, bce_logits_loss,
                 cross_entropy_loss)
from .nn import checkpoint
from .resample import LabeledSet, smote_balance, undersample_indices, weighted_sampler

log = logging.getLogger(__name__)

SELECTION_MODES = ("best-val", "best-eer", "last")


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, last_good: dict[str, np.ndarray] | None = None):
        super().__init__(msg)
        self.last_good = last_good


class TopologyMismatch(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    milestones: list[int] = field(default_factory=list)
    gamma: float = 0.1
    epochs: int = 80
    batch_size: int = 32
    pos_weight: float = 1.0
    sampler: str = "shuffle"        # or "weighted"
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ValueError("milestones must be strictly increasing")
        if self.sampler not in ("shuffle", "weighted"):
            raise ValueError(f"unknown sampler {self.sampler!r}")


@dataclass
class ResampleConfig:
    smote_ratio: float | None = None
    undersample_ratio: float | None = None
    k_neighbors: int = 5


@dataclass(kw_only=True)
class RunSpec:
    task: str                                   # "multiclass" | "binary"
    selection: str                              # one of SELECTION_MODES
    fold: str = "s01-train-s2-test"
    length: int = 250
    stride: int | None = None
    fusion: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    init: str | None = None                     # checkpoint path to start from
    freeze: bool = False
    positive_user: str | None = None

    def __post_init__(self):
        if self.task not in ("multiclass", "binary"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.selection not in SELECTION_MODES:
            raise ValueError(f"selection must be one of {SELECTION_MODES}")
        self.model.length = self.length
        if not self.fusion:
            self.model.rate_width = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DistillSpec:
    teacher: str
    student: RunSpec
    w_student: float = 0.5
    w_teacher: float = 1.5

    def __post_init__(self):
        if self.w_student < 0 or self.w_teacher < 0 or self.w_student + self.w_teacher <= 0:
            raise ValueError("distillation weights must be >= 0 with a positive sum")


@dataclass
class EnsembleSpec:
    members: list[str]

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("an ensemble needs at least 2 members")


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    val_eer: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    selected_epoch: int = -1


@dataclass
class RunResult:
    model: KeystrokeNet
    report: dict
    history: History
    meta: dict
    eval: EvalReport | None = None
    scores: ScoredSet | None = None


# -- data helpers --------------------------------------------------------------

def stratified_split(labels, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random (train_idx, val_idx) with ``fraction`` of each class held out."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    val = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        n = int(round(fraction * len(idx)))
        if fraction > 0 and len(idx) > 1:
            n = max(1, min(n, len(idx) - 1))
        val.extend(rng.choice(idx, size=n, replace=False))
    val = np.sort(np.array(val, dtype=int))
    train = np.setdiff1d(np.arange(len(labels)), val)
    return train, val


def _resample(ws: WindowSet, y: np.ndarray, cfg: ResampleConfig, seed: int):
    if cfg.undersample_ratio is not None:
        keep = undersample_indices(y, cfg.undersample_ratio, seed)
        ws, y = ws.subset(keep), y[keep]
    if cfg.smote_ratio is None:
        return ws, y
    data = smote_balance(LabeledSet(ws.flat(), y, ws.synthetic.copy()), cfg.smote_ratio,
                         seed, cfg.k_neighbors)
    extra = len(data) - len(ws)
    if extra == 0:
        return ws, y
    pos_user = ws.users[y == 1][0]
    out = WindowSet.from_flat(data.rows, ws.timing.shape[1], ws.rates is not None,
                              np.concatenate([ws.users, np.full(extra, pos_user, dtype=object)]),
                              np.concatenate([ws.sessions, np.full(extra, -1)]),
                              data.synthetic)
    return out, np.asarray(data.labels)


# -- core loop -------------------------------------------------------------------

LossFn = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]]


def fit(model: KeystrokeNet, ws: WindowSet, y: np.ndarray, cfg: TrainConfig, *,
        loss_fn: LossFn, val: tuple[WindowSet, np.ndarray] | None = None,
        selection: str = "last", frozen: Sequence[str] = ()) -> History:
    """Mini-batch training; ``loss_fn(logits, batch_indices)`` returns (loss, dlogits).

    With a validation set, the parameters kept at the end are those of the
    epoch chosen by ``selection``.
    """
    opt = AdamW(model.parameters(), cfg.learning_rate, cfg.weight_decay, frozen=frozen)
    sched = MultiStepLR(opt, cfg.milestones, cfg.gamma)
    hist = History()
    binary = model.config.n_outputs == 1
    best, best_params = None, None
    last_good = _snapshot(model)
    for epoch in range(cfg.epochs):
        hist.lr.append(sched.set_epoch(epoch))
        if cfg.sampler == "weighted":
            order = weighted_sampler(y, seed=cfg.seed * 100003 + epoch)
        else:
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(y))
        total = 0.0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            model.zero_grad()
            logits = model.forward(ws.timing[idx], None if ws.rates is None else ws.rates[idx],
                                   training=True)
            loss, dlogits = loss_fn(logits, idx)
            if not np.isfinite(loss):
                model.load_parameters(last_good)
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}", last_good)
            model.backward(dlogits)
            opt.step(model.gradients())
            total += loss * len(idx)
        hist.train_loss.append(total / len(order))
        last_good = _snapshot(model)
        if val is None or len(val[1]) == 0:
            continue
        acc, e = _validate(model, *val, binary)
        hist.val_accuracy.append(acc)
        hist.val_eer.append(e)
        if selection == "best-eer" and binary and np.isfinite(e):
            key = -e
        else:
            key = acc
        if selection != "last" and (best is None or key >= best):
            best, best_params, hist.selected_epoch = key, _snapshot(model), epoch
    if best_params is not None:
        model.load_parameters(best_params)
    else:
        hist.selected_epoch = cfg.epochs - 1
    return hist


def _snapshot(model):
    return {k: v.copy() for k, v in model.parameters().items()}


def _validate(model, ws, y, binary):
    p = model.predict_proba(ws.timing, ws.rates)
    if not binary:
        return multiclass_accuracy(p, y), float("nan")
    rep = classify_metrics(ScoredSet(p, y))
    return rep.accuracy, rep.eer


# -- multiclass ------------------------------------------------------------------

def prepare(corpus: Corpus, spec: RunSpec) -> FoldData:
    return features.fold_data(corpus, fold_by_name(spec.fold), spec.length, spec.stride,
                              spec.fusion)


def train_multiclass(spec: RunSpec, corpus: Corpus | None = None, data: FoldData | None = None,
                     dtype=np.float32) -> RunResult:
    if spec.task != "multiclass":
        raise ValueError("train_multiclass needs a multiclass RunSpec")
    data = data if data is not None else prepare(corpus, spec)
    users = data.users
    if len(users) < 2:
        raise ValueError("multiclass training needs at least 2 users")
    index = {u: i for i, u in enumerate(users)}
    y = np.array([index[u] for u in data.train.users])
    tr, va = stratified_split(y, spec.train.val_fraction, spec.train.seed)
    spec.model.n_outputs = len(users)
    model = KeystrokeNet(spec.model, seed=spec.train.seed, dtype=dtype)
    train_ws = data.train.subset(tr)
    ytr = y[tr]
    hist = fit(model, train_ws, ytr, spec.train,
               loss_fn=lambda z, idx: cross_entropy_loss(z, ytr[idx]),
               val=(data.train.subset(va), y[va]), selection=spec.selection)
    known = np.array([u in index for u in data.test.users], dtype=bool)
    test = data.test.subset(known)
    yt = np.array([index[u] for u in test.users])
    probs = model.predict_proba(test.timing, test.rates)
    acc = multiclass_accuracy(probs, yt) if len(yt) else float("nan")
    report = {"test_accuracy": acc,
              "val_accuracy": hist.val_accuracy[hist.selected_epoch] if hist.val_accuracy else None,
              "n_train": int(len(tr)), "n_val": int(len(va)), "n_test": int(len(yt)),
              "n_parameters": model.n_parameters(), "fold": data.fold.name,
              "selected_epoch": hist.selected_epoch}
    meta = _meta(spec, data, users, backbone_accuracy=acc)
    return RunResult(model, report, hist, meta)


def _meta(spec: RunSpec, data: FoldData, users, **extra) -> dict:
    return {"spec": spec.to_dict(), "norm": data.norm.to_dict(), "users": list(users),
            "fold": data.fold.name, "optimizer": "adamw",
            "conv_width": spec.model.conv_width, "smote_space": "normalized", **extra}


# -- binary verification ---------------------------------------------------------

def binary_labels(ws: WindowSet, user: str) -> np.ndarray:
    return (ws.users == user).astype(int)


def check_topology(backbone: KeystrokeNet, config: ModelConfig) -> None:
    """Raise naming every backbone layer whose parameter shapes differ."""
    probe = KeystrokeNet(ModelConfig(**{**config.to_dict(), "n_outputs": 1}), dtype=backbone.dtype)
    mine, theirs = backbone.parameters(), probe.parameters()
    bad = []
    for name in sorted(set(mine) | set(theirs)):
        if name.startswith("head."):
            continue
        if name not in mine or name not in theirs:
            bad.append(f"{name} present in only one topology")
        elif mine[name].shape != theirs[name].shape:
            bad.append(f"{name} shape {mine[name].shape} != {theirs[name].shape}")
    if bad:
        layers = sorted({b.split(".")[0] for b in bad})
        raise TopologyMismatch(f"layers {', '.join(layers)} differ: " + "; ".join(bad))


def _binary_run(model: KeystrokeNet, data: FoldData, user: str, spec: RunSpec,
                loss_builder=None, seed_offset: int = 0) -> tuple[EvalReport, History, ScoredSet]:
    cfg = spec.train
    seed = cfg.seed + seed_offset
    y = binary_labels(data.train, user)
    if not y.any():
        raise ValueError(f"user {user} has no training windows")
    tr, va = stratified_split(y, cfg.val_fraction, seed)
    train_ws, ytr = _resample(data.train.subset(tr), y[tr], spec.resample, seed)
    val_ws, yva = data.train.subset(va), y[va]
    if loss_builder is None:
        loss_fn = lambda z, idx: bce_logits_loss(z[:, 0], ytr[idx], cfg.pos_weight)  # noqa: E731
    else:
        loss_fn = loss_builder(train_ws, ytr)
    frozen = model.backbone_names() if spec.freeze else ()
    run_cfg = TrainConfig(**{**asdict(cfg), "seed": seed})
    hist = fit(model, train_ws, ytr, run_cfg, loss_fn=loss_fn, val=(val_ws, yva),
               selection=spec.selection, frozen=frozen)
    yt = binary_labels(data.test, user)
    scored = ScoredSet(model.predict_proba(data.test.timing, data.test.rates), yt,
                       tags={"user": user, "fold": data.fold.name})
    return classify_metrics(scored), hist, scored


def _finetune_one(args):
    blob, data, user, spec, k = args
    model, _ = checkpoint.loads(blob)
    model.replace_head(1, seed=spec.train.seed + 7919 * (k + 1))
    report, hist, scored = _binary_run(model, data, user, spec, seed_offset=k)
    return user, checkpoint.dumps(model), report, hist, scored


def finetune_binary(spec: RunSpec, corpus: Corpus | None = None, *,
                    backbone: KeystrokeNet | None = None, data: FoldData | None = None,
                    users: Sequence[str] | None = None, jobs: int = 1) -> dict:
    """One verifier per user, initialised from a multiclass backbone.

    Returns ``{"per_user": {user: RunResult}, "mean": averaged metrics}``.
    """
    meta: dict = {}
    if backbone is None:
        if spec.init is None:
            raise ValueError("fine-tuning needs a backbone checkpoint (spec.init)")
        backbone, meta = checkpoint.load(spec.init)
    check_topology(backbone, spec.model)
    if data is None:
        data = prepare(corpus, spec)
        if meta.get("norm"):
            data = _renormalize(corpus, spec, NormStats.from_dict(meta["norm"]))
    targets = list(users) if users is not None else data.users
    blob = checkpoint.dumps(backbone)
    jobs_args = [(blob, data, u, spec, k) for k, u in enumerate(targets)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            outs = list(pool.map(_finetune_one, jobs_args))
    else:
        outs = [_finetune_one(a) for a in jobs_args]
    per_user = {}
    for user, mblob, report, hist, scored in outs:
        model, _ = checkpoint.loads(mblob)
        per_user[user] = RunResult(model, report.to_dict(), hist,
                                   _meta(spec, data, data.users, positive_user=user,
                                         backbone_accuracy=meta.get("backbone_accuracy")),
                                   eval=report, scores=scored)
    return {"per_user": per_user, "mean": mean_report([r.eval for r in per_user.values()])}


def _renormalize(corpus: Corpus, spec: RunSpec, norm: NormStats) -> FoldData:
    return features.fold_data(corpus, fold_by_name(spec.fold), spec.length, spec.stride,
                              spec.fusion, norm=norm)


def train_binary(spec: RunSpec, data: FoldData, user: str, dtype=np.float32) -> RunResult:
    """Verifier for ``user`` trained from scratch (no backbone)."""
    spec.model.n_outputs = 1
    model = KeystrokeNet(ModelConfig(**spec.model.to_dict()), seed=spec.train.seed, dtype=dtype)
    report, hist, scored = _binary_run(model, data, user, spec)
    return RunResult(model, report.to_dict(), hist,
                     _meta(spec, data, data.users, positive_user=user), eval=report,
                     scores=scored)


# -- distillation ----------------------------------------------------------------

def distill_loss(student_logits, labels, teacher_probs, w_student, w_teacher, pos_weight=1.0):
    hard, dh = bce_logits_loss(student_logits, labels, pos_weight)
    soft, ds = bce_logits_loss(student_logits, teacher_probs, 1.0)
    return w_student * hard + w_teacher * soft, w_student * dh + w_teacher * ds


def teacher_target_probs(teacher: KeystrokeNet, teacher_users: list[str], ws: WindowSet,
                         user: str) -> np.ndarray:
    """Teacher's probability that each window belongs to ``user``."""
    p = teacher.predict_proba(ws.timing, ws.rates)
    return p[:, teacher_users.index(user)] if p.ndim == 2 else p


def distill(dspec: DistillSpec, corpus: Corpus | None = None, *, data: FoldData | None = None,
            teacher: KeystrokeNet | None = None, teacher_users: list[str] | None = None,
            users: Sequence[str] | None = None) -> dict:
    """Binary students trained against hard labels plus teacher soft labels."""
    spec = dspec.student
    if teacher is None:
        teacher, meta = checkpoint.load(dspec.teacher)
        teacher_users = meta["users"]
        data = data or _renormalize(corpus, spec, NormStats.from_dict(meta["norm"]))
    data = data or prepare(corpus, spec)
    per_user = {}
    for k, user in enumerate(users if users is not None else data.users):
        spec.model.n_outputs = 1
        model = KeystrokeNet(ModelConfig(**spec.model.to_dict()), seed=spec.train.seed + k)

        def builder(ws, ytr, user=user):
            pt = teacher_target_probs(teacher, teacher_users, ws, user)
            return lambda z, idx: distill_loss(z[:, 0], ytr[idx], pt[idx], dspec.w_student,
                                               dspec.w_teacher, spec.train.pos_weight)

        report, hist, scored = _binary_run(model, data, user, spec, loss_builder=builder,
                                           seed_offset=k)
        per_user[user] = RunResult(model, report.to_dict(), hist,
                                   _meta(spec, data, data.users, positive_user=user,
                                         distill={"w_student": dspec.w_student,
                                                  "w_teacher": dspec.w_teacher,
                                                  "collapse": "target-class probability"}),
                                   eval=report, scores=scored)
    return {"per_user": per_user, "mean": mean_report([r.eval for r in per_user.values()])}


# -- ensembles and sweeps --------------------------------------------------------

def ensemble_predict(members: Sequence[KeystrokeNet] | EnsembleSpec, timing, rates=None) -> np.ndarray:
    """Arithmetic mean of the members' positive-class probabilities."""
    if isinstance(members, EnsembleSpec):
        members = [checkpoint.load(p)[0] for p in members.members]
    if len(members) < 1:
        raise ValueError("no ensemble members")
    timing = np.asarray(timing)
    single = timing.ndim == 2
    if single:
        timing = timing[None]
        rates = None if rates is None else np.asarray(rates)[None]
    probs = np.mean([m.predict_proba(timing, rates) for m in members], axis=0)
    return probs[0] if single else probs


def posweight_sweep(spec: RunSpec, weights: Sequence[float], corpus: Corpus | None = None, *,
                    backbone: KeystrokeNet | None = None, data: FoldData | None = None,
                    users: Sequence[str] | None = None, jobs: int = 1) -> dict[float, dict]:
    out = {}
    for w in weights:
        s = RunSpec(**{**_shallow(spec), "train": TrainConfig(**{**asdict(spec.train),
                                                                 "pos_weight": float(w)})})
        out[float(w)] = finetune_binary(s, corpus, backbone=backbone, data=data, users=users,
                                        jobs=jobs)
    return out


def _shallow(spec: RunSpec) -> dict:
    return {f: getattr(spec, f) for f in spec.__dataclass_fields__}


def sweep_table(results: dict[float, dict]) -> str:
    cols = ["eer", "accuracy", "precision", "recall", "f1", "auc"]
    lines = ["pos_weight " + " ".join(f"{c:>9}" for c in cols)]
    for w, res in results.items():
        m = res["mean"]
        lines.append(f"{w:>10g} " + " ".join(f"{m[c]:>9.4f}" for c in cols))
    return "\n".join(lines)


def save_run(result: RunResult, path: str | Path) -> None:
    checkpoint.save(result.model, path, result.meta)
