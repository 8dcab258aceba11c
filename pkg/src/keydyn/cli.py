"""``keydyn`` command line: one subcommand per pipeline stage.

Every invocation writes a JSON run manifest (resolved settings, seeds,
input/output SHA-256 hashes, metric summary). ``keydyn rerun <manifest>``
replays a run from its manifest alone.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, config, explain, features, ingest, metrics, synth, trainer
from .ingest import Corpus, Subset
from .nn import checkpoint

log = logging.getLogger("keydyn")

MANIFEST_FORMAT = "keydyn-run 1"


class CliError(Exception):
    pass


# -- helpers -------------------------------------------------------------------

def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hashes(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_file():
            out[str(p)] = sha256(p)
    return out


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _dump_json(path: str | Path, data) -> None:
    Path(path).write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_any_corpus(path: str | Path, subset: str = "all",
                    min_length: int | None = None) -> Corpus:
    """Canonical corpus file or session manifest, filtered to ``subset``."""
    path = Path(path)
    if not path.is_file():
        raise CliError(f"corpus not found: {path}")
    sub = Subset(subset)
    with open(path, encoding="utf-8") as fh:
        head = fh.readline()
    if head.startswith(ingest.CORPUS_MAGIC):
        corpus = ingest.read_corpus(path)
        if sub is not Subset.ALL:
            keep = {u for u, s in corpus.subset_of.items() if s is sub}
            corpus = replace(corpus, subset=sub,
                             sessions=[s for s in corpus.sessions if s.user_id in keep],
                             subset_of={u: s for u, s in corpus.subset_of.items() if u in keep})
    else:
        corpus = ingest.load_corpus(path, sub)
    if min_length is not None:
        corpus, removed = ingest.min_length_filter(corpus, min_length)
        if removed:
            log.info("min-length filter removed %s", ", ".join(removed))
    return corpus


def _need_seed(v: dict) -> int:
    if v.get("seed") is None:
        raise CliError("--seed is required for this stage (or set [train] seed in the config)")
    return int(v["seed"])


def _need(v: dict, key: str, what: str):
    if not v.get(key):
        raise CliError(f"{what} is required (--{key.replace('_', '-')})")
    return v[key]


def _corpus(v: dict) -> Corpus:
    return load_any_corpus(_need(v, "corpus", "a corpus"), v.get("subset") or "all",
                           v.get("min_length"))


def _inherit(v: dict, meta: dict, explicit: set[str]) -> dict:
    """Take data/model settings from a checkpoint's spec unless set explicitly."""
    spec = meta.get("spec") or {}
    flat = {k: spec.get(k) for k in ("fold", "length", "stride", "fusion") if k in spec}
    for k, val in (spec.get("model") or {}).items():
        if k in config.BY_NAME and config.BY_NAME[k].section == "model":
            flat[k] = val
    out = dict(v)
    for k, val in flat.items():
        if k not in explicit:
            out[k] = val
    return out


def _out_dir(v: dict) -> Path:
    out = Path(_need(v, "out", "an output location"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _user_report(per_user: dict) -> dict:
    return {u: r.eval.to_dict() for u, r in per_user.items()}


# -- stages --------------------------------------------------------------------
# each returns (metrics, inputs, outputs)

def cmd_ingest(v):
    manifest = _need(v, "manifest", "a session manifest")
    corpus = load_any_corpus(manifest, v["subset"], v.get("min_length"))
    bad = ingest.check_subset_tags(corpus)
    if bad:
        log.warning("keyboard tags disagree with subset for %s", ", ".join(bad))
    _, dropped = ingest.complete_users(corpus)
    out = Path(_need(v, "out", "an output corpus path"))
    out.parent.mkdir(parents=True, exist_ok=True)
    ingest.save_corpus(corpus, out)
    m = {"users": len(corpus.users()), "sessions": len(corpus.sessions),
         "presses": sum(len(s) for s in corpus.sessions),
         "discarded_up": sum(s.discarded_up for s in corpus.sessions),
         "discarded_down": sum(s.discarded_down for s in corpus.sessions),
         "incomplete_users": dropped, "tag_mismatch": bad}
    print(f"{m['users']} users, {m['sessions']} sessions, {m['presses']} presses "
          f"({m['discarded_up']} orphan ups, {m['discarded_down']} orphan downs)")
    inputs = [manifest] + [Path(manifest).parent / e.path for e in ingest.read_manifest(manifest)]
    return m, inputs, [out]


def cmd_synth(v):
    seed = _need_seed(v)
    profiles = synth.make_profiles(v["users"], seed, separation=v["separation"],
                                   max_propensity=v["max_propensity"])
    out = _out_dir(v)
    manifest = synth.write(out, profiles, v["sessions"], v["presses"], v["rotation"])
    files = [out / e.path for e in ingest.read_manifest(manifest)]
    print(f"wrote {len(files)} sessions for {len(profiles)} users to {out}")
    return {"users": len(profiles), "sessions": len(files)}, [], [manifest] + files


def cmd_features(v):
    corpus = _corpus(v)
    data = features.fold_data(corpus, ingest.fold_by_name(v["fold"]), v["length"], v["stride"],
                              v["fusion"])
    out = _out_dir(v)
    paths = [out / "train.csv", out / "test.csv", out / "norm.json"]
    features.export_csv(paths[0], data.train, data.fold.name, "train")
    features.export_csv(paths[1], data.test, data.fold.name, "test")
    _dump_json(paths[2], data.norm.to_dict())
    m = {"train_windows": len(data.train), "test_windows": len(data.test),
         "users": len(data.users), "fold": data.fold.name}
    print(f"{m['train_windows']} train / {m['test_windows']} test windows ({m['fold']})")
    return m, [v["corpus"]], paths


def cmd_train_multiclass(v):
    _need_seed(v)
    spec = config.run_spec(v, "multiclass")
    res = trainer.train_multiclass(spec, _corpus(v))
    out = _out_dir(v)
    ckpt, rep = out / "multiclass.ckpt", out / "report.json"
    trainer.save_run(res, ckpt)
    _dump_json(rep, {**res.report, "history": vars(res.history)})
    print(f"test accuracy {res.report['test_accuracy']:.4f} on {res.report['fold']}")
    return res.report, [v["corpus"]], [ckpt, rep]


def _binary_outputs(out: Path, per_user: dict, mean: dict, extra: dict | None = None):
    paths = []
    for user, r in per_user.items():
        ck, sc = out / f"{user}.ckpt", out / f"{user}.scores.csv"
        trainer.save_run(r, ck)
        metrics.write_scores(sc, r.scores)
        paths += [ck, sc]
    rep = out / "report.json"
    _dump_json(rep, {"mean": mean, "per_user": _user_report(per_user), **(extra or {})})
    return paths + [rep]


def _print_mean(mean: dict):
    print(" ".join(f"{k}={mean[k]:.4f}" for k in ("eer", "accuracy", "precision", "recall", "f1")
                   if mean[k] is not None and not math.isnan(mean[k])))


def cmd_finetune(v):
    _need_seed(v)
    init = _need(v, "init", "a backbone checkpoint")
    _, meta = checkpoint.load(init)
    v = _inherit(v, meta, v.get("_explicit", set()))
    spec = config.run_spec(v, "binary")
    users = [v["positive_user"]] if v.get("positive_user") else None
    res = trainer.finetune_binary(spec, _corpus(v), users=users, jobs=v.get("jobs") or 1)
    out = _out_dir(v)
    paths = _binary_outputs(out, res["per_user"], res["mean"])
    _print_mean(res["mean"])
    return res["mean"], [v["corpus"], init], paths


def cmd_distill(v):
    _need_seed(v)
    _, meta = checkpoint.load(_need(v, "teacher", "a teacher checkpoint"))
    v = _inherit(v, meta, v.get("_explicit", set()))
    dspec = config.distill_spec(v)
    users = [v["positive_user"]] if v.get("positive_user") else None
    res = trainer.distill(dspec, _corpus(v), users=users)
    out = _out_dir(v)
    paths = _binary_outputs(out, res["per_user"], res["mean"],
                            {"w_student": dspec.w_student, "w_teacher": dspec.w_teacher})
    _print_mean(res["mean"])
    return res["mean"], [v["corpus"], v["teacher"]], paths


def cmd_sweep_posweight(v):
    _need_seed(v)
    init = _need(v, "init", "a backbone checkpoint")
    _, meta = checkpoint.load(init)
    v = _inherit(v, meta, v.get("_explicit", set()))
    spec = config.run_spec(v, "binary")
    users = [v["positive_user"]] if v.get("positive_user") else None
    res = trainer.posweight_sweep(spec, v["weights"], _corpus(v), users=users,
                                  jobs=v.get("jobs") or 1)
    out = _out_dir(v)
    rep = out / "sweep.json"
    summary = {str(w): r["mean"] for w, r in res.items()}
    _dump_json(rep, summary)
    print(trainer.sweep_table(res))
    return summary, [v["corpus"], init], [rep]


def _model_data(v: dict, model_path: str):
    model, meta = checkpoint.load(model_path)
    v = _inherit(v, meta, v.get("_explicit", set()))
    if not meta.get("norm"):
        raise CliError(f"{model_path}: checkpoint carries no normalization statistics")
    data = features.fold_data(_corpus(v), ingest.fold_by_name(v["fold"]), v["length"],
                              v["stride"], v["fusion"],
                              norm=features.NormStats.from_dict(meta["norm"]))
    return model, meta, data, v


def _scored_outputs(out: Path, scored, report, swap: bool):
    if swap:
        scored = metrics.label_swap(scored)
        report = metrics.classify_metrics(scored, report.threshold)
    paths = [out / "scores.csv", out / "report.json"]
    metrics.write_scores(paths[0], scored)
    metrics.write_report(paths[1], _clean(report.to_dict()))
    if report.roc:
        paths.append(out / "roc.csv")
        metrics.write_roc(paths[-1], report)
    print(report.table())
    return report, paths


def cmd_ensemble(v):
    members = config.ensemble_spec(v).members
    models, users = [], set()
    model, meta, data, v = _model_data(v, members[0])
    for path in members:
        m, mm = checkpoint.load(path)
        if m.config.n_outputs != 1:
            raise CliError(f"{path}: ensemble members must be binary verifiers")
        models.append(m)
        users.add(mm.get("positive_user"))
    if len(users) != 1 or None in users:
        raise CliError("ensemble members must verify the same user")
    user = users.pop()
    y = trainer.binary_labels(data.test, user)
    probs = trainer.ensemble_predict(models, data.test.timing, data.test.rates)
    scored = metrics.ScoredSet(probs, y)
    report = metrics.classify_metrics(scored, v["threshold"])
    single = [metrics.classify_metrics(metrics.ScoredSet(
        m.predict_proba(data.test.timing, data.test.rates), y)).eer for m in models]
    report, paths = _scored_outputs(_out_dir(v), scored, report, v["label_swap"])
    print(f"member EERs {', '.join(f'{e:.4f}' for e in single)}")
    return ({**report.to_dict(), "member_eer": single, "user": user},
            [v["corpus"]] + list(members), paths)


def cmd_eval(v):
    model_path = _need(v, "model", "a checkpoint")
    model, meta, data, v = _model_data(v, model_path)
    out = _out_dir(v)
    if model.config.n_outputs > 1:
        index = {u: i for i, u in enumerate(meta["users"])}
        known = np.array([u in index for u in data.test.users], dtype=bool)
        test = data.test.subset(known)
        probs = model.predict_proba(test.timing, test.rates)
        acc = metrics.multiclass_accuracy(probs, [index[u] for u in test.users])
        rep = out / "report.json"
        _dump_json(rep, {"test_accuracy": acc, "n_test": int(known.sum())})
        print(f"test accuracy {acc:.4f}")
        return {"test_accuracy": acc}, [v["corpus"], model_path], [rep]
    user = v.get("positive_user") or meta.get("positive_user")
    if not user:
        raise CliError("binary checkpoint has no positive user; pass --positive-user")
    scored = metrics.ScoredSet(model.predict_proba(data.test.timing, data.test.rates),
                               trainer.binary_labels(data.test, user))
    report = metrics.classify_metrics(scored, v["threshold"])
    report, paths = _scored_outputs(out, scored, report, v["label_swap"])
    return report.to_dict(), [v["corpus"], model_path], paths


def cmd_smote(v):
    seed = _need_seed(v)
    src = _need(v, "features", "a feature CSV")
    user = _need(v, "positive_user", "the positive user")
    ws, folds, roles = features.import_csv(src)
    y = (ws.users == user).astype(int)
    if not y.any():
        raise CliError(f"user {user} has no rows in {src}")
    cfg = trainer.ResampleConfig(v["smote_ratio"], v["undersample_ratio"], v["k_neighbors"])
    if cfg.smote_ratio is None and cfg.undersample_ratio is None:
        raise CliError("give --smote-ratio and/or --undersample-ratio")
    out_ws, out_y = trainer._resample(ws, y, cfg, seed)
    out = Path(_need(v, "out", "an output CSV"))
    out.parent.mkdir(parents=True, exist_ok=True)
    features.export_csv(out, out_ws, folds[0] if folds else "", "train")
    m = {"positives": int(out_y.sum()), "negatives": int(len(out_y) - out_y.sum()),
         "synthetic": int(out_ws.synthetic.sum()), "input_rows": len(y)}
    print(f"{m['input_rows']} rows -> {m['positives']} positive ({m['synthetic']} synthetic), "
          f"{m['negatives']} negative")
    return m, [src], [out]


def cmd_explain(v):
    seed = _need_seed(v)
    model_path = _need(v, "model", "a checkpoint")
    model, meta, data, v = _model_data(v, model_path)
    n = len(data.test)
    if not 0 <= v["window"] < n:
        raise CliError(f"window index {v['window']} outside [0, {n})")
    target = None
    if model.config.n_outputs > 1:
        user = v.get("positive_user") or data.test.users[v["window"]]
        target = meta["users"].index(user)
    train_flat = data.train.flat()
    exp = explain.lime_explain(explain.model_scorer(model, target), data.test.flat()[v["window"]],
                               v["n_perturb"], seed, background=train_flat.mean(axis=0),
                               scale=train_flat.std(axis=0),
                               groups=explain.feature_groups(data.length, data.fusion))
    out = Path(_need(v, "out", "an output JSON path"))
    out.parent.mkdir(parents=True, exist_ok=True)
    res = {"window": v["window"], "user": str(data.test.users[v["window"]]),
           "fidelity": exp.fidelity, "intercept": exp.intercept,
           "group_importance": exp.group_importance, "group_mean": exp.group_mean,
           "coarse_importance": exp.coarse_importance(), "ranking": exp.ranking(),
           "weights": exp.weights}
    _dump_json(out, res)
    for g in exp.ranking():
        print(f"{g:<10} {exp.group_importance[g]:.4f}")
    print(f"fidelity   {exp.fidelity:.4f}")
    return {k: res[k] for k in ("fidelity", "group_importance", "ranking")}, \
        [v["corpus"], model_path], [out]


def cmd_eer_report(v):
    src = _need(v, "scores", "a score CSV")
    scored = metrics.read_scores(src)
    if v["label_swap"]:
        scored = metrics.label_swap(scored)
    pos = scored.positives
    if pos.all() or not pos.any():
        raise CliError("EER needs both genuine and impostor scores")
    fpr, tpr, thr = metrics.roc_curve(scored.scores, pos)
    rate, at = metrics.eer(fpr, tpr, thr)
    a = metrics.auc(fpr, tpr)
    print(f"eer {rate!r}")
    print(f"threshold {at!r}")
    print(f"auc {a!r}")
    m = {"eer": rate, "eer_threshold": at, "auc": a, "n": len(scored)}
    outputs = []
    if v.get("out"):
        _dump_json(v["out"], m)
        outputs.append(v["out"])
    return m, [src], outputs


# -- parser --------------------------------------------------------------------

def _allowed(sections: tuple[str, ...]) -> set[str]:
    """Key names for a command: whole sections or individual keys."""
    return {k.name for k in config.KEYS if k.section in sections or k.name in sections}


def _add_keys(p: argparse.ArgumentParser, sections: tuple[str, ...]):
    p.add_argument("--config", help="config file (flags override it)")
    allowed = _allowed(sections)
    for k in config.KEYS:
        if k.name not in allowed:
            continue
        flags = [k.flag] + ([k.alias] if k.alias else [])
        if k.parse is config._strs:
            p.add_argument(*flags, dest=k.name, default=None, help=k.help, nargs="+")
        else:
            p.add_argument(*flags, dest=k.name, default=None, help=k.help,
                           type=k.parse if k.parse in (int, float, str) else str)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--run-manifest", help="where to write the run manifest")
    p.add_argument("-v", "--verbose", action="store_true")


DEFAULT_OUT = {"ingest": "corpus.kdc", "synth": "synth", "smote": "smote.csv",
               "explain": "explanation.json", "eer-report": None}
DEFAULT_OUT.update({c: f"runs/{c}" for c in ("features", "train-multiclass", "finetune",
                                             "distill", "ensemble", "sweep-posweight", "eval")})

TRAIN_SECTIONS = ("data", "model", "train", "resample", "run")

COMMANDS: dict[str, tuple[Callable, tuple[str, ...], str]] = {
    "ingest": (cmd_ingest, (), "parse raw logs listed in a manifest into a corpus file"),
    "synth": (cmd_synth, (), "generate a synthetic corpus"),
    "features": (cmd_features, ("data",), "export normalized fold windows as CSV"),
    "train-multiclass": (cmd_train_multiclass, TRAIN_SECTIONS, "train the identification backbone"),
    "finetune": (cmd_finetune, TRAIN_SECTIONS, "fine-tune per-user verifiers from a backbone"),
    "distill": (cmd_distill, TRAIN_SECTIONS + ("distill",), "train students against a teacher"),
    "ensemble": (cmd_ensemble, ("data", "ensemble"), "average member probabilities"),
    "sweep-posweight": (cmd_sweep_posweight, TRAIN_SECTIONS, "fine-tune over several pos-weights"),
    "smote": (cmd_smote, ("resample", "seed", "positive_user"), "resample a feature CSV"),
    "eval": (cmd_eval, ("data", "positive_user"), "score a checkpoint on its test fold"),
    "explain": (cmd_explain, ("data", "seed", "positive_user"),
                "local surrogate explanation of one window"),
    "eer-report": (cmd_eer_report, (), "EER/AUC of a score file"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="keydyn", description="keystroke-dynamics toolkit")
    ap.add_argument("--version", action="version", version=f"keydyn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, sections, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        _common(p)
        if sections:
            _add_keys(p, sections)
        p.add_argument("--out", default=DEFAULT_OUT.get(name), help="output file or directory")
        if name == "ingest":
            p.add_argument("--manifest", required=True)
            p.add_argument("--subset", default="all", choices=[s.value for s in Subset])
            p.add_argument("--min-length", type=int)
        elif name == "synth":
            p.add_argument("--seed", type=int)
            p.add_argument("--users", type=int, default=10)
            p.add_argument("--sessions", type=int, default=3)
            p.add_argument("--presses", type=int, default=600)
            p.add_argument("--separation", type=float, default=30.0)
            p.add_argument("--max-propensity", type=float, default=0.1)
            p.add_argument("--rotation", action="store_true")
        elif name == "eer-report":
            p.add_argument("--scores", required=True)
            p.add_argument("--label-swap", action="store_true")
        elif name == "sweep-posweight":
            p.add_argument("--weights", type=config._floats, default=[0.1, 2.0, 10.0, 50.0],
                           help="comma-separated pos-weights")
        elif name == "smote":
            p.add_argument("--features", required=True, help="training CSV from `features`")
        if name in ("finetune", "sweep-posweight"):
            p.add_argument("--jobs", type=int, default=1)
        if name in ("eval", "explain"):
            p.add_argument("--model", required=True)
        if name in ("eval", "ensemble"):
            p.add_argument("--threshold", type=float, default=0.5)
            p.add_argument("--label-swap", action="store_true")
        if name == "explain":
            p.add_argument("--window", type=int, default=0)
            p.add_argument("--n-perturb", type=int, default=1000)
    rr = sub.add_parser("rerun", help="replay a run from its manifest")
    rr.add_argument("manifest")
    rr.add_argument("--run-manifest", help="where to write the new manifest")
    rr.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_args(args: argparse.Namespace) -> dict[str, Any]:
    """Namespace -> settings dict with config-file values and defaults merged in."""
    raw = {k: v for k, v in vars(args).items() if k != "command"}
    sections = COMMANDS[args.command][1]
    if not sections:
        return _absolute(raw)
    file_vals = config.read_config(raw["config"]) if raw.get("config") else {}
    for k, val in raw.items():
        if k in config.BY_NAME and val is not None:
            parse = config.BY_NAME[k].parse
            if parse not in (int, float, str):
                try:
                    raw[k] = parse(val)
                except ValueError as exc:
                    raise config.ConfigError(f"--{k.replace('_', '-')}: {exc}") from None
    allowed = _allowed(sections)
    file_vals = {k: val for k, val in file_vals.items() if k in allowed}
    explicit = {k for k, val in raw.items() if k in allowed and val is not None} | set(file_vals)
    merged = config.resolve(file_vals, {k: raw[k] for k in allowed})
    merged = {k: val for k, val in merged.items() if k in allowed}
    out = {**{k: val for k, val in raw.items() if k not in config.BY_NAME}, **merged}
    out["_explicit"] = sorted(explicit)
    return _absolute(out)


def _absolute(v: dict) -> dict:
    """Anchor path settings to the working directory so manifests replay anywhere."""
    out = dict(v)
    for k in config.PATH_KEYS + ("out", "config", "features", "scores", "model", "manifest"):
        if out.get(k):
            out[k] = str(Path(out[k]).resolve())
    if out.get("members"):
        out["members"] = [str(Path(m).resolve()) for m in out["members"]]
    return out


def execute(command: str, settings: dict[str, Any], manifest_path: str | None = None) -> dict:
    fn = COMMANDS[command][0]
    v = dict(settings)
    v["_explicit"] = set(v.get("_explicit", ()))
    m, inputs, outputs = fn(v)
    record = {
        "format": MANIFEST_FORMAT, "version": __version__, "subcommand": command,
        "settings": {k: val for k, val in settings.items() if k != "run_manifest"},
        "seeds": {"seed": settings.get("seed")},
        "inputs": _hashes(inputs), "outputs": _hashes(outputs), "metrics": m,
    }
    path = manifest_path or _default_manifest(command, settings)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _dump_json(path, record)
    return record


def _default_manifest(command: str, v: dict) -> str:
    out = v.get("out")
    if out and Path(out).is_dir():
        return str(Path(out) / f"{command}.run.json")
    if out:
        return f"{out}.run.json"
    src = v.get("scores") or v.get("manifest") or "keydyn"
    return f"{src}.{command}.run.json"


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "rerun":
            rec = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
            if rec.get("format") != MANIFEST_FORMAT:
                raise CliError(f"{args.manifest}: not a keydyn run manifest")
            execute(rec["subcommand"], rec["settings"],
                    args.run_manifest or f"{args.manifest}.rerun.json")
        else:
            settings = resolve_args(args)
            execute(args.command, settings, settings.get("run_manifest"))
    except (CliError, config.ConfigError, ingest.ParseError, trainer.TopologyMismatch,
            trainer.TrainingDiverged, ValueError, KeyError, OSError) as exc:
        print(f"keydyn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
