"""Run configuration files.

INI-style text with sections ``[data] [model] [train] [resample] [run]
[distill] [ensemble]`` and one ``key = value`` per line. Every key has a
matching command-line flag (``learning_rate`` -> ``--learning-rate``);
flags override file values.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .nn import ModelConfig
from .trainer import DistillSpec, EnsembleSpec, ResampleConfig, RunSpec, TrainConfig


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


PATH_KEYS = ("corpus", "init", "teacher")


def _ints(s) -> list[int]:
    if isinstance(s, (list, tuple)):
        return [int(v) for v in s]
    return [int(v) for v in str(s).replace(",", " ").split()]


def _floats(s) -> list[float]:
    if isinstance(s, (list, tuple)):
        return [float(v) for v in s]
    return [float(v) for v in str(s).replace(",", " ").split()]


def _strs(s) -> list[str]:
    if isinstance(s, (list, tuple)):
        return [str(v) for v in s]
    return str(s).replace(",", " ").split()


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    parse: Callable[[Any], Any]
    default: Any = None
    help: str = ""
    alias: str | None = None

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


KEYS = [
    Key("data", "corpus", str, None, "corpus file or session manifest"),
    Key("data", "subset", str, "all", "baseline | rotation | all"),
    Key("data", "fold", str, "s01-train-s2-test", "fold name (or test session 0/1/2)"),
    Key("data", "length", int, 250, "digraph rows per window"),
    Key("data", "stride", int, None, "window stride (default: length)"),
    Key("data", "fusion", _bool, True, "append the 7 rate features"),
    Key("data", "min_length", int, None, "drop users with a session shorter than this"),
    Key("model", "kernel_sizes", _ints, [2, 2, 2], "conv kernel sizes, one branch each"),
    Key("model", "out_channels", int, 32, "channels per conv branch"),
    Key("model", "conv_depth", int, 1, "conv blocks"),
    Key("model", "gru_hidden", int, 8, "GRU hidden size"),
    Key("model", "attention", _bool, True, "attention pooling (else last step)"),
    Key("model", "attention_dim", int, None, "attention projection size"),
    Key("model", "rate_width", int, 8, "rate branch width"),
    Key("model", "dropout", float, 0.0, "dropout before the head"),
    Key("train", "learning_rate", float, 1e-3, "AdamW learning rate", "--lr"),
    Key("train", "weight_decay", float, 1e-5, "decoupled weight decay"),
    Key("train", "milestones", _ints, [], "epochs where lr is multiplied by gamma"),
    Key("train", "gamma", float, 0.1, "lr decay factor"),
    Key("train", "epochs", int, 80, "training epochs"),
    Key("train", "batch_size", int, 32, "mini-batch size"),
    Key("train", "pos_weight", float, 1.0, "positive-class loss weight"),
    Key("train", "sampler", str, "shuffle", "shuffle | weighted"),
    Key("train", "val_fraction", float, 0.1, "held-out share of training windows"),
    Key("train", "seed", int, None, "random seed (required for stochastic stages)"),
    Key("resample", "smote_ratio", float, None, "SMOTE positives up to ratio x negatives"),
    Key("resample", "undersample_ratio", float, None, "keep floor(positives / ratio) negatives"),
    Key("resample", "k_neighbors", int, 5, "SMOTE neighbours"),
    Key("run", "selection", str, "best-val", "best-val | best-eer | last"),
    Key("run", "init", str, None, "checkpoint to start from", "--from"),
    Key("run", "freeze", _bool, False, "train only the new head"),
    Key("run", "positive_user", str, None, "restrict binary stages to one user"),
    Key("distill", "teacher", str, None, "teacher checkpoint"),
    Key("distill", "w_student", float, 0.5, "hard-label loss weight"),
    Key("distill", "w_teacher", float, 1.5, "teacher soft-label loss weight"),
    Key("ensemble", "members", _strs, None, "member checkpoints"),
]
BY_NAME = {k.name: k for k in KEYS}


def read_config(path: str | Path) -> dict[str, Any]:
    """Parse a config file into ``{key: typed value}``; unknown keys are errors.

    Relative paths are left as written (resolved against the working directory).
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        if not cp.read(path, encoding="utf-8"):
            raise ConfigError(f"cannot read config {path}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for section in cp.sections():
        for name, raw in cp.items(section):
            key = BY_NAME.get(name)
            if key is None or key.section != section:
                raise ConfigError(f"{path}: unknown key [{section}] {name}")
            try:
                out[name] = None if raw.strip().lower() == "none" else key.parse(raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: [{section}] {name}: {exc}") from None
    return out


def write_config(path: str | Path, values: dict[str, Any]) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    for k in KEYS:
        if k.name not in values or values[k.name] is None:
            continue
        v = values[k.name]
        if isinstance(v, (list, tuple)):
            v = ", ".join(str(x) for x in v)
        if not cp.has_section(k.section):
            cp.add_section(k.section)
        cp.set(k.section, k.name, str(v).lower() if isinstance(v, bool) else str(v))
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


def resolve(file_values: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Defaults < config file < explicit flags (``None`` flags are ignored)."""
    out = {k.name: k.default for k in KEYS}
    out.update({k: v for k, v in file_values.items()})
    out.update({k: v for k, v in overrides.items() if v is not None and k in BY_NAME})
    return out


def run_spec(values: dict[str, Any], task: str) -> RunSpec:
    v = values
    try:
        model = ModelConfig(length=v["length"], kernel_sizes=list(v["kernel_sizes"]),
                            out_channels=v["out_channels"], conv_depth=v["conv_depth"],
                            gru_hidden=v["gru_hidden"], attention=v["attention"],
                            attention_dim=v["attention_dim"], rate_width=v["rate_width"],
                            dropout=v["dropout"])
        train = TrainConfig(learning_rate=v["learning_rate"], weight_decay=v["weight_decay"],
                            milestones=list(v["milestones"]), gamma=v["gamma"],
                            epochs=v["epochs"], batch_size=v["batch_size"],
                            pos_weight=v["pos_weight"], sampler=v["sampler"],
                            val_fraction=v["val_fraction"], seed=v["seed"])
        resample = ResampleConfig(v["smote_ratio"], v["undersample_ratio"], v["k_neighbors"])
        return RunSpec(task=task, selection=v["selection"], fold=v["fold"], length=v["length"],
                       stride=v["stride"], fusion=v["fusion"], model=model, train=train,
                       resample=resample, init=v["init"], freeze=v["freeze"],
                       positive_user=v["positive_user"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def distill_spec(values: dict[str, Any]) -> DistillSpec:
    if not values.get("teacher"):
        raise ConfigError("distillation needs a teacher checkpoint")
    try:
        return DistillSpec(values["teacher"], run_spec(values, "binary"),
                           values["w_student"], values["w_teacher"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def ensemble_spec(values: dict[str, Any]) -> EnsembleSpec:
    try:
        return EnsembleSpec(list(values.get("members") or []))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
