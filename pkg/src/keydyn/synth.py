"""Synthetic free-text keystroke corpora with controllable per-user timing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import keys
from .ingest import Corpus, ManifestEntry, Subset, parse_session, write_manifest

# one representative key per rate feature, in rate order
_SPECIAL = [["Back"], ["LShiftKey"], ["RShiftKey"], ["Capital"], ["RCapital"],
            ["LControlKey"], ["Left", "Right"]]
_TEXT_KEYS = keys.KEY_NAMES[:26] + ("Space", "Oemcomma", "OemPeriod", "Return")


def _base_key_dist() -> np.ndarray:
    # rough Zipf over text keys; Space most frequent
    ranks = np.arange(1, len(_TEXT_KEYS) + 1, dtype=np.float64)
    p = 1.0 / ranks ** 0.8
    p = np.roll(p, _TEXT_KEYS.index("Space"))
    return p / p.sum()


@dataclass
class UserProfile:
    user_id: str
    hold_mean: float
    hold_std: float
    gap_mean: float
    gap_std: float
    propensities: list[float] = field(default_factory=lambda: [0.0] * len(keys.RATE_NAMES))
    key_dist: list[float] | None = None
    seed: int = 0

    def __post_init__(self):
        if min(self.hold_mean, self.gap_mean) <= 0:
            raise ValueError("profile means must be > 0")
        if len(self.propensities) != len(keys.RATE_NAMES):
            raise ValueError("need one propensity per rate feature")
        if any(not 0 <= p <= 1 for p in self.propensities) or sum(self.propensities) > 1:
            raise ValueError("propensities must lie in [0, 1] and sum to at most 1")


def _lognormal(rng, mean, std, size):
    s2 = math.log1p((std / mean) ** 2)
    return rng.lognormal(math.log(mean) - s2 / 2, math.sqrt(s2), size)


def make_profiles(n_users: int, seed: int, separation: float = 30.0, hold_base: float = 70.0,
                  hold_std: float = 20.0, gap_mean: float = 160.0, gap_std: float = 60.0,
                  gap_spread: float = 40.0, max_propensity: float = 0.1,
                  key_jitter: float = 0.05) -> list[UserProfile]:
    """Profiles whose mean hold times are ``separation`` ms apart (shuffled order).

    Rate propensities are drawn per user in [0, max_propensity / 7 * 2]; key
    preferences are a shared distribution perturbed by ``key_jitter``.
    """
    if n_users < 2:
        raise ValueError("need at least 2 profiles")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_users)
    base = _base_key_dist()
    out = []
    for i in range(n_users):
        props = rng.uniform(0, 2 * max_propensity / len(_SPECIAL), len(_SPECIAL))
        dist = base * np.exp(key_jitter * rng.standard_normal(len(base)))
        out.append(UserProfile(
            user_id=f"u{i:03d}",
            hold_mean=hold_base + separation * order[i],
            hold_std=hold_std,
            gap_mean=gap_mean + rng.uniform(-gap_spread, gap_spread),
            gap_std=gap_std,
            propensities=[float(p) for p in props],
            key_dist=(dist / dist.sum()).tolist(),
            seed=int(rng.integers(2**31)),
        ))
    return out


def render_session(profile: UserProfile, session_index: int, n_presses: int,
                   drift: float = 0.03) -> str:
    """Raw log text for one session of ``n_presses`` key presses."""
    rng = np.random.default_rng([profile.seed, session_index])
    scale = 1.0 + drift * rng.standard_normal()
    holds = np.maximum(1, np.rint(_lognormal(rng, profile.hold_mean * scale,
                                             profile.hold_std, n_presses))).astype(int)
    gaps = np.maximum(1, np.rint(_lognormal(rng, profile.gap_mean, profile.gap_std,
                                            n_presses))).astype(int)
    downs = 1000 + np.cumsum(gaps)
    dist = np.asarray(profile.key_dist if profile.key_dist is not None else _base_key_dist())
    text_keys = rng.choice(len(_TEXT_KEYS), size=n_presses, p=dist / dist.sum())
    cum = np.cumsum(profile.propensities)
    draw = rng.random(n_presses)
    names = []
    for j in range(n_presses):
        cat = int(np.searchsorted(cum, draw[j], side="right"))
        if cat < len(_SPECIAL):
            opts = _SPECIAL[cat]
            names.append(opts[j % len(opts)])
        else:
            names.append(_TEXT_KEYS[text_keys[j]])
    # Up before Down at equal timestamps keeps back-to-back repeats paired
    events = [(int(d), 1, f"{n} KeyDown {d}") for n, d in zip(names, downs)]
    events += [(int(d + h), 0, f"{n} KeyUp {d + h}") for n, d, h in zip(names, downs, holds)]
    events.sort(key=lambda e: (e[0], e[1]))
    return "".join(line + "\n" for _, _, line in events)


def render(profiles: list[UserProfile], sessions: int = 3, presses_per_session: int = 600,
           rotation: bool = False, drift: float = 0.03):
    """Raw session texts keyed by file name, plus manifest entries."""
    if len(profiles) < 2:
        raise ValueError("need at least 2 profiles")
    files, entries = {}, []
    subset = Subset.ROTATION if rotation else Subset.BASELINE
    for p in profiles:
        for s in range(sessions):
            name = f"{p.user_id}_{s}.txt"
            files[name] = render_session(p, s, presses_per_session, drift)
            tag = f"kb{s}" if rotation else "kb0"
            entries.append(ManifestEntry(name, p.user_id, s, tag, subset))
    return files, entries


def generate(profiles: list[UserProfile], sessions: int = 3, presses_per_session: int = 600,
             rotation: bool = False, drift: float = 0.03) -> Corpus:
    files, entries = render(profiles, sessions, presses_per_session, rotation, drift)
    recs = [parse_session(files[e.path], e.user_id, e.session_index, e.keyboard_tag)
            for e in entries]
    subset = Subset.ROTATION if rotation else Subset.BASELINE
    return Corpus(subset, recs, keys.KEY_NAMES, {e.user_id: e.subset for e in entries})


def write(out_dir: str | Path, profiles: list[UserProfile], sessions: int = 3,
          presses_per_session: int = 600, rotation: bool = False,
          drift: float = 0.03) -> Path:
    """Write raw logs and ``manifest.txt`` into ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files, entries = render(profiles, sessions, presses_per_session, rotation, drift)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
    write_manifest(out / "manifest.txt", entries)
    return out / "manifest.txt"
