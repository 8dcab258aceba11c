"""Raw keystroke-log parsing, corpus assembly and session folds."""

from __future__ import annotations

import enum
import io
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from . import keys

log = logging.getLogger(__name__)

CORPUS_MAGIC = "keydyn-corpus"
CORPUS_VERSION = 1
MANIFEST_MAGIC = "# keydyn-manifest v1"


class ParseError(ValueError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno


class Action(enum.Enum):
    DOWN = "KeyDown"
    UP = "KeyUp"


class Subset(enum.Enum):
    BASELINE = "baseline"
    ROTATION = "rotation"
    ALL = "all"


@dataclass(frozen=True)
class KeyEvent:
    key_id: int
    action: Action
    timestamp_ms: int


@dataclass(frozen=True)
class KeyPress:
    key_id: int
    down_ms: int
    up_ms: int

    @property
    def hold_ms(self) -> int:
        return self.up_ms - self.down_ms


@dataclass(frozen=True)
class SessionRecord:
    user_id: str
    session_index: int
    keyboard_tag: str = ""
    presses: tuple[KeyPress, ...] = ()
    discarded_up: int = 0
    discarded_down: int = 0

    def __len__(self) -> int:
        return len(self.presses)


@dataclass
class Corpus:
    subset: Subset
    sessions: list[SessionRecord]
    key_table: tuple[str, ...] = keys.KEY_NAMES
    subset_of: dict[str, Subset] = field(default_factory=dict)

    def users(self) -> list[str]:
        return sorted({s.user_id for s in self.sessions})

    def by_user(self) -> dict[str, dict[int, SessionRecord]]:
        out: dict[str, dict[int, SessionRecord]] = defaultdict(dict)
        for s in self.sessions:
            out[s.user_id][s.session_index] = s
        return dict(out)


def parse_events(raw_text: str) -> list[KeyEvent]:
    events = []
    for lineno, line in enumerate(raw_text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(lineno, line, "expected '<key> <KeyDown|KeyUp> <ms>'")
        name, action, ts = parts
        try:
            act = Action(action)
        except ValueError:
            raise ParseError(lineno, line, f"unknown action {action!r}") from None
        try:
            t = int(ts)
        except ValueError:
            raise ParseError(lineno, line, f"bad timestamp {ts!r}") from None
        if t < 0:
            raise ParseError(lineno, line, "negative timestamp")
        events.append(KeyEvent(keys.key_id(name), act, t))
    # stable sort keeps file order among equal timestamps
    events.sort(key=lambda e: e.timestamp_ms)
    return events


def pair_events(events: Iterable[KeyEvent]) -> tuple[list[KeyPress], int, int]:
    """Match every Up to the most recent pending Down of the same key.

    Returns (presses sorted by down time, discarded Ups, discarded Downs).
    """
    pending: dict[int, list[int]] = defaultdict(list)
    presses = []
    bad_up = 0
    for ev in events:
        if ev.action is Action.DOWN:
            pending[ev.key_id].append(ev.timestamp_ms)
        elif pending[ev.key_id]:
            down = pending[ev.key_id].pop()
            presses.append(KeyPress(ev.key_id, down, ev.timestamp_ms))
        else:
            bad_up += 1
    bad_down = sum(len(v) for v in pending.values())
    presses.sort(key=lambda p: (p.down_ms, p.up_ms, p.key_id))
    return presses, bad_up, bad_down


def parse_session(raw_text: str, user_id: str, session_index: int,
                  keyboard_tag: str = "") -> SessionRecord:
    presses, bad_up, bad_down = pair_events(parse_events(raw_text))
    if bad_up or bad_down:
        log.warning("user %s session %d: discarded %d Up / %d Down events",
                    user_id, session_index, bad_up, bad_down)
    return SessionRecord(user_id, session_index, keyboard_tag, tuple(presses),
                         bad_up, bad_down)


def serialize_session(session: SessionRecord) -> str:
    """Raw-log text for the session's presses (discarded events are lost)."""
    events = []
    for p in session.presses:
        name = keys.key_name(p.key_id)
        # Up sorts before Down at equal time so back-to-back repeats re-pair
        events.append((p.down_ms, 1, f"{name} KeyDown {p.down_ms}"))
        events.append((p.up_ms, 0 if p.up_ms > p.down_ms else 2, f"{name} KeyUp {p.up_ms}"))
    events.sort(key=lambda e: (e[0], e[1]))
    return "".join(line + "\n" for _, _, line in events)


# -- manifests ---------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    path: str
    user_id: str
    session_index: int
    keyboard_tag: str
    subset: Subset


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    """Manifest lines: ``<file> <user_id> <session> <keyboard_tag> <subset>``."""
    entries = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ParseError(lineno, line, "expected 5 manifest fields")
        f, user, sess, tag, subset = parts
        entries.append(ManifestEntry(f, user, int(sess), tag, Subset(subset)))
    return entries


def write_manifest(path: str | Path, entries: Iterable[ManifestEntry]) -> None:
    lines = [MANIFEST_MAGIC]
    for e in entries:
        lines.append(f"{e.path} {e.user_id} {e.session_index} {e.keyboard_tag} {e.subset.value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_corpus(manifest: str | Path, subset: Subset = Subset.ALL) -> Corpus:
    """Parse every session listed in a manifest; paths resolve relative to it."""
    root = Path(manifest).parent
    sessions = []
    subset_of: dict[str, Subset] = {}
    seen: set[tuple[str, int]] = set()
    for e in read_manifest(manifest):
        if subset is not Subset.ALL and e.subset is not subset:
            continue
        if (e.user_id, e.session_index) in seen:
            raise ValueError(f"duplicate session {e.session_index} for user {e.user_id}")
        seen.add((e.user_id, e.session_index))
        raw = (root / e.path).read_text(encoding="utf-8")
        sessions.append(parse_session(raw, e.user_id, e.session_index, e.keyboard_tag))
        subset_of[e.user_id] = e.subset
    return Corpus(subset, sessions, keys.KEY_NAMES, subset_of)


def check_subset_tags(corpus: Corpus) -> list[str]:
    """Users whose keyboard tags disagree with their subset."""
    bad = []
    for user, sess in corpus.by_user().items():
        tags = {s.keyboard_tag for s in sess.values()}
        sub = corpus.subset_of.get(user)
        if sub is Subset.BASELINE and len(tags) != 1:
            bad.append(user)
        elif sub is Subset.ROTATION and len(tags) != len(sess):
            bad.append(user)
    return bad


# -- canonical corpus file ---------------------------------------------------
#
#   keydyn-corpus 1
#   subset <baseline|rotation|all>
#   keytable <n> <name0> <name1> ...
#   user <user_id> <subset>                      (one per user)
#   session <user_id> <idx> <tag> <n_presses> <discarded_up> <discarded_down>
#   <key_id> <down_ms> <up_ms>                   (n_presses lines)

def dump_corpus(corpus: Corpus) -> str:
    out = io.StringIO()
    out.write(f"{CORPUS_MAGIC} {CORPUS_VERSION}\n")
    out.write(f"subset {corpus.subset.value}\n")
    out.write(f"keytable {len(corpus.key_table)} {' '.join(corpus.key_table)}\n")
    for user, sub in sorted(corpus.subset_of.items()):
        out.write(f"user {user} {sub.value}\n")
    for s in corpus.sessions:
        tag = s.keyboard_tag or "-"
        out.write(f"session {s.user_id} {s.session_index} {tag} {len(s.presses)} "
                  f"{s.discarded_up} {s.discarded_down}\n")
        for p in s.presses:
            out.write(f"{p.key_id} {p.down_ms} {p.up_ms}\n")
    return out.getvalue()


def loads_corpus(text: str) -> Corpus:
    lines = iter(text.splitlines())
    head = next(lines).split()
    if head[0] != CORPUS_MAGIC or int(head[1]) != CORPUS_VERSION:
        raise ValueError(f"not a version-{CORPUS_VERSION} corpus file")
    subset = Subset(next(lines).split()[1])
    kt = next(lines).split()
    table = tuple(kt[2:])
    if len(table) != int(kt[1]):
        raise ValueError("key table length mismatch")
    if table != keys.KEY_NAMES:
        raise ValueError("corpus key table differs from this build's table")
    sessions = []
    subset_of = {}
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "user":
            subset_of[parts[1]] = Subset(parts[2])
        elif parts[0] == "session":
            user, idx, tag, n, bu, bd = parts[1:]
            presses = []
            for _ in range(int(n)):
                k, d, u = next(lines).split()
                presses.append(KeyPress(int(k), int(d), int(u)))
            sessions.append(SessionRecord(user, int(idx), "" if tag == "-" else tag,
                                          tuple(presses), int(bu), int(bd)))
        else:
            raise ValueError(f"unexpected corpus record {parts[0]!r}")
    return Corpus(subset, sessions, table, subset_of)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(dump_corpus(corpus), encoding="utf-8")


def read_corpus(path: str | Path) -> Corpus:
    return loads_corpus(Path(path).read_text(encoding="utf-8"))


# -- folds and filters ---------------------------------------------------------

@dataclass(frozen=True)
class Fold:
    train_sessions: tuple[int, int]
    test_session: int

    @property
    def name(self) -> str:
        a, b = self.train_sessions
        return f"s{a}{b}-train-s{self.test_session}-test"


FOLDS = (Fold((1, 2), 0), Fold((0, 2), 1), Fold((0, 1), 2))


def fold_by_name(name: str) -> Fold:
    for f in FOLDS:
        if name in (f.name, f"s{f.test_session}", str(f.test_session)):
            return f
    raise ValueError(f"unknown fold {name!r}")


def complete_users(corpus: Corpus) -> tuple[list[str], list[str]]:
    """Split users into (having sessions 0,1,2, missing some)."""
    ok, dropped = [], []
    for user, sess in sorted(corpus.by_user().items()):
        (ok if set(sess) == {0, 1, 2} else dropped).append(user)
    return ok, dropped


def build_folds(corpus: Corpus):
    """Three leave-one-session-out folds over users having all 3 sessions.

    Returns ``(folds, excluded_users)`` where each fold is
    ``(fold, train_sessions, test_sessions)``.
    """
    ok, dropped = complete_users(corpus)
    if dropped:
        log.warning("excluding users without 3 sessions: %s", ", ".join(dropped))
    by_user = corpus.by_user()
    folds = []
    for f in FOLDS:
        train = [by_user[u][i] for u in ok for i in f.train_sessions]
        test = [by_user[u][f.test_session] for u in ok]
        folds.append((f, train, test))
    return folds, dropped


def min_length_filter(corpus: Corpus, threshold: int) -> tuple[Corpus, list[str]]:
    """Drop users whose shortest session has fewer than ``threshold`` presses."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    shortest: dict[str, int] = {}
    for s in corpus.sessions:
        shortest[s.user_id] = min(shortest.get(s.user_id, len(s)), len(s))
    removed = sorted(u for u, n in shortest.items() if n < threshold)
    gone = set(removed)
    kept = replace(corpus,
                   sessions=[s for s in corpus.sessions if s.user_id not in gone],
                   subset_of={u: v for u, v in corpus.subset_of.items() if u not in gone})
    return kept, removed
