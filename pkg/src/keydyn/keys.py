"""Fixed key-name <-> integer id table.

Names follow the .NET ``Keys`` enumeration used by common Windows keyloggers
(the format the free-text logs are recorded in). Ids are positional and must
never be reordered: checkpoints and corpus files store raw ids.
"""

from __future__ import annotations

_LETTERS = [chr(c) for c in range(ord("A"), ord("Z") + 1)]
_DIGITS = [f"D{i}" for i in range(10)]
_FUNCTION = [f"F{i}" for i in range(1, 13)]
_NUMPAD = [f"NumPad{i}" for i in range(10)]
_OTHER = [
    "Space", "Return", "Back", "Delete", "Tab", "Capital", "RCapital",
    "LShiftKey", "RShiftKey", "ShiftKey", "LControlKey", "RControlKey",
    "ControlKey", "LMenu", "RMenu", "LWin", "RWin", "Escape",
    "Left", "Right", "Up", "Down", "Home", "End", "PageUp", "Next", "Insert",
    "Oemcomma", "OemPeriod", "OemQuestion", "Oem1", "Oem7", "OemOpenBrackets",
    "Oem6", "Oem5", "OemMinus", "Oemplus", "Oemtilde", "Multiply", "Add",
    "Subtract", "Divide", "Decimal", "NumLock", "Scroll", "PrintScreen",
]

KEY_NAMES: tuple[str, ...] = tuple(
    _LETTERS + _DIGITS + _FUNCTION + _NUMPAD + _OTHER + ["UNKNOWN"]
)
KEY_TABLE_SIZE = len(KEY_NAMES)
UNKNOWN_ID = KEY_TABLE_SIZE - 1
KEY_TABLE_VERSION = 1

_NAME_TO_ID = {name: i for i, name in enumerate(KEY_NAMES)}
_LOWER_TO_ID = {name.lower(): i for i, name in enumerate(KEY_NAMES)}

assert KEY_TABLE_SIZE == 105

# Key names counted by each rate feature, in feature order.
RATE_KEYS: dict[str, frozenset[str]] = {
    "delete": frozenset({"Back", "Delete"}),
    "lshift": frozenset({"LShiftKey", "ShiftKey"}),
    "rshift": frozenset({"RShiftKey"}),
    "lcaps": frozenset({"Capital"}),
    "rcaps": frozenset({"RCapital"}),
    "control": frozenset({"LControlKey", "RControlKey", "ControlKey"}),
    "arrow": frozenset({"Left", "Right"}),
}
RATE_NAMES: tuple[str, ...] = tuple(RATE_KEYS)


def key_id(name: str) -> int:
    """Id for a key name; case-insensitive fallback, UNKNOWN otherwise."""
    try:
        return _NAME_TO_ID[name]
    except KeyError:
        return _LOWER_TO_ID.get(name.lower(), UNKNOWN_ID)


def key_name(kid: int) -> str:
    return KEY_NAMES[kid]


def rate_key_ids() -> list[frozenset[int]]:
    return [frozenset(_NAME_TO_ID[n] for n in RATE_KEYS[r]) for r in RATE_NAMES]
