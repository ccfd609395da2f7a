"""Multi-turn conversation data model and topic file I/O.

Every other module consumes :class:`Conversation` and :class:`Turn`. Both are
frozen dataclasses; updating a turn means building a new one with
:func:`dataclasses.replace`.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)

_TURN_KEY_RE = re.compile(r"^(\d+)_(\d+)$")


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def parse_turn_key(key: str) -> tuple[int, int]:
    """Split ``"<conv_id>_<turn_no>"`` into its two positive integers."""
    m = _TURN_KEY_RE.match(key.strip()) if isinstance(key, str) else None
    if m is None:
        raise DataError(f"malformed turn key {key!r}; expected '<conv_id>_<turn_no>'")
    conv_id, turn_no = int(m.group(1)), int(m.group(2))
    if conv_id < 1 or turn_no < 1:
        raise DataError(f"turn key {key!r} must use positive integers")
    return conv_id, turn_no


def format_turn_key(conv_id: int, turn_no: int) -> str:
    return f"{conv_id}_{turn_no}"


@dataclass(frozen=True)
class Turn:
    conv_id: int
    turn_no: int
    raw: str
    manual: str | None = None
    rewritten: str | None = None
    answer: str | None = None

    def __post_init__(self):
        raw = self.raw.strip() if isinstance(self.raw, str) else ""
        if not raw:
            raise DataError(f"turn {self.conv_id}_{self.turn_no}: raw utterance is empty")
        if self.conv_id < 1 or self.turn_no < 1:
            raise DataError(f"turn {self.conv_id}_{self.turn_no}: ids must be positive")
        object.__setattr__(self, "raw", raw)
        for name in ("manual", "rewritten", "answer"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, value.strip())
        if self.turn_no == 1 and self.rewritten is not None and self.rewritten != raw:
            raise DataError(
                f"turn {self.key}: first turn must be passed through unchanged")

    @property
    def key(self) -> str:
        return format_turn_key(self.conv_id, self.turn_no)


@dataclass(frozen=True)
class Conversation:
    conv_id: int
    turns: tuple[Turn, ...] = field(default_factory=tuple)

    def __post_init__(self):
        turns = tuple(self.turns)
        object.__setattr__(self, "turns", turns)
        seen = set()
        for t in turns:
            if t.conv_id != self.conv_id:
                raise DataError(
                    f"conversation {self.conv_id}: turn {t.key} belongs to conversation {t.conv_id}")
            if t.turn_no in seen:
                raise DataError(f"conversation {self.conv_id}: duplicate turn key {t.key}")
            seen.add(t.turn_no)
        expected = list(range(1, len(turns) + 1))
        if [t.turn_no for t in turns] != expected:
            raise DataError(
                f"conversation {self.conv_id}: turn numbers "
                f"{[t.turn_no for t in turns]} are not contiguous from 1")

    def __len__(self):
        return len(self.turns)

    def __iter__(self):
        return iter(self.turns)

    @property
    def has_manual(self) -> bool:
        return all(t.manual for t in self.turns)


def _conversation_from_turns(conv_id: int, turns: list[Turn]) -> Conversation:
    turns = sorted(turns, key=lambda t: t.turn_no)
    return Conversation(conv_id, tuple(turns))


def _load_json(path: Path) -> list[Conversation]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, list):
        raise DataError(f"{path}: top-level value must be an array of topics")
    conversations = []
    for topic in data:
        try:
            conv_id = int(topic["number"])
            turns = [
                Turn(conv_id, int(t["number"]), t["raw_utterance"],
                     manual=t.get("manual_utterance"))
                for t in topic["turns"]
            ]
        except (KeyError, TypeError) as exc:
            raise DataError(f"{path}: topic entry missing field {exc}") from exc
        conversations.append(_conversation_from_turns(conv_id, turns))
    return conversations


def _load_tsv(path: Path) -> list[Conversation]:
    # columns: turn_key, raw, optional manual
    grouped: dict[int, list[Turn]] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 3):
                raise DataError(f"{path}:{lineno}: expected 2 or 3 tab-separated columns")
            conv_id, turn_no = parse_turn_key(cols[0])
            manual = cols[2] if len(cols) == 3 and cols[2].strip() else None
            grouped.setdefault(conv_id, []).append(Turn(conv_id, turn_no, cols[1], manual=manual))
    return [_conversation_from_turns(cid, turns) for cid, turns in grouped.items()]


def load_topics(path, format: str = "cast-json", manual_rewrites=None) -> list[Conversation]:
    """Load conversations from a topic file.

    ``format`` is ``"cast-json"`` or ``"tsv"``. When ``manual_rewrites`` names a
    sidecar file, its entries override any inline manual utterance.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"topic file not found: {path}")
    if format == "cast-json":
        conversations = _load_json(path)
    elif format == "tsv":
        conversations = _load_tsv(path)
    else:
        raise DataError(f"unknown topic format {format!r}")
    ids = [c.conv_id for c in conversations]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise DataError(f"{path}: conversation ids repeated: {dupes}")
    if manual_rewrites is not None:
        overrides = manual_rewrites
        if not isinstance(overrides, dict):
            overrides = load_manual_rewrites(overrides)
        conversations = apply_manual_rewrites(conversations, overrides)
    return conversations


def apply_manual_rewrites(conversations: Iterable[Conversation], rewrites: dict) -> list[Conversation]:
    out = []
    for conv in conversations:
        turns = tuple(
            replace(t, manual=rewrites[t.key]) if t.key in rewrites else t
            for t in conv.turns)
        out.append(Conversation(conv.conv_id, turns))
    return out


def read_key_value_tsv(path) -> dict[str, str]:
    """Read a ``<turn_key>\\t<text>`` file; ``#`` lines are comments."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    entries: dict[str, str] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            key, sep, text = line.partition("\t")
            if not sep:
                raise DataError(f"{path}:{lineno}: expected '<turn_key>\\t<text>'")
            parse_turn_key(key)
            key = key.strip()
            if key in entries:
                raise DataError(f"{path}:{lineno}: duplicate turn key {key}")
            entries[key] = text.strip()
    return entries


def load_manual_rewrites(path) -> dict[str, str]:
    return read_key_value_tsv(path)


def write_key_value_tsv(entries: dict[str, str], path, header: str | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(f"# {header}\n")
        for key, text in entries.items():
            fh.write(f"{key}\t{' '.join(text.split())}\n")


def topics_to_json(conversations: Iterable[Conversation]) -> list[dict]:
    out = []
    for conv in conversations:
        turns = []
        for t in conv.turns:
            entry = {"number": t.turn_no, "raw_utterance": t.raw}
            if t.manual is not None:
                entry["manual_utterance"] = t.manual
            turns.append(entry)
        out.append({"number": conv.conv_id, "turns": turns})
    return out


def save_topics(conversations: Iterable[Conversation], path, format: str = "cast-json") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if format == "cast-json":
        path.write_text(json.dumps(topics_to_json(conversations), indent=2, ensure_ascii=False) + "\n",
                        encoding="utf-8")
    elif format == "tsv":
        # tabs and newlines inside utterances cannot survive the TSV layout
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for conv in conversations:
                for t in conv.turns:
                    row = [t.key, t.raw] + ([t.manual] if t.manual is not None else [])
                    fh.write("\t".join(" ".join(c.split()) if i else c
                                       for i, c in enumerate(row)) + "\n")
    else:
        raise DataError(f"unknown topic format {format!r}")


def iter_turns(conversations: Iterable[Conversation]):
    for conv in conversations:
        yield from conv.turns
