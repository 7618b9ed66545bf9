"""Invertible snippet corruptions and the commands that reverse them.

Five corruption kinds, each paired with the single command undoing it:
delete_line/AddLine, add_line/DeleteLine, replace_line/ReplaceLine,
typo_word/ReplaceWord, replace_chars/ReplaceLine. Inserted and replacement
lines come from a pool harvested from other ground-truth snippets; typos are
drawn uniformly from the set of strings at Damerau-Levenshtein distance
exactly 1 from a uniformly chosen whitespace-delimited word.

ReplaceWord undoes a typo by replacing all occurrences in the line, which
fails to restore the original when the typo string collides with other text
("for i in" typo'd to "for in in" cannot be undone by replacing "in").
:func:`reject_pathological` detects this so generators can discard the
sequence.
"""

from __future__ import annotations

import random
import re
import string
from dataclasses import dataclass

from patchpad.dsl import AddLine, Command, DeleteLine, ReplaceLine, ReplaceWord
from patchpad.editor import Snippet

DELETE_LINE = "delete_line"
ADD_LINE = "add_line"
REPLACE_LINE = "replace_line"
TYPO_WORD = "typo_word"
REPLACE_CHARS = "replace_chars"

KINDS = (DELETE_LINE, ADD_LINE, REPLACE_LINE, TYPO_WORD, REPLACE_CHARS)

_PRINTABLE = "".join(chr(c) for c in range(32, 127))
_TYPO_BASE_ALPHABET = string.ascii_letters + string.digits + "_"
_WORD_RE = re.compile(r"\S+")

MAX_SAMPLE_RETRIES = 10


class Unsatisfiable(RuntimeError):
    """No applicable corruption was found within the retry budget."""


class _Retry(Exception):
    pass


@dataclass(frozen=True)
class CorruptionRecord:
    kind: str
    applied_at: int
    before: str | None
    after: str | None
    inverse: Command


@dataclass(frozen=True)
class LinePool:
    """Code lines harvested from other ground-truth snippets."""

    lines: tuple[str, ...]

    def __post_init__(self):
        if not self.lines:
            raise ValueError("line pool must not be empty")

    @classmethod
    def from_snippets(cls, snippets: list[Snippet]) -> "LinePool":
        lines = tuple(line for s in snippets for line in s.lines if line.strip())
        return cls(lines)


def typo_candidates(word: str) -> list[str]:
    """All strings at Damerau-Levenshtein distance exactly 1 from ``word``.

    Alphabet: ASCII letters, digits, underscore, plus the characters already
    in the word. Sorted for reproducible seeded sampling. May include "" for
    single-character words; such typos are never restorable by replace-all and
    get discarded by reject_pathological downstream.
    """
    alphabet = sorted(set(_TYPO_BASE_ALPHABET) | set(word))
    candidates: set[str] = set()
    for i in range(len(word)):
        candidates.add(word[:i] + word[i + 1:])
    for i in range(len(word) + 1):
        for ch in alphabet:
            candidates.add(word[:i] + ch + word[i:])
    for i in range(len(word)):
        for ch in alphabet:
            candidates.add(word[:i] + ch + word[i + 1:])
    for i in range(len(word) - 1):
        if word[i] != word[i + 1]:
            candidates.add(word[:i] + word[i + 1] + word[i] + word[i + 2:])
    candidates.discard(word)
    return sorted(candidates)


def _corrupt_once(
    kind: str, snippet: Snippet, pool: LinePool, rng: random.Random
) -> tuple[Snippet, CorruptionRecord]:
    lines = snippet.lines
    if kind == DELETE_LINE:
        at = rng.randint(1, len(lines))
        removed = lines[at - 1]
        corrupted = Snippet(lines[: at - 1] + lines[at:])
        return corrupted, CorruptionRecord(
            kind, at, before=removed, after=None, inverse=AddLine(at, removed)
        )
    if kind == ADD_LINE:
        at = rng.randint(1, len(lines) + 1)
        content = rng.choice(pool.lines)
        corrupted = Snippet(lines[: at - 1] + (content,) + lines[at - 1:])
        return corrupted, CorruptionRecord(
            kind, at, before=None, after=content, inverse=DeleteLine(at)
        )
    if kind == REPLACE_LINE:
        at = rng.randint(1, len(lines))
        original = lines[at - 1]
        content = rng.choice(pool.lines)
        corrupted = Snippet(lines[: at - 1] + (content,) + lines[at:])
        return corrupted, CorruptionRecord(
            kind, at, before=original, after=content, inverse=ReplaceLine(at, original)
        )
    if kind == TYPO_WORD:
        at = rng.randint(1, len(lines))
        original = lines[at - 1]
        words = list(_WORD_RE.finditer(original))
        if not words:
            raise _Retry()
        match = rng.choice(words)
        word = match.group()
        typo = rng.choice(typo_candidates(word))
        mutated = original[: match.start()] + typo + original[match.end():]
        corrupted = Snippet(lines[: at - 1] + (mutated,) + lines[at:])
        return corrupted, CorruptionRecord(
            kind, at, before=original, after=mutated,
            inverse=ReplaceWord(at, old=typo, new=word),
        )
    if kind == REPLACE_CHARS:
        at = rng.randint(1, len(lines))
        original = lines[at - 1]
        if not original:
            raise _Retry()
        position = rng.randrange(len(original))
        mutated = original[:position] + rng.choice(_PRINTABLE) + original[position + 1:]
        corrupted = Snippet(lines[: at - 1] + (mutated,) + lines[at:])
        return corrupted, CorruptionRecord(
            kind, at, before=original, after=mutated, inverse=ReplaceLine(at, original)
        )
    raise ValueError(f"unknown corruption kind {kind!r}")


def sample_corruption(
    snippet: Snippet, pool: LinePool, rng: random.Random
) -> tuple[Snippet, CorruptionRecord]:
    """Draw one corruption: uniform kind, uniform target, seeded and reproducible.

    Retries with a fresh kind/position when the draw is inapplicable (typo on
    a wordless line, character swap on an empty line); raises Unsatisfiable
    after MAX_SAMPLE_RETRIES attempts.
    """
    if not len(snippet):
        raise Unsatisfiable("cannot corrupt an empty snippet")
    for _ in range(MAX_SAMPLE_RETRIES):
        kind = rng.choice(KINDS)
        try:
            return _corrupt_once(kind, snippet, pool, rng)
        except _Retry:
            continue
    raise Unsatisfiable(f"no applicable corruption found in {MAX_SAMPLE_RETRIES} draws")


def reject_pathological(corrupted: Snippet, record: CorruptionRecord) -> bool:
    """True iff the record's inverse fails to restore the pre-corruption snippet.

    Only typo_word can fail: its ReplaceWord inverse replaces all occurrences
    in the line, so a colliding typo string corrupts other text on the way
    back. Positional inverses (add/delete/replace line) always restore.
    """
    if record.kind != TYPO_WORD:
        return False
    assert isinstance(record.inverse, ReplaceWord)
    line = corrupted.lines[record.applied_at - 1]
    return line.replace(record.inverse.old, record.inverse.new) != record.before
