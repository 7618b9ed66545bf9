"""Parsing and formatting for the five-command line-editing DSL.

One command per agent emission, line number first:

    ### DELL <n>
    ### ADDL <n> >>><content>
    ### REPL <n> >>><content>
    ### REPW <n> >>><old> >>><new>
    ### EXIT

An emission may carry the end-of-output suffix ";" (optionally followed by a
newline); :func:`parse` strips it before matching. Content runs from the first
``>>>`` to the end of the line with whitespace preserved, so indentation
survives the round trip. For REPW the old/new strings are split at the first
`` >>>`` occurrence; an old string containing that separator (or an empty old
string) is not representable on the wire.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

COMMAND_PREFIX = "### "


class FormatViolation(ValueError):
    """The emission does not contain exactly one well-formed DSL command."""


def _check_line_number(line: int) -> None:
    if line < 1:
        raise ValueError(f"line number must be >= 1, got {line}")


def _check_single_line(text: str, field: str) -> None:
    if "\n" in text:
        raise ValueError(f"{field} must not contain a newline")


@dataclass(frozen=True)
class AddLine:
    """Insert ``content`` at position ``line``, shifting later lines down."""

    line: int
    content: str

    def __post_init__(self):
        _check_line_number(self.line)
        _check_single_line(self.content, "content")


@dataclass(frozen=True)
class ReplaceLine:
    """Overwrite the line at position ``line`` with ``content``."""

    line: int
    content: str

    def __post_init__(self):
        _check_line_number(self.line)
        _check_single_line(self.content, "content")


@dataclass(frozen=True)
class ReplaceWord:
    """Replace every occurrence of ``old`` with ``new`` in one line."""

    line: int
    old: str
    new: str

    def __post_init__(self):
        _check_line_number(self.line)
        _check_single_line(self.old, "old")
        _check_single_line(self.new, "new")


@dataclass(frozen=True)
class DeleteLine:
    """Remove the line at position ``line``."""

    line: int

    def __post_init__(self):
        _check_line_number(self.line)


@dataclass(frozen=True)
class Exit:
    """Terminate the episode."""


Command = AddLine | ReplaceLine | ReplaceWord | DeleteLine | Exit

_NUM_CONTENT_RE = re.compile(r"(\d+) >>>(.*)\Z")
_REPW_ARGS_RE = re.compile(r"(\d+) >>>(.+?) >>>(.*)\Z")


def _parse_line_number(token: str) -> int:
    if not token.isdigit():
        raise FormatViolation(f"expected a line number, got {token!r}")
    line = int(token)
    if line < 1:
        raise FormatViolation(f"line number must be >= 1, got {line}")
    return line


def strip_eoos(text: str) -> str:
    """Remove one trailing end-of-output suffix (';' optionally + newline)."""
    if text.endswith("\n"):
        text = text[:-1]
    if text.endswith(";"):
        text = text[:-1]
    return text


def parse(action_text: str) -> Command:
    """Parse a raw agent emission into a command.

    Raises FormatViolation for anything that is not exactly one well-formed
    command; never raises anything else, whatever the input text.
    """
    text = strip_eoos(action_text)
    if "\n" in text:
        raise FormatViolation("expected a single command per emission")
    if not text.startswith(COMMAND_PREFIX):
        raise FormatViolation(f"missing {COMMAND_PREFIX!r} command prefix")
    body = text[len(COMMAND_PREFIX):]
    keyword, _, rest = body.partition(" ")

    if keyword == "EXIT":
        if body != "EXIT":
            raise FormatViolation("EXIT takes no arguments")
        return Exit()
    if keyword == "DELL":
        return DeleteLine(line=_parse_line_number(rest))
    if keyword in ("ADDL", "REPL"):
        match = _NUM_CONTENT_RE.fullmatch(rest)
        if match is None:
            raise FormatViolation(f"malformed {keyword} arguments: {rest!r}")
        line = _parse_line_number(match.group(1))
        content = match.group(2)
        if keyword == "ADDL":
            return AddLine(line=line, content=content)
        return ReplaceLine(line=line, content=content)
    if keyword == "REPW":
        match = _REPW_ARGS_RE.fullmatch(rest)
        if match is None:
            raise FormatViolation(f"malformed REPW arguments: {rest!r}")
        return ReplaceWord(
            line=_parse_line_number(match.group(1)),
            old=match.group(2),
            new=match.group(3),
        )
    raise FormatViolation(f"unknown command keyword {keyword!r}")


def format_command(cmd: Command) -> str:
    """Render a command in canonical wire form, without the eoos suffix."""
    match cmd:
        case AddLine(line=line, content=content):
            return f"### ADDL {line} >>>{content}"
        case ReplaceLine(line=line, content=content):
            return f"### REPL {line} >>>{content}"
        case ReplaceWord(line=line, old=old, new=new):
            return f"### REPW {line} >>>{old} >>>{new}"
        case DeleteLine(line=line):
            return f"### DELL {line}"
        case Exit():
            return "### EXIT"
    raise TypeError(f"not a DSL command: {cmd!r}")
