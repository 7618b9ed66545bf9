"""Immutable code snippets and the line-marked rendering shown to agents.

A snippet is an ordered sequence of newline-free lines. Rendering prefixes
each line with ``L`` and a right-aligned line number (field width 2, growing
for snippets over 99 lines); blank lines carry no trailing space after the
marker so rendered text is byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass

from patchpad.dsl import AddLine, Command, DeleteLine, Exit, ReplaceLine, ReplaceWord


class LineOutOfRange(IndexError):
    """An edit addressed a line that does not exist; the snippet is unchanged."""

    def __init__(self, line: int, length: int):
        super().__init__(f"line {line} out of range for a {length}-line snippet")
        self.line = line
        self.length = length


class MarkerFormatError(ValueError):
    """Text does not conform to the line-marked rendering."""


@dataclass(frozen=True)
class Snippet:
    lines: tuple[str, ...] = ()

    def __post_init__(self):
        for line in self.lines:
            if "\n" in line:
                raise ValueError("snippet lines must not contain newlines")

    @classmethod
    def from_text(cls, text: str) -> "Snippet":
        return cls(tuple(text.split("\n"))) if text else cls()

    def to_text(self) -> str:
        return "\n".join(self.lines)

    def __len__(self) -> int:
        return len(self.lines)


def _marker_width(line_count: int) -> int:
    return max(2, len(str(line_count)))


def render(snippet: Snippet) -> str:
    """Render the snippet with ``L <n>`` markers, one line per snippet line."""
    width = _marker_width(len(snippet))
    rows = []
    for number, content in enumerate(snippet.lines, start=1):
        marker = f"L {number:>{width}}"
        rows.append(f"{marker} {content}" if content else marker)
    return "\n".join(rows)


def strip_markers(marked: str) -> Snippet:
    """Invert :func:`render`, tolerating stripped trailing space on blank lines."""
    if marked == "":
        return Snippet()
    rows = marked.split("\n")
    width = _marker_width(len(rows))
    lines = []
    for number, row in enumerate(rows, start=1):
        marker = f"L {number:>{width}}"
        if row == marker or row == marker + " ":
            lines.append("")
        elif row.startswith(marker + " "):
            lines.append(row[len(marker) + 1:])
        else:
            raise MarkerFormatError(f"line {number}: malformed marker in {row!r}")
    return Snippet(tuple(lines))


def apply_edit(snippet: Snippet, cmd: Command) -> Snippet:
    """Apply one editing command, returning a new snippet.

    Raises LineOutOfRange when the addressed line does not exist (AddLine may
    address len+1 to append); the input snippet is never mutated.
    """
    if isinstance(cmd, Exit):
        raise ValueError("Exit is not an edit")
    lines = snippet.lines
    index = cmd.line - 1
    if isinstance(cmd, AddLine):
        if not 0 <= index <= len(lines):
            raise LineOutOfRange(cmd.line, len(lines))
        return Snippet(lines[:index] + (cmd.content,) + lines[index:])
    if not 0 <= index < len(lines):
        raise LineOutOfRange(cmd.line, len(lines))
    if isinstance(cmd, ReplaceLine):
        return Snippet(lines[:index] + (cmd.content,) + lines[index + 1:])
    if isinstance(cmd, DeleteLine):
        return Snippet(lines[:index] + lines[index + 1:])
    if isinstance(cmd, ReplaceWord):
        # Replace-all within the addressed line only.
        return Snippet(
            lines[:index] + (lines[index].replace(cmd.old, cmd.new),) + lines[index + 1:]
        )
    raise TypeError(f"not a DSL command: {cmd!r}")
