"""Edit-distance front end: compiled kernel when present, pure Python otherwise."""

from __future__ import annotations

try:
    from patchpad._speedups import damerau_levenshtein, levenshtein

    BACKEND = "compiled"
except ImportError:  # extension not built; same contract, slower
    from patchpad._editdist_py import damerau_levenshtein, levenshtein

    BACKEND = "pure"

__all__ = ["BACKEND", "damerau_levenshtein", "fractional_edit_distance", "levenshtein"]


def fractional_edit_distance(a: str, b: str) -> float:
    """Levenshtein distance normalized by the longer text length, in [0, 1]."""
    return levenshtein(a, b) / max(1, len(a), len(b))
