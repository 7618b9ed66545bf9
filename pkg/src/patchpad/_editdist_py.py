"""Pure-Python edit-distance kernels.

Fallback used when the compiled extension is unavailable; same contract as
patchpad._speedups.
"""

from __future__ import annotations


def levenshtein(a: str, b: str) -> int:
    """Character-level Levenshtein distance (insert/delete/substitute)."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = previous[j - 1] + (ca != cb)
            current.append(min(cost, previous[j] + 1, current[-1] + 1))
        previous = current
    return previous[-1]


def damerau_levenshtein(a: str, b: str) -> int:
    """Restricted Damerau-Levenshtein distance (adjacent transpositions)."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    width = len(b) + 1
    two_back = [0] * width
    previous = list(range(width))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = previous[j - 1] + (ca != cb)
            cost = min(cost, previous[j] + 1, current[-1] + 1)
            if i > 1 and j > 1 and ca == b[j - 2] and a[i - 2] == cb:
                cost = min(cost, two_back[j - 2] + 1)
            current.append(cost)
        two_back, previous = previous, current
    return previous[-1]
