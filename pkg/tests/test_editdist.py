import random
from functools import lru_cache

import pytest
from hypothesis import given
from hypothesis import strategies as st

from patchpad import _editdist_py, editdist


def reference_levenshtein(a: str, b: str) -> int:
    """Top-down memoized recursion; independent of the shipped kernels."""

    @lru_cache(maxsize=None)
    def dist(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        substitution = dist(i - 1, j - 1) + (a[i - 1] != b[j - 1])
        return min(substitution, dist(i - 1, j) + 1, dist(i, j - 1) + 1)

    return dist(len(a), len(b))


CASES = [
    ("", "", 0),
    ("abc", "", 3),
    ("", "abc", 3),
    ("kitten", "sitting", 3),
    ("flaw", "lawn", 2),
    ("range", "ronge", 1),
    ("abc", "abc", 0),
]


@pytest.mark.parametrize("a,b,expected", CASES)
def test_levenshtein_known_cases(a, b, expected):
    assert editdist.levenshtein(a, b) == expected
    assert _editdist_py.levenshtein(a, b) == expected


def test_damerau_counts_transposition_as_one():
    assert editdist.damerau_levenshtein("abcd", "abdc") == 1
    assert editdist.levenshtein("abcd", "abdc") == 2
    assert _editdist_py.damerau_levenshtein("abcd", "abdc") == 1


def test_backends_agree_on_random_pairs():
    rng = random.Random(11)
    alphabet = "abcdef _"
    for _ in range(300):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 25)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 25)))
        assert editdist.levenshtein(a, b) == _editdist_py.levenshtein(a, b)
        assert editdist.damerau_levenshtein(a, b) == _editdist_py.damerau_levenshtein(a, b)
        assert editdist.levenshtein(a, b) == reference_levenshtein(a, b)


short = st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), max_size=20)


@given(short, short)
def test_levenshtein_symmetry_and_bounds(a, b):
    d = editdist.levenshtein(a, b)
    assert d == editdist.levenshtein(b, a)
    assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))
    assert (d == 0) == (a == b)
    assert editdist.damerau_levenshtein(a, b) <= d


def test_fractional_edit_distance():
    assert editdist.fractional_edit_distance("abc", "abc") == 0.0
    assert editdist.fractional_edit_distance("", "") == 0.0
    assert editdist.fractional_edit_distance("ab", "") == 1.0
    assert 0.0 < editdist.fractional_edit_distance("abcd", "abce") < 1.0


def test_backend_reports_which_kernel_loaded():
    assert editdist.BACKEND in ("compiled", "pure")
