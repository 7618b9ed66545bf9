# cython: boundscheck=False, wraparound=False
"""Compiled edit-distance kernels; see patchpad.editdist for selection."""

from cpython.mem cimport PyMem_Free, PyMem_Malloc


cdef Py_ssize_t _imin3(Py_ssize_t x, Py_ssize_t y, Py_ssize_t z):
    if y < x:
        x = y
    if z < x:
        x = z
    return x


def levenshtein(str a, str b):
    """Character-level Levenshtein distance (insert/delete/substitute)."""
    if a == b:
        return 0
    cdef Py_ssize_t la = len(a), lb = len(b)
    if la < lb:
        a, b = b, a
        la, lb = lb, la
    if lb == 0:
        return la
    cdef Py_ssize_t width = lb + 1
    cdef Py_ssize_t *prev = <Py_ssize_t *> PyMem_Malloc(width * sizeof(Py_ssize_t))
    cdef Py_ssize_t *cur = <Py_ssize_t *> PyMem_Malloc(width * sizeof(Py_ssize_t))
    if prev == NULL or cur == NULL:
        PyMem_Free(prev)
        PyMem_Free(cur)
        raise MemoryError()
    cdef Py_ssize_t i, j, cost, result
    cdef Py_UCS4 ca
    cdef Py_ssize_t *tmp
    try:
        for j in range(width):
            prev[j] = j
        for i in range(1, la + 1):
            ca = a[i - 1]
            cur[0] = i
            for j in range(1, width):
                cost = prev[j - 1] + (ca != <Py_UCS4> b[j - 1])
                cur[j] = _imin3(cost, prev[j] + 1, cur[j - 1] + 1)
            tmp = prev
            prev = cur
            cur = tmp
        result = prev[lb]
    finally:
        PyMem_Free(prev)
        PyMem_Free(cur)
    return result


def damerau_levenshtein(str a, str b):
    """Restricted Damerau-Levenshtein distance (adjacent transpositions)."""
    if a == b:
        return 0
    cdef Py_ssize_t la = len(a), lb = len(b)
    if la < lb:
        a, b = b, a
        la, lb = lb, la
    if lb == 0:
        return la
    cdef Py_ssize_t width = lb + 1
    cdef Py_ssize_t *two_back = <Py_ssize_t *> PyMem_Malloc(width * sizeof(Py_ssize_t))
    cdef Py_ssize_t *prev = <Py_ssize_t *> PyMem_Malloc(width * sizeof(Py_ssize_t))
    cdef Py_ssize_t *cur = <Py_ssize_t *> PyMem_Malloc(width * sizeof(Py_ssize_t))
    if two_back == NULL or prev == NULL or cur == NULL:
        PyMem_Free(two_back)
        PyMem_Free(prev)
        PyMem_Free(cur)
        raise MemoryError()
    cdef Py_ssize_t i, j, cost, result
    cdef Py_UCS4 ca, cb
    cdef Py_ssize_t *tmp
    try:
        for j in range(width):
            two_back[j] = 0
            prev[j] = j
        for i in range(1, la + 1):
            ca = a[i - 1]
            cur[0] = i
            for j in range(1, width):
                cb = b[j - 1]
                cost = prev[j - 1] + (ca != cb)
                cost = _imin3(cost, prev[j] + 1, cur[j - 1] + 1)
                if i > 1 and j > 1 and ca == <Py_UCS4> b[j - 2] and <Py_UCS4> a[i - 2] == cb:
                    if two_back[j - 2] + 1 < cost:
                        cost = two_back[j - 2] + 1
                cur[j] = cost
            tmp = two_back
            two_back = prev
            prev = cur
            cur = tmp
        result = prev[lb]
    finally:
        PyMem_Free(two_back)
        PyMem_Free(prev)
        PyMem_Free(cur)
    return result
