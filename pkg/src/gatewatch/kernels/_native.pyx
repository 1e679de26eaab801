# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel implementations (see _fallback.py for the contract)."""

import numpy as np


def lbp_code_image(const unsigned char[:, ::1] gray):
    cdef Py_ssize_t h = gray.shape[0]
    cdef Py_ssize_t w = gray.shape[1]
    out = np.zeros((h - 2, w - 2), dtype=np.uint8)
    cdef unsigned char[:, ::1] codes = out
    cdef Py_ssize_t r, c
    cdef unsigned char center
    for r in range(1, h - 1):
        for c in range(1, w - 1):
            center = gray[r, c]
            codes[r - 1, c - 1] = (
                (gray[r - 1, c - 1] >= center)
                | ((gray[r - 1, c] >= center) << 1)
                | ((gray[r - 1, c + 1] >= center) << 2)
                | ((gray[r, c + 1] >= center) << 3)
                | ((gray[r + 1, c + 1] >= center) << 4)
                | ((gray[r + 1, c] >= center) << 5)
                | ((gray[r + 1, c - 1] >= center) << 6)
                | ((gray[r, c - 1] >= center) << 7)
            )
    return out


def count_exceeding(const unsigned char[:, ::1] a, const unsigned char[:, ::1] b, int delta):
    cdef Py_ssize_t h = a.shape[0]
    cdef Py_ssize_t w = a.shape[1]
    cdef Py_ssize_t r, c
    cdef long long count = 0
    cdef int diff
    for r in range(h):
        for c in range(w):
            diff = a[r, c] - b[r, c]
            diff = diff if diff >= 0 else -diff
            count += diff > delta
    return count
