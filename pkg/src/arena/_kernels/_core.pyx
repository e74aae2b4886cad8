# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pixel-level kernels.

Mirrors arena._kernels._numpy exactly; all arithmetic is integer so the two
backends agree bit-for-bit. See that module for the contract docs.
"""

import numpy as np


def luma_u8(const unsigned char[:, :, ::1] rgb):
    cdef Py_ssize_t h = rgb.shape[0], w = rgb.shape[1]
    cdef Py_ssize_t y, x
    out_arr = np.empty((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    with nogil:
        for y in range(h):
            for x in range(w):
                out[y, x] = <unsigned char>(
                    (299 * rgb[y, x, 0] + 587 * rgb[y, x, 1]
                     + 114 * rgb[y, x, 2] + 500) // 1000)
    return out_arr


def patch_diff_sums(const unsigned char[:, ::1] a,
                    const unsigned char[:, ::1] b, Py_ssize_t patch):
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1]
    cdef Py_ssize_t rows = h // patch, cols = w // patch
    cdef Py_ssize_t r, c, y, x
    cdef long long s, d
    out_arr = np.empty(rows * cols, dtype=np.int64)
    cdef long long[::1] out = out_arr
    with nogil:
        for r in range(rows):
            for c in range(cols):
                s = 0
                for y in range(r * patch, (r + 1) * patch):
                    for x in range(c * patch, (c + 1) * patch):
                        d = <long long>a[y, x] - <long long>b[y, x]
                        s += d if d >= 0 else -d
                out[r * cols + c] = s
    return out_arr


def block_match(const unsigned char[:, ::1] a, const unsigned char[:, ::1] b,
                Py_ssize_t block, Py_ssize_t radius):
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1]
    cdef Py_ssize_t rows = h // block, cols = w // block
    cdef Py_ssize_t r, c, y0, x0, y, x, dy, dx
    cdef long long sad, d, mag
    cdef long long best_sad, best_mag, best_dy, best_dx
    out_arr = np.empty((rows, cols, 2), dtype=np.int32)
    cdef int[:, :, ::1] out = out_arr
    with nogil:
        for r in range(rows):
            for c in range(cols):
                y0 = r * block
                x0 = c * block
                # seed with the always-valid zero displacement so the
                # early exit prunes aggressively on static content
                best_sad = 0
                for y in range(block):
                    for x in range(block):
                        d = <long long>a[y0 + y, x0 + x] - <long long>b[y0 + y, x0 + x]
                        best_sad += d if d >= 0 else -d
                best_mag = 0
                best_dy = 0
                best_dx = 0
                for dy in range(-radius, radius + 1):
                    if y0 + dy < 0 or y0 + block + dy > h:
                        continue
                    for dx in range(-radius, radius + 1):
                        if x0 + dx < 0 or x0 + block + dx > w:
                            continue
                        sad = 0
                        for y in range(block):
                            for x in range(block):
                                d = (<long long>a[y0 + y, x0 + x]
                                     - <long long>b[y0 + y + dy, x0 + x + dx])
                                sad += d if d >= 0 else -d
                            if sad > best_sad:
                                # cannot win or tie anymore
                                break
                        if sad > best_sad:
                            continue
                        mag = <long long>(dx * dx + dy * dy)
                        if sad < best_sad or (sad == best_sad and (
                                mag < best_mag or (mag == best_mag and (
                                    dy < best_dy or (dy == best_dy
                                                     and dx < best_dx))))):
                            best_sad = sad
                            best_mag = mag
                            best_dy = dy
                            best_dx = dx
                out[r, c, 0] = <int>best_dx
                out[r, c, 1] = <int>best_dy
    return out_arr
