"""Numpy implementations of the pixel-level kernels.

These are the import-time fallback for the compiled core. Both backends
must produce bit-identical outputs: all arithmetic is integer (the luma
weights are exact thousandths, SAD and tie-breaking are pure ints), so
there is no float rounding to diverge on.
"""

from __future__ import annotations

import numpy as np

_SAD_INF = np.int64(2 ** 62)


def luma_u8(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma with round-half-up: (299R + 587G + 114B + 500) // 1000."""
    r = rgb[:, :, 0].astype(np.int32)
    g = rgb[:, :, 1].astype(np.int32)
    b = rgb[:, :, 2].astype(np.int32)
    return ((299 * r + 587 * g + 114 * b + 500) // 1000).astype(np.uint8)


def patch_diff_sums(a: np.ndarray, b: np.ndarray, patch: int) -> np.ndarray:
    """Per-patch sums of absolute greyscale differences, row-major patches."""
    h, w = a.shape
    rows, cols = h // patch, w // patch
    diff = np.abs(a.astype(np.int32) - b.astype(np.int32))
    sums = diff.reshape(rows, patch, cols, patch).sum(axis=(1, 3), dtype=np.int64)
    return sums.reshape(rows * cols)


def block_match(a: np.ndarray, b: np.ndarray, block: int, radius: int) -> np.ndarray:
    """Exhaustive integer block matching of ``a`` blocks against ``b``.

    For every non-overlapping block of ``a``, searches displacements
    (dx, dy) in [-radius, radius]^2 whose window stays inside ``b`` and
    returns the one minimizing (SAD, dx^2 + dy^2, dy, dx) lexicographically.
    Output is (rows, cols, 2) int32 with [..., 0] = dx and [..., 1] = dy.
    """
    h, w = a.shape
    rows, cols = h // block, w // block
    ai = a.astype(np.int32)
    bi = b.astype(np.int32)

    best_sad = np.full((rows, cols), _SAD_INF, dtype=np.int64)
    best_mag = np.zeros((rows, cols), dtype=np.int64)
    best_dy = np.zeros((rows, cols), dtype=np.int64)
    best_dx = np.zeros((rows, cols), dtype=np.int64)

    col_start = np.arange(cols) * block
    row_start = np.arange(rows) * block
    for dy in range(-radius, radius + 1):
        row_ok = (row_start + dy >= 0) & (row_start + block + dy <= h)
        if not row_ok.any():
            continue
        for dx in range(-radius, radius + 1):
            col_ok = (col_start + dx >= 0) & (col_start + block + dx <= w)
            if not col_ok.any():
                continue
            y0, y1 = max(0, -dy), min(h, h - dy)
            x0, x1 = max(0, -dx), min(w, w - dx)
            diff = np.zeros((h, w), dtype=np.int32)
            diff[y0:y1, x0:x1] = np.abs(
                ai[y0:y1, x0:x1] - bi[y0 + dy:y1 + dy, x0 + dx:x1 + dx])
            sad = diff.reshape(rows, block, cols, block).sum(axis=(1, 3), dtype=np.int64)
            sad[~row_ok, :] = _SAD_INF
            sad[:, ~col_ok] = _SAD_INF
            mag = np.int64(dx * dx + dy * dy)
            better = (sad < best_sad) | (
                (sad == best_sad) & (
                    (mag < best_mag) | (
                        (mag == best_mag) & (
                            (dy < best_dy) | ((dy == best_dy) & (dx < best_dx))))))
            best_sad = np.where(better, sad, best_sad)
            best_mag = np.where(better, mag, best_mag)
            best_dy = np.where(better, dy, best_dy)
            best_dx = np.where(better, dx, best_dx)

    out = np.empty((rows, cols, 2), dtype=np.int32)
    out[:, :, 0] = best_dx
    out[:, :, 1] = best_dy
    return out
