"""Patch-grid geometry: frame/patch conversions, box-to-grid alignment and
expansion, and per-patch pixel-difference sums."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from arena import _kernels
from arena.model import BBox, Frame, GreyFrame, PatchGrid, PoISet


@dataclass(frozen=True)
class GridRect:
    """Pixel rectangle whose edges lie on patch boundaries.

    May be empty (x1 == x2 or y1 == y2) when clamping a fully off-frame
    rect; an empty rect selects no patches.
    """

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError("grid rect must satisfy x1 <= x2 and y1 <= y2")

    @property
    def empty(self) -> bool:
        return self.x1 == self.x2 or self.y1 == self.y2


@dataclass(frozen=True, eq=False)
class PatchDiffMap:
    """Per-patch sums of absolute greyscale differences (each <= P^2 * 255)."""

    grid: PatchGrid
    sums: np.ndarray  # (N,) int64

    def __post_init__(self):
        if len(self.sums) != self.grid.count:
            raise ValueError("diff map length != patch count")


def patchify(frame: Frame, grid: PatchGrid) -> np.ndarray:
    """Split a frame into N patch blocks of P^2*C bytes, row-major both
    within each patch and across the grid."""
    if frame.width != grid.frame_width or frame.height != grid.frame_height:
        raise ValueError("frame dimensions do not match grid")
    p = grid.patch_size
    blocks = frame.pixels.reshape(grid.rows, p, grid.cols, p, frame.channels)
    blocks = blocks.transpose(0, 2, 1, 3, 4)  # (rows, cols, p, p, c)
    return np.ascontiguousarray(blocks.reshape(grid.count, p * p * frame.channels))


def unpatchify(blocks: np.ndarray, grid: PatchGrid, channels: int) -> np.ndarray:
    """Inverse of patchify: (N, P^2*C) blocks back to an (H, W, C) raster."""
    p = grid.patch_size
    arr = np.asarray(blocks, dtype=np.uint8).reshape(
        grid.rows, grid.cols, p, p, channels)
    arr = arr.transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(arr.reshape(
        grid.frame_height, grid.frame_width, channels))


def bbox_to_poi(b: BBox, patch_size: int) -> GridRect:
    """Align a box outward to patch boundaries.

    The max edges always extend by one patch, even when already aligned:
    x2 -> (floor(x2/P) + 1) * P.
    """
    p = patch_size
    return GridRect(
        math.floor(b.x1 / p) * p,
        math.floor(b.y1 / p) * p,
        (math.floor(b.x2 / p) + 1) * p,
        (math.floor(b.y2 / p) + 1) * p,
    )


def expand_poi(r: GridRect, m: int, frame_w: int, frame_h: int,
               patch_size: int) -> GridRect:
    """Move every edge outward by m patches, then clamp to the frame."""
    if m < 0:
        raise ValueError("margin must be >= 0")
    d = m * patch_size
    x1 = min(max(r.x1 - d, 0), frame_w)
    y1 = min(max(r.y1 - d, 0), frame_h)
    x2 = min(max(r.x2 + d, 0), frame_w)
    y2 = min(max(r.y2 + d, 0), frame_h)
    return GridRect(x1, y1, max(x1, x2), max(y1, y2))


def rect_to_indices(r: GridRect, grid: PatchGrid) -> PoISet:
    """All patch indices whose patch rectangle intersects the rect interior."""
    if r.empty:
        return PoISet(grid)
    p = grid.patch_size
    c0 = max(0, r.x1 // p)
    c1 = min(grid.cols, r.x2 // p)
    r0 = max(0, r.y1 // p)
    r1 = min(grid.rows, r.y2 // p)
    indices = [row * grid.cols + col
               for row in range(r0, r1) for col in range(c0, c1)]
    return PoISet(grid, tuple(indices))


def patch_pixel_diff(prev: GreyFrame, curr: GreyFrame,
                     grid: PatchGrid) -> PatchDiffMap:
    """Sum of |curr - prev| over each patch's pixels."""
    if (prev.width, prev.height) != (curr.width, curr.height):
        raise ValueError("frame dimensions differ")
    if prev.width != grid.frame_width or prev.height != grid.frame_height:
        raise ValueError("frame dimensions do not match grid")
    sums = _kernels.patch_diff_sums(prev.pixels, curr.pixels, grid.patch_size)
    return PatchDiffMap(grid, sums)
