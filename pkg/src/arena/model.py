"""Core domain types and pixel-level primitives shared by every module.

All types here are immutable values after construction (pixel arrays are
marked read-only), so they can be shared freely across sessions and threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from arena import _kernels


def _frozen_u8(pixels, shape) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(pixels, dtype=np.uint8).reshape(shape))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Frame:
    """Raw captured raster: row-major 8-bit pixels, interleaved when RGB."""

    frame_id: int
    width: int
    height: int
    channels: int
    pixels: np.ndarray  # (height, width, channels) uint8, read-only

    def __post_init__(self):
        if self.frame_id < 0:
            raise ValueError("frame_id must be >= 0")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("frame dimensions must be positive")
        expected = self.height * self.width * self.channels
        if np.asarray(self.pixels).size != expected:
            raise ValueError(
                f"pixel count {np.asarray(self.pixels).size} != "
                f"width*height*channels = {expected}")
        object.__setattr__(self, "pixels", _frozen_u8(
            self.pixels, (self.height, self.width, self.channels)))

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes()


@dataclass(frozen=True, eq=False)
class GreyFrame:
    """Single-channel 8-bit raster."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8, read-only

    def __post_init__(self):
        if np.asarray(self.pixels).size != self.width * self.height:
            raise ValueError("pixel count != width*height")
        object.__setattr__(self, "pixels", _frozen_u8(
            self.pixels, (self.height, self.width)))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, sub-pixel coordinates allowed."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError("bbox coordinates must be finite")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError("bbox must satisfy x1 <= x2 and y1 <= y2")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class Detection:
    """Scored, classified box as produced by a detector."""

    bbox: BBox
    score: float
    class_id: int

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("score must be in [0, 1]")


@dataclass(frozen=True)
class PatchGrid:
    """Geometry of the non-overlapping patch split of a frame."""

    patch_size: int
    cols: int
    rows: int

    @classmethod
    def for_frame(cls, width: int, height: int, patch_size: int) -> "PatchGrid":
        if patch_size <= 0:
            raise ValueError("patch size must be positive")
        if width % patch_size or height % patch_size:
            raise ValueError(
                f"frame {width}x{height} not divisible by patch size {patch_size}")
        return cls(patch_size, width // patch_size, height // patch_size)

    @property
    def count(self) -> int:
        return self.rows * self.cols

    @property
    def frame_width(self) -> int:
        return self.cols * self.patch_size

    @property
    def frame_height(self) -> int:
        return self.rows * self.patch_size

    def position(self, index: int) -> tuple[int, int]:
        """(row, col) of a patch index."""
        return index // self.cols, index % self.cols


@dataclass(frozen=True)
class PoISet:
    """Sorted, duplicate-free patch indices selected for transmission."""

    grid: PatchGrid
    indices: tuple[int, ...] = field(default=())

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        if idx and (idx[0] < 0 or idx[-1] >= self.grid.count):
            raise ValueError("patch index out of range")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)


def to_grayscale(frame: Frame) -> GreyFrame:
    """BT.601 luma (round-half-up); single-channel input passes through."""
    if frame.channels == 1:
        return GreyFrame(frame.width, frame.height, frame.pixels[:, :, 0])
    return GreyFrame(frame.width, frame.height, _kernels.luma_u8(frame.pixels))


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union has zero area."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(0.0, ix) * max(0.0, iy)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union
