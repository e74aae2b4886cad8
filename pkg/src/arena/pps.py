"""Probability-based patch sampling: pick the patches of interest for the
current frame from the previous frame's detections plus inter-frame change.

The sampling region is the union of all previous boxes aligned to the grid
and expanded by a margin, plus every patch outside it whose greyscale
difference against the previous frame exceeds a threshold. A uniform random
subset of ceil(p * |region|) patches is then drawn without replacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from arena.grid import bbox_to_poi, expand_poi, patch_pixel_diff, rect_to_indices
from arena.model import BBox, Frame, PatchGrid, PoISet, to_grayscale
from arena.rng import Xorshift64Star


@dataclass(frozen=True)
class PpsConfig:
    """Sampler knobs: sampling rate p, pixel-diff threshold F, margin m."""

    sampling_rate: float = 0.9
    diff_threshold: int = 200
    margin: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.sampling_rate <= 1.0):
            raise ValueError("sampling_rate must be in (0, 1]")
        if self.diff_threshold < 0:
            raise ValueError("diff_threshold must be >= 0")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")


def sampling_region(prev: Frame, curr: Frame, prev_boxes: list[BBox],
                    grid: PatchGrid, cfg: PpsConfig) -> set[int]:
    """The pre-sampling region: expanded previous boxes plus changed patches."""
    w, h, p = grid.frame_width, grid.frame_height, grid.patch_size
    region: set[int] = set()
    for box in prev_boxes:
        if box.area <= 0.0:
            continue
        rect = expand_poi(bbox_to_poi(box, p), cfg.margin, w, h, p)
        region.update(rect_to_indices(rect, grid).indices)

    diffs = patch_pixel_diff(to_grayscale(prev), to_grayscale(curr), grid)
    for i, total in enumerate(diffs.sums):
        if i not in region and total > cfg.diff_threshold:
            region.add(i)
    return region


def sample_pois(prev: Frame, curr: Frame, prev_boxes: list[BBox],
                grid: PatchGrid, cfg: PpsConfig,
                rng: Xorshift64Star) -> PoISet:
    """Run the full sampler; deterministic given inputs and the rng state.

    The random subset is drawn by partial Fisher-Yates over the region's
    indices in ascending order, so camera and tests agree bit-for-bit.
    """
    region = sorted(sampling_region(prev, curr, prev_boxes, grid, cfg))
    if not region:
        return PoISet(grid)
    k = _ceil_count(len(region), cfg.sampling_rate)
    chosen = rng.sample_without_replacement(region, k)
    return PoISet(grid, tuple(chosen))


def _ceil_count(n: int, rate: float) -> int:
    """ceil(rate * n), pinned to n at rate == 1 against float edge cases."""
    if rate >= 1.0:
        return n
    return min(n, math.ceil(rate * n))
