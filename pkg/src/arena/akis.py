"""Adaptive keyframe interval switching driven by block-matching flow.

At each interval boundary the camera estimates dense motion between the
interval's keyframe and its last frame, averages the flow magnitude over
the blocks covered by the keyframe's detections, and nudges the interval
up (calm scene) or down (busy scene) against a threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from arena import _kernels
from arena.model import BBox, GreyFrame


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-block (dx, dy) pixel displacements."""

    block_size: int
    rows: int
    cols: int
    vectors: np.ndarray  # (rows, cols, 2) float64

    def magnitudes(self) -> np.ndarray:
        return np.hypot(self.vectors[:, :, 0], self.vectors[:, :, 1])


@dataclass(frozen=True)
class AkisConfig:
    """Threshold beta, interval bounds, and flow-estimator geometry."""

    beta: float = 10.0
    k_lower: int = 1
    k_upper: int = 15
    block_size: int = 16
    search_radius: int = 8

    def __post_init__(self):
        if not (1 <= self.k_lower <= self.k_upper):
            raise ValueError("need 1 <= k_lower <= k_upper")
        if self.block_size <= 0 or self.search_radius < 0:
            raise ValueError("block_size must be positive, search_radius >= 0")


def estimate_flow(a: GreyFrame, b: GreyFrame, cfg: AkisConfig) -> FlowField:
    """Exhaustive block matching of ``a`` against ``b``.

    Integer displacements within +/- search_radius, SAD cost, ties broken
    by smallest magnitude then smallest dy then smallest dx. Candidate
    windows are clipped at the frame border, so edge blocks search a
    reduced range; (0, 0) is always a candidate.
    """
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("frame dimensions differ")
    if a.width % cfg.block_size or a.height % cfg.block_size:
        raise ValueError("frame dimensions not divisible by block size")
    vectors = _kernels.block_match(a.pixels, b.pixels, cfg.block_size,
                                   cfg.search_radius).astype(np.float64)
    rows, cols = vectors.shape[:2]
    return FlowField(cfg.block_size, rows, cols, vectors)


def box_block_mask(flow: FlowField, boxes: list[BBox]) -> np.ndarray:
    """Blocks intersecting the union of the boxes (overlaps count once).

    Zero-area boxes have no interior and select nothing.
    """
    mask = np.zeros((flow.rows, flow.cols), dtype=bool)
    bs = flow.block_size
    for box in boxes:
        if box.area <= 0.0:
            continue
        c0 = max(0, math.floor(box.x1 / bs))
        c1 = min(flow.cols, math.ceil(box.x2 / bs))
        r0 = max(0, math.floor(box.y1 / bs))
        r1 = min(flow.rows, math.ceil(box.y2 / bs))
        if c0 < c1 and r0 < r1:
            mask[r0:r1, c0:c1] = True
    return mask


def mean_box_flow(flow: FlowField, boxes: list[BBox]) -> float | None:
    """Mean flow magnitude over box-covered blocks, or None if none covered.

    Computed as sum(per-block magnitude x block pixel area) / masked pixel
    area, which reduces to the plain mean over masked blocks but keeps the
    per-pixel normalization explicit.
    """
    mask = box_block_mask(flow, boxes)
    area_pixels = int(mask.sum()) * flow.block_size ** 2
    if area_pixels == 0:
        return None
    total = float((flow.magnitudes()[mask] * flow.block_size ** 2).sum())
    return total / area_pixels


def next_interval(flow: FlowField, key_boxes: list[BBox], k_r: int,
                  cfg: AkisConfig) -> int:
    """One switching step: +/-1 against beta, clamped to the bounds.

    An empty masked area (no boxes, or all degenerate) gives no motion
    evidence: the interval is left unchanged. Exact equality with beta
    also changes nothing (both strict comparisons fail).
    """
    if not (cfg.k_lower <= k_r <= cfg.k_upper):
        raise ValueError("current interval outside configured bounds")
    v_bar = mean_box_flow(flow, key_boxes)
    if v_bar is None:
        return k_r
    if v_bar < cfg.beta and k_r < cfg.k_upper:
        return k_r + 1
    if v_bar > cfg.beta and k_r > cfg.k_lower:
        return k_r - 1
    return k_r
