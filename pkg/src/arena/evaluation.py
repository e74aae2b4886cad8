"""Oracle detector, stub prediction head, accuracy metrics, and the
bandwidth/latency accounting records."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from arena.model import BBox, Detection, iou
from arena.rng import Xorshift64Star
from arena.vit.engine import Engine, FeaturePyramid

IOU_MATCH = 0.5


@dataclass(frozen=True)
class GroundTruth:
    bbox: BBox
    class_id: int = 0


class AnnotationStore:
    """Ground-truth boxes keyed by frame id."""

    def __init__(self):
        self._by_frame: dict[int, list[GroundTruth]] = {}

    def add(self, frame_id: int, bbox: BBox, class_id: int = 0) -> None:
        if frame_id < 0:
            raise ValueError("frame_id must be >= 0")
        self._by_frame.setdefault(frame_id, []).append(GroundTruth(bbox, class_id))

    def boxes(self, frame_id: int) -> list[GroundTruth]:
        return list(self._by_frame.get(frame_id, []))

    def frame_ids(self) -> list[int]:
        return sorted(self._by_frame)

    def total_boxes(self) -> int:
        return sum(len(v) for v in self._by_frame.values())

    def __len__(self) -> int:
        return len(self._by_frame)


@dataclass(frozen=True)
class OracleConfig:
    """Detector stand-in imperfection: drop probability and coordinate jitter."""

    drop_rate: float = 0.0
    jitter: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.drop_rate < 1.0):
            raise ValueError("drop_rate must be in [0, 1)")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")


@dataclass
class CostRecord:
    """Per-frame transfer/compute accounting; durations in microseconds."""

    frame_id: int
    phase: str  # "keyframe" | "non-keyframe"
    bytes_sent: int
    patches_sent: int
    t_preprocess_us: float = 0.0
    t_transmit_us: float = 0.0
    t_infer_us: float = 0.0
    t_wall_us: float = 0.0  # measured round trip; 0 in loopback mode

    def __post_init__(self):
        if self.phase not in ("keyframe", "non-keyframe"):
            raise ValueError("phase must be keyframe or non-keyframe")
        if self.bytes_sent < 0 or self.patches_sent < 0:
            raise ValueError("byte and patch counts must be >= 0")


def oracle_detect(frame_id: int, store: AnnotationStore, cfg: OracleConfig,
                  rng: Xorshift64Star) -> list[Detection]:
    """Ground truth degraded by random drops and coordinate jitter.

    Draw order per ground-truth box: one drop draw, then (survivors only)
    four jitter draws for x1, y1, x2, y2. Jittered coordinate pairs are
    re-sorted so boxes stay valid. Scores are 1.0.
    """
    out: list[Detection] = []
    for gt in store.boxes(frame_id):
        if rng.next_float() < cfg.drop_rate:
            continue
        b = gt.bbox
        if cfg.jitter > 0:
            j = cfg.jitter
            x1 = b.x1 + (2.0 * rng.next_float() - 1.0) * j
            y1 = b.y1 + (2.0 * rng.next_float() - 1.0) * j
            x2 = b.x2 + (2.0 * rng.next_float() - 1.0) * j
            y2 = b.y2 + (2.0 * rng.next_float() - 1.0) * j
            b = BBox(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2))
        out.append(Detection(b, 1.0, gt.class_id))
    return out


def head_predict(pyr: FeaturePyramid, engine: Engine) -> np.ndarray:
    """Logistic per-cell objectness over the 1/16 map.

    Shape/diff probe only; never a source of accuracy numbers.
    """
    logits = pyr.f3 @ engine.params["head.w"] + engine.params["head.b"][0]
    return 1.0 / (1.0 + np.exp(-logits))


def _match_detections(dets_per_frame: dict[int, list[Detection]],
                      store: AnnotationStore, class_id: int
                      ) -> tuple[list[tuple[float, bool]], int]:
    """Greedy IoU>=0.5 matching for one class.

    Detections are visited in descending score (ties: frame id, then
    arrival order); each claims the unmatched ground-truth box with the
    highest IoU. Returns (score, is_tp) pairs plus the ground-truth count.
    """
    gt_per_frame = {
        fid: [g for g in store.boxes(fid) if g.class_id == class_id]
        for fid in store.frame_ids()}
    n_gt = sum(len(v) for v in gt_per_frame.values())

    flat: list[tuple[float, int, int, Detection]] = []
    for fid, dets in dets_per_frame.items():
        for order, det in enumerate(dets):
            if det.class_id == class_id:
                flat.append((det.score, fid, order, det))
    flat.sort(key=lambda t: (-t[0], t[1], t[2]))

    used: dict[int, set[int]] = {fid: set() for fid in gt_per_frame}
    results: list[tuple[float, bool]] = []
    for score, fid, _, det in flat:
        candidates = gt_per_frame.get(fid, [])
        best_i, best_iou = -1, 0.0
        for i, gt in enumerate(candidates):
            if i in used.get(fid, set()):
                continue
            v = iou(det.bbox, gt.bbox)
            if v > best_iou:
                best_i, best_iou = i, v
        if best_i >= 0 and best_iou >= IOU_MATCH:
            used.setdefault(fid, set()).add(best_i)
            results.append((score, True))
        else:
            results.append((score, False))
    return results, n_gt


def _average_precision(matches: list[tuple[float, bool]], n_gt: int) -> float:
    """Area under the all-points-interpolated precision-recall curve."""
    if n_gt == 0:
        return 0.0
    tp = fp = 0
    recalls: list[float] = []
    precisions: list[float] = []
    for _, is_tp in matches:
        if is_tp:
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    ap = 0.0
    prev_recall = 0.0
    running_max = 0.0
    # walk right-to-left so precision is the max over recall >= r
    interp = []
    for p in reversed(precisions):
        running_max = max(running_max, p)
        interp.append(running_max)
    interp.reverse()
    for r, p in zip(recalls, interp):
        ap += (r - prev_recall) * p
        prev_recall = r
    return ap


def map_at_50(dets_per_frame: dict[int, list[Detection]],
              store: AnnotationStore) -> float:
    """Mean average precision at IoU 0.5 over classes present in the truth."""
    classes = sorted({g.class_id for fid in store.frame_ids()
                      for g in store.boxes(fid)})
    if not classes:
        return 0.0
    aps = []
    for cid in classes:
        matches, n_gt = _match_detections(dets_per_frame, store, cid)
        aps.append(_average_precision(matches, n_gt))
    return float(np.mean(aps))


def recall_at_50(dets_per_frame: dict[int, list[Detection]],
                 store: AnnotationStore) -> float:
    """Fraction of ground-truth boxes claimed by any detection at IoU 0.5."""
    classes = sorted({g.class_id for fid in store.frame_ids()
                      for g in store.boxes(fid)})
    total_gt = matched = 0
    for cid in classes:
        matches, n_gt = _match_detections(dets_per_frame, store, cid)
        total_gt += n_gt
        matched += sum(1 for _, is_tp in matches if is_tp)
    if total_gt == 0:
        return 0.0
    return matched / total_gt


def bandwidth_report(records: list[CostRecord], full_frame_bytes: int) -> dict:
    """Totals, normalized ratio, and per-phase breakdown of sent bytes."""
    if not records:
        raise ValueError("no cost records")
    if full_frame_bytes <= 0:
        raise ValueError("full_frame_bytes must be positive")
    total = sum(r.bytes_sent for r in records)
    key = [r for r in records if r.phase == "keyframe"]
    non = [r for r in records if r.phase == "non-keyframe"]
    summary = {
        "frames": len(records),
        "full_frame_bytes": full_frame_bytes,
        "total_bytes": total,
        "normalized": total / (len(records) * full_frame_bytes),
        "keyframe": {
            "count": len(key),
            "bytes": sum(r.bytes_sent for r in key),
        },
        "non_keyframe": {
            "count": len(non),
            "bytes": sum(r.bytes_sent for r in non),
            "payload_ratio": (
                sum(r.bytes_sent for r in non) / (len(non) * full_frame_bytes)
                if non else 0.0),
            "mean_patches": (
                sum(r.patches_sent for r in non) / len(non) if non else 0.0),
        },
    }
    return summary
