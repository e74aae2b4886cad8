"""Data plumbing and end-to-end replay.

Covers frame ingestion (binary PGM/PPM), MOT-style annotation parsing,
synthetic sequence generation, and the replay driver that runs the camera
and server state machines over a whole sequence and emits a JSON report.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from arena.akis import AkisConfig
from arena.evaluation import (AnnotationStore, CostRecord, OracleConfig,
                              bandwidth_report, map_at_50, recall_at_50)
from arena.model import BBox, Frame
from arena.pps import PpsConfig
from arena.transport import (CameraSession, EdgeServer, LoopbackChannel,
                             ServerSession, SocketChannel, TimingModel)
from arena.vit.engine import Engine
from arena.vit.params import EngineConfig, load_weights
from arena.wire import Bye, Keyframe, decode_message, encode_message

log = logging.getLogger("arena.harness")

REPORT_SCHEMA = "arena-report/1"


@dataclass(frozen=True)
class SequenceSource:
    """Ordered frame files plus optional annotations."""

    frame_paths: tuple[Path, ...]
    annotation_path: Path | None = None
    fps: float = 30.0


def open_sequence(frames_dir: str | Path,
                  annotations: str | Path | None = None) -> SequenceSource:
    """Source over every .pgm/.ppm in a directory, in frame-id order.

    Numeric stems sort numerically (so 2.pgm precedes 10.pgm); other names
    sort lexicographically after them. When no annotation path is given,
    DIR/gt.csv is used if present.
    """
    root = Path(frames_dir)
    paths = tuple(sorted(
        (p for p in root.iterdir() if p.suffix.lower() in (".pgm", ".ppm")),
        key=lambda p: (0, int(p.stem), "") if p.stem.isdigit()
        else (1, 0, p.name)))
    if not paths:
        raise ValueError(f"no .pgm/.ppm frames under {root}")
    ann = Path(annotations) if annotations else None
    if ann is None and (root / "gt.csv").exists():
        ann = root / "gt.csv"
    return SequenceSource(paths, ann)


# -- PGM / PPM -------------------------------------------------------------

def parse_pnm(data: bytes, name: str = "<bytes>") -> tuple[int, int, int, np.ndarray]:
    """Binary PGM (P5) or PPM (P6), 8-bit. Returns (w, h, channels, pixels)."""
    magic = data[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ValueError(f"{name}: unsupported format magic {magic!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise ValueError(f"{name}: truncated header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            token = data[pos:end]
            if not token.isdigit():
                raise ValueError(f"{name}: bad header token {token!r}")
            fields.append(int(token))
            pos = end
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"{name}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos:]
    expected = width * height * channels
    if len(raster) != expected:
        raise ValueError(f"{name}: raster is {len(raster)} bytes, "
                         f"expected {expected}")
    return width, height, channels, np.frombuffer(raster, dtype=np.uint8)


def write_pnm(path: str | Path, width: int, height: int, channels: int,
              pixels: np.ndarray) -> None:
    magic = b"P5" if channels == 1 else b"P6"
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (width, height))
        f.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def _frame_id_for(path: Path, fallback: int) -> int:
    stem = path.stem
    return int(stem) if stem.isdigit() else fallback


def load_frames(source: SequenceSource):
    """Yield frames in id order; dimensions must not drift mid-sequence."""
    dims = None
    for i, path in enumerate(source.frame_paths):
        w, h, c, pixels = parse_pnm(path.read_bytes(), str(path))
        if dims is None:
            dims = (w, h, c)
        elif (w, h, c) != dims:
            raise ValueError(f"{path}: dimensions {(w, h, c)} drift from "
                             f"{dims} mid-sequence")
        yield Frame(_frame_id_for(path, i + 1), w, h, c, pixels)


# -- MOT annotations --------------------------------------------------------

def parse_mot_annotations(text: str) -> AnnotationStore:
    """CSV lines "frame,id,x,y,w,h,conf,class,vis"; conf=0 rows excluded."""
    store = AnnotationStore()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) < 9:
            raise ValueError(f"line {lineno}: expected 9 fields, got {len(parts)}")
        try:
            frame_id = int(parts[0])
            x, y, w, h = (float(v) for v in parts[2:6])
            conf = float(parts[6])
            class_id = int(parts[7])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if conf == 0:
            continue
        store.add(frame_id, BBox(x, y, x + w, y + h), class_id)
    return store


def annotations_to_mot(store: AnnotationStore) -> str:
    lines = []
    for fid in store.frame_ids():
        for i, gt in enumerate(store.boxes(fid), start=1):
            b = gt.bbox
            lines.append(f"{fid},{i},{b.x1:g},{b.y1:g},{b.x2 - b.x1:g},"
                         f"{b.y2 - b.y1:g},1,{gt.class_id},1")
    return "\n".join(lines) + ("\n" if lines else "")


# -- synthetic sequences ----------------------------------------------------

@dataclass(frozen=True)
class SynthObject:
    """A textured rectangle moving at constant velocity, clamped in-frame."""

    x: float
    y: float
    w: int
    h: int
    vx: float = 0.0
    vy: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    width: int = 64
    height: int = 64
    frames: int = 10
    channels: int = 3
    objects: tuple[SynthObject, ...] = field(default_factory=tuple)
    texture_seed: int = 0
    background_level: int = 96


def synth_sequence(spec: SynthSpec) -> tuple[list[Frame], AnnotationStore]:
    """Deterministic moving-rectangle sequence with exact ground truth.

    The background is static noise; each object carries its own fixed
    texture so block matching can lock onto it as it moves. Frame ids are
    1-based, matching the MOT convention.
    """
    rng = np.random.default_rng(spec.texture_seed)
    for obj in spec.objects:
        if obj.w > spec.width or obj.h > spec.height:
            raise ValueError("object larger than frame")
        if obj.w <= 0 or obj.h <= 0:
            raise ValueError("object dimensions must be positive")
    background = rng.integers(0, spec.background_level,
                              size=(spec.height, spec.width, spec.channels),
                              dtype=np.uint8)
    textures = [rng.integers(160, 256, size=(obj.h, obj.w, spec.channels),
                             dtype=np.uint8) for obj in spec.objects]

    frames: list[Frame] = []
    store = AnnotationStore()
    for t in range(spec.frames):
        canvas = background.copy()
        fid = t + 1
        for obj, tex in zip(spec.objects, textures):
            x = int(round(obj.x + t * obj.vx))
            y = int(round(obj.y + t * obj.vy))
            x = min(max(x, 0), spec.width - obj.w)
            y = min(max(y, 0), spec.height - obj.h)
            canvas[y:y + obj.h, x:x + obj.w] = tex
            store.add(fid, BBox(x, y, x + obj.w, y + obj.h))
        frames.append(Frame(fid, spec.width, spec.height, spec.channels, canvas))
    return frames, store


def write_synth(spec: SynthSpec, out_dir: str | Path) -> SequenceSource:
    """Materialize a synthetic sequence as PGM/PPM files plus gt.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames, store = synth_sequence(spec)
    paths = []
    for frame in frames:
        suffix = "pgm" if spec.channels == 1 else "ppm"
        path = out / f"{frame.frame_id:06d}.{suffix}"
        write_pnm(path, frame.width, frame.height, frame.channels, frame.pixels)
        paths.append(path)
    gt = out / "gt.csv"
    gt.write_text(annotations_to_mot(store))
    return SequenceSource(tuple(paths), gt)


# -- replay -----------------------------------------------------------------

@dataclass
class ReplayOptions:
    mode: str = "loopback"  # "loopback" | "socket"
    akis_enabled: bool = True
    detector: str = "oracle"
    weights_path: str | None = None
    connect: tuple[str, int] | None = None  # socket mode: existing server

    def __post_init__(self):
        if self.mode not in ("loopback", "socket"):
            raise ValueError("mode must be loopback or socket")


def replay(frames: list[Frame], store: AnnotationStore,
           engine_cfg: EngineConfig, pps_cfg: PpsConfig, akis_cfg: AkisConfig,
           oracle_cfg: OracleConfig, timing: TimingModel | None = None,
           options: ReplayOptions | None = None) -> dict:
    """Drive the full camera/server loop over a sequence and build a report.

    Loopback mode is fully deterministic: timings come from the analytic
    models, so identical seeds produce byte-identical reports. Socket mode
    additionally records measured wall-clock per frame.
    """
    options = options or ReplayOptions()
    timing = timing or TimingModel()
    camera = CameraSession(engine_cfg, pps_cfg, akis_cfg, options.akis_enabled)
    full_frame_bytes = engine_cfg.frame_w * engine_cfg.frame_h * engine_cfg.channels

    own_server: EdgeServer | None = None
    if options.mode == "loopback":
        engine = _build_engine(engine_cfg, options.weights_path)
        session = ServerSession(engine, store, oracle_cfg, timing,
                                options.detector, deterministic_timing=True)
        channel = LoopbackChannel(session)
    else:
        if options.connect is None:
            engine = _build_engine(engine_cfg, options.weights_path)
            own_server = EdgeServer(("127.0.0.1", 0), engine, store, oracle_cfg,
                                    timing, options.detector)
            own_server.serve_in_background()
            options.connect = own_server.server_address
        session = None
        channel = SocketChannel(*options.connect)

    records: list[CostRecord] = []
    dets_by_frame: dict[int, list] = {}
    incomplete = False
    error_text = None
    try:
        channel.send(encode_message(camera.hello()))
        for frame in frames:
            started = time.perf_counter()
            msg = camera.step(frame)
            preprocess_us = (time.perf_counter() - started) * 1e6
            data = encode_message(msg)
            sent = time.perf_counter()
            reply = channel.send(data)
            wall_us = (time.perf_counter() - sent) * 1e6
            result = decode_message(reply)
            camera.accept_result(result)
            dets_by_frame[result.frame_id] = list(result.detections)
            phase = "keyframe" if isinstance(msg, Keyframe) else "non-keyframe"
            patches = (camera.grid.count if phase == "keyframe"
                       else len(msg.indices))
            if options.mode == "socket":
                transmit_us = timing.transmit_us(len(data))
                records.append(CostRecord(
                    frame_id=frame.frame_id, phase=phase, bytes_sent=len(data),
                    patches_sent=patches, t_preprocess_us=preprocess_us,
                    t_transmit_us=transmit_us,
                    t_infer_us=max(0.0, wall_us - transmit_us),
                    t_wall_us=wall_us))
        channel.send(encode_message(Bye()))
    except Exception as exc:
        incomplete = True
        error_text = f"{type(exc).__name__}: {exc}"
        log.error("replay aborted: %s", error_text)
    finally:
        channel.close()
        if own_server is not None:
            own_server.shutdown()
            own_server.server_close()

    if options.mode == "loopback":
        records = list(session.cost_log)
    return build_report(records, dets_by_frame, store, camera, engine_cfg,
                        pps_cfg, akis_cfg, oracle_cfg, full_frame_bytes,
                        options.mode, incomplete, error_text)


def _build_engine(cfg: EngineConfig, weights_path: str | None) -> Engine:
    if weights_path is None:
        return Engine(cfg)
    file_cfg, params = load_weights(weights_path, cfg.weight_seed)
    if file_cfg != cfg:
        raise ValueError(f"weights file config {file_cfg} does not match "
                         f"session config {cfg}")
    return Engine(cfg, params)


def build_report(records: list[CostRecord], dets_by_frame: dict,
                 store: AnnotationStore, camera: CameraSession,
                 engine_cfg: EngineConfig, pps_cfg: PpsConfig,
                 akis_cfg: AkisConfig, oracle_cfg: OracleConfig,
                 full_frame_bytes: int, mode: str, incomplete: bool,
                 error_text: str | None) -> dict:
    n_patches = camera.grid.count
    frame_rows = []
    for r in records:
        frame_rows.append({
            "frame_id": r.frame_id, "phase": r.phase,
            "bytes_sent": r.bytes_sent, "patches_sent": r.patches_sent,
            "poi_proportion": r.patches_sent / n_patches,
            "t_preprocess_us": r.t_preprocess_us,
            "t_transmit_us": r.t_transmit_us,
            "t_infer_us": r.t_infer_us,
            "t_wall_us": r.t_wall_us,
        })
    report = {
        "schema": REPORT_SCHEMA,
        "mode": mode,
        "incomplete": incomplete,
        "error": error_text,
        "config": {
            "engine": {
                "patch_size": engine_cfg.patch_size,
                "embed_dim": engine_cfg.embed_dim,
                "depth": engine_cfg.depth,
                "heads": engine_cfg.heads,
                "mlp_ratio": engine_cfg.mlp_ratio,
                "frame_w": engine_cfg.frame_w,
                "frame_h": engine_cfg.frame_h,
                "channels": engine_cfg.channels,
                "weight_seed": engine_cfg.weight_seed,
            },
            "pps": {"sampling_rate": pps_cfg.sampling_rate,
                    "diff_threshold": pps_cfg.diff_threshold,
                    "margin": pps_cfg.margin, "rng_seed": pps_cfg.rng_seed},
            "akis": {"beta": akis_cfg.beta, "k_lower": akis_cfg.k_lower,
                     "k_upper": akis_cfg.k_upper,
                     "block_size": akis_cfg.block_size,
                     "search_radius": akis_cfg.search_radius,
                     "enabled": camera.akis_enabled},
            "oracle": {"drop_rate": oracle_cfg.drop_rate,
                       "jitter": oracle_cfg.jitter,
                       "rng_seed": oracle_cfg.rng_seed},
        },
        "frames": frame_rows,
        "bandwidth": (bandwidth_report(records, full_frame_bytes)
                      if records else None),
        "latency_us": _latency_summary(records),
        "accuracy": {
            "map50": map_at_50(dets_by_frame, store),
            "recall": recall_at_50(dets_by_frame, store),
        },
        "akis_trace": {
            "initial": akis_cfg.k_lower,
            "boundaries": [[fid, k] for fid, k in camera.interval_trace],
        },
        "poi_cdf": _poi_cdf(records, n_patches),
    }
    return report


def _latency_summary(records: list[CostRecord]) -> dict | None:
    if not records:
        return None
    n = len(records)
    pre = sum(r.t_preprocess_us for r in records) / n
    tx = sum(r.t_transmit_us for r in records) / n
    infer = sum(r.t_infer_us for r in records) / n
    return {"mean_preprocess": pre, "mean_transmit": tx, "mean_infer": infer,
            "mean_total": pre + tx + infer}


def _poi_cdf(records: list[CostRecord], n_patches: int) -> list[list[float]]:
    props = sorted(r.patches_sent / n_patches for r in records
                   if r.phase == "non-keyframe")
    if not props:
        return []
    points = []
    n = len(props)
    for i, p in enumerate(props, start=1):
        if points and points[-1][0] == p:
            points[-1][1] = i / n
        else:
            points.append([p, i / n])
    return points


def write_report(report: dict, path: str | Path) -> None:
    """Stable JSON serialization (sorted keys) for reproducible output."""
    Path(path).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
