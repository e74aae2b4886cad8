"""Camera and edge-server session state machines plus the byte channels.

The camera owns the sampling loop: keyframes at interval starts, sampled
patches otherwise, interval adaptation at each boundary. The server owns
the inference loop: full or sparse inference, detection, RESULT replies,
and per-frame cost accounting. The server infers phase purely from the
message type; no interval state crosses the wire.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass

import numpy as np

from arena.akis import AkisConfig, estimate_flow, next_interval
from arena.evaluation import (AnnotationStore, CostRecord, OracleConfig,
                              head_predict, oracle_detect)
from arena.grid import patchify
from arena.model import BBox, Detection, Frame, PatchGrid, PoISet, to_grayscale
from arena.pps import PpsConfig, sample_pois
from arena.rng import Xorshift64Star
from arena.vit.engine import Engine, MemoryTokenPools, flops_total
from arena.vit.params import EngineConfig, config_hash
from arena.wire import (Bye, Hello, Keyframe, Message, NonKeyframe, Result,
                        decode_message, encode_message)

log = logging.getLogger("arena.transport")


class SessionStateError(Exception):
    """Message sequence grammar violation; the session resets."""


class ConfigMismatchError(SessionStateError):
    """HELLO parameters disagree with the server's engine."""


@dataclass(frozen=True)
class TimingModel:
    """Deterministic latency model used for reports.

    Transmit time is bytes over the configured link rate plus a fixed
    per-message overhead; inference time is the analytic encoder cost at
    the processed token count over a nominal throughput.
    """

    link_rate_mbps: float = 93.9
    link_overhead_us: float = 0.0
    infer_flops_per_us: float = 1000.0

    def transmit_us(self, nbytes: int) -> float:
        return nbytes * 8.0 / self.link_rate_mbps + self.link_overhead_us

    def infer_us(self, tokens: int, cfg: EngineConfig) -> float:
        return flops_total(tokens, cfg.embed_dim, cfg.depth) / self.infer_flops_per_us


class CameraSession:
    """Capture-side state machine: AKIS interval tracking plus PPS sampling."""

    def __init__(self, engine_cfg: EngineConfig, pps_cfg: PpsConfig,
                 akis_cfg: AkisConfig, akis_enabled: bool = True):
        self.engine_cfg = engine_cfg
        self.pps_cfg = pps_cfg
        self.akis_cfg = akis_cfg
        self.akis_enabled = akis_enabled
        self.grid = PatchGrid.for_frame(engine_cfg.frame_w, engine_cfg.frame_h,
                                        engine_cfg.patch_size)
        self.rng = Xorshift64Star(pps_cfg.rng_seed)
        self.interval = akis_cfg.k_lower
        self.interval_trace: list[tuple[int, int]] = []
        self._counter = 0
        self._prev_frame: Frame | None = None
        self._prev_boxes: list[BBox] | None = None
        self._key_grey = None
        self._key_id: int | None = None
        self._key_boxes: list[BBox] | None = None

    def hello(self) -> Hello:
        cfg = self.engine_cfg
        return Hello(cfg.frame_w, cfg.frame_h, cfg.channels, cfg.patch_size,
                     config_hash(cfg))

    def bye(self) -> Bye:
        return Bye()

    def step(self, frame: Frame) -> Message:
        """Emit the next upstream message for a captured frame."""
        self._maybe_close_interval(frame)
        if self._counter > 0 and self._prev_boxes is None:
            # server never replied for the previous frame: resynchronize
            log.warning("no detections for frame %d; forcing keyframe",
                        frame.frame_id)
            self._counter = 0
        if self._counter == 0:
            msg = self._keyframe(frame)
        else:
            msg = self._nonkeyframe(frame)
        self._prev_frame = frame
        self._prev_boxes = None  # cleared until the next RESULT arrives
        self._counter += 1
        return msg

    def accept_result(self, result: Result) -> None:
        """Feed back the server's detections for the frame just sent."""
        boxes = [d.bbox for d in result.detections]
        self._prev_boxes = boxes
        if self._key_id is not None and result.frame_id == self._key_id:
            self._key_boxes = boxes

    def _maybe_close_interval(self, frame: Frame) -> None:
        """Interval-boundary bookkeeping, deferred to the next capture so the
        keyframe's detections have had a round trip to arrive."""
        if self._counter < self.interval:
            return
        if self.akis_enabled and self._key_grey is not None \
                and self._key_boxes is not None and self._prev_frame is not None:
            flow = estimate_flow(self._key_grey,
                                 to_grayscale(self._prev_frame), self.akis_cfg)
            new_k = next_interval(flow, self._key_boxes, self.interval,
                                  self.akis_cfg)
        else:
            new_k = self.interval
        if new_k != self.interval:
            log.debug("interval %d -> %d at frame %d", self.interval, new_k,
                      frame.frame_id)
        self.interval = new_k
        self.interval_trace.append((frame.frame_id, new_k))
        self._counter = 0

    def _keyframe(self, frame: Frame) -> Keyframe:
        self._key_grey = to_grayscale(frame)
        self._key_id = frame.frame_id
        self._key_boxes = None
        return Keyframe(frame.frame_id, frame.width, frame.height,
                        frame.channels, frame.to_bytes())

    def _nonkeyframe(self, frame: Frame) -> NonKeyframe:
        poi = sample_pois(self._prev_frame, frame, self._prev_boxes,
                          self.grid, self.pps_cfg, self.rng)
        blocks = patchify(frame, self.grid)
        patches = tuple(blocks[i].tobytes() for i in poi.indices)
        return NonKeyframe(frame.frame_id, poi.indices, patches)


class ServerSession:
    """Edge-side state machine: one per connection.

    Pools and the cost log are confined to the session; the engine is
    shared read-only across sessions.
    """

    def __init__(self, engine: Engine, store: AnnotationStore,
                 oracle_cfg: OracleConfig, timing: TimingModel | None = None,
                 detector: str = "oracle", deterministic_timing: bool = True):
        if detector not in ("oracle", "head"):
            raise ValueError("detector must be 'oracle' or 'head'")
        self.engine = engine
        self.store = store
        self.oracle_cfg = oracle_cfg
        self.timing = timing or TimingModel()
        self.detector = detector
        self.deterministic_timing = deterministic_timing
        self.pools = MemoryTokenPools()
        self.cost_log: list[CostRecord] = []
        self.oracle_rng = Xorshift64Star(oracle_cfg.rng_seed)
        self._ready = False  # HELLO seen
        self._closed = False

    def reset(self) -> None:
        self.pools = MemoryTokenPools()
        self._ready = False
        self._closed = False

    def handle(self, msg: Message, raw_len: int) -> Message | None:
        """Process one decoded message; raw_len is its encoded byte size."""
        try:
            return self._handle(msg, raw_len)
        except SessionStateError:
            self.reset()
            raise

    def _handle(self, msg: Message, raw_len: int) -> Message | None:
        if self._closed:
            raise SessionStateError("message after BYE")
        if isinstance(msg, Hello):
            self._check_hello(msg)
            self._ready = True
            return None
        if isinstance(msg, Bye):
            self._closed = True
            return None
        if not self._ready:
            raise SessionStateError("frame message before HELLO")
        if isinstance(msg, Keyframe):
            return self._infer_keyframe(msg, raw_len)
        if isinstance(msg, NonKeyframe):
            if not self.pools.initialized:
                raise SessionStateError("NONKEYFRAME before any KEYFRAME")
            return self._infer_nonkeyframe(msg, raw_len)
        raise SessionStateError(f"unexpected message {type(msg).__name__}")

    def _check_hello(self, msg: Hello) -> None:
        cfg = self.engine.cfg
        ours = (cfg.frame_w, cfg.frame_h, cfg.channels, cfg.patch_size,
                config_hash(cfg))
        theirs = (msg.frame_w, msg.frame_h, msg.channels, msg.patch_size,
                  msg.config_hash)
        if ours != theirs:
            raise ConfigMismatchError(f"session params {theirs} != engine {ours}")

    def _infer_keyframe(self, msg: Keyframe, raw_len: int) -> Result:
        cfg = self.engine.cfg
        if (msg.width, msg.height, msg.channels) != (cfg.frame_w, cfg.frame_h,
                                                     cfg.channels):
            raise SessionStateError("keyframe dimensions do not match session")
        frame = Frame(msg.frame_id, msg.width, msg.height, msg.channels,
                      np.frombuffer(msg.pixels, dtype=np.uint8))
        started = time.perf_counter()
        pyr = self.engine.keyframe_infer(frame, self.pools)
        dets = self._detect(msg.frame_id, pyr)
        elapsed_us = (time.perf_counter() - started) * 1e6
        n = self.engine.grid.count
        self._log(msg.frame_id, "keyframe", raw_len, n, n, elapsed_us)
        return Result(msg.frame_id, tuple(dets))

    def _infer_nonkeyframe(self, msg: NonKeyframe, raw_len: int) -> Result:
        grid = self.engine.grid
        per = grid.patch_size ** 2 * self.engine.cfg.channels
        if any(len(p) != per for p in msg.patches):
            raise SessionStateError(f"patch payloads must be {per} bytes")
        if any(i >= grid.count for i in msg.indices):
            raise SessionStateError("patch index out of range")
        poi = PoISet(grid, msg.indices)
        order = sorted(range(len(msg.indices)), key=lambda i: msg.indices[i])
        blocks = np.zeros((len(poi), per), dtype=np.uint8)
        for row, src in enumerate(order):
            blocks[row] = np.frombuffer(msg.patches[src], dtype=np.uint8)
        started = time.perf_counter()
        pyr = self.engine.nonkeyframe_infer(blocks, poi, self.pools)
        dets = self._detect(msg.frame_id, pyr)
        elapsed_us = (time.perf_counter() - started) * 1e6
        self._log(msg.frame_id, "non-keyframe", raw_len, len(poi), len(poi),
                  elapsed_us)
        return Result(msg.frame_id, tuple(dets))

    def _detect(self, frame_id: int, pyr) -> list[Detection]:
        if self.detector == "oracle":
            return oracle_detect(frame_id, self.store, self.oracle_cfg,
                                 self.oracle_rng)
        grid = self.engine.grid
        p = grid.patch_size
        cells = head_predict(pyr, self.engine)
        dets = []
        for r in range(cells.shape[0]):
            for c in range(cells.shape[1]):
                score = float(cells[r, c])
                if score > 0.5:
                    dets.append(Detection(
                        BBox(c * p, r * p, (c + 1) * p, (r + 1) * p),
                        min(score, 1.0), 0))
        return dets

    def _log(self, frame_id: int, phase: str, nbytes: int, patches: int,
             tokens: int, measured_us: float) -> None:
        infer_us = (self.timing.infer_us(tokens, self.engine.cfg)
                    if self.deterministic_timing else measured_us)
        self.cost_log.append(CostRecord(
            frame_id=frame_id, phase=phase, bytes_sent=nbytes,
            patches_sent=patches,
            t_transmit_us=self.timing.transmit_us(nbytes),
            t_infer_us=infer_us))


class LoopbackChannel:
    """In-process channel with the same byte-level contract as a socket."""

    def __init__(self, session: ServerSession):
        self.session = session

    def send(self, data: bytes) -> bytes | None:
        msg = decode_message(data)
        reply = self.session.handle(msg, len(data))
        return encode_message(reply) if reply is not None else None

    def close(self) -> None:
        pass


class SocketChannel:
    """Blocking client channel over TCP."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)

    def send(self, data: bytes) -> bytes | None:
        self.sock.sendall(data)
        mtype = data[5]
        if mtype in (0x00, 0xFF):  # HELLO / BYE get no reply
            return None
        return read_frame(self.sock)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def read_frame(sock) -> bytes:
    """Read one complete wire frame (header + declared payload)."""
    header = _read_exact(sock, 10)
    length = int.from_bytes(header[6:10], "little")
    return header + _read_exact(sock, length)


def _read_exact(sock, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed mid-frame")
        buf += chunk
    return buf


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        srv = self.server
        session = ServerSession(srv.engine, srv.store, srv.oracle_cfg,
                                srv.timing, srv.detector,
                                deterministic_timing=srv.deterministic_timing)
        log.info("connection from %s", self.client_address)
        try:
            while True:
                try:
                    data = read_frame(self.request)
                except ConnectionError:
                    return
                msg = decode_message(data)
                reply = session.handle(msg, len(data))
                if reply is not None:
                    self.request.sendall(encode_message(reply))
                if isinstance(msg, Bye):
                    return
        except Exception as exc:
            # protocol/session errors reset the connection
            log.warning("closing connection: %s", exc)


class EdgeServer(socketserver.ThreadingTCPServer):
    """Threaded TCP server; one ServerSession per connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], engine: Engine,
                 store: AnnotationStore, oracle_cfg: OracleConfig,
                 timing: TimingModel | None = None, detector: str = "oracle",
                 deterministic_timing: bool = False):
        super().__init__(address, _Handler)
        self.engine = engine
        self.store = store
        self.oracle_cfg = oracle_cfg
        self.timing = timing or TimingModel()
        self.detector = detector
        self.deterministic_timing = deterministic_timing

    def serve_in_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
