"""Binary camera<->edge wire protocol.

Frame layout (all little-endian):

    magic  "ARNA" (4 bytes)
    version u8 = 1
    type    u8   HELLO=0x00 KEYFRAME=0x01 NONKEYFRAME=0x02 RESULT=0x81 BYE=0xFF
    length  u32  payload byte count
    payload

Payloads:

    HELLO        frame_w u16, frame_h u16, channels u8, patch_size u16,
                 config_hash u64
    KEYFRAME     frame_id u64, w u16, h u16, c u8, then w*h*c pixel bytes
    NONKEYFRAME  frame_id u64, count u32, then per patch: index u32 +
                 patch bytes (all patches equal length)
    RESULT       frame_id u64, count u32, then per detection:
                 x1,y1,x2,y2,score f32, class u16
    BYE          empty

The stream is self-delimiting: concatenated frames decode back to exactly
the original sequence. Decoding never raises anything but ProtocolError
subclasses, one distinct type per failure mode.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from arena.model import BBox, Detection

MAGIC = b"ARNA"
VERSION = 1

TYPE_HELLO = 0x00
TYPE_KEYFRAME = 0x01
TYPE_NONKEYFRAME = 0x02
TYPE_RESULT = 0x81
TYPE_BYE = 0xFF

_HEADER = struct.Struct("<4sBBI")
_HELLO = struct.Struct("<HHBHQ")
_KEYFRAME_HEAD = struct.Struct("<QHHB")
_COUNTED_HEAD = struct.Struct("<QI")
_DETECTION = struct.Struct("<fffffH")


class ProtocolError(Exception):
    """Base for every wire decoding failure."""


class MagicError(ProtocolError):
    pass


class VersionError(ProtocolError):
    pass


class MessageTypeError(ProtocolError):
    pass


class LengthError(ProtocolError):
    pass


class TruncatedError(ProtocolError):
    pass


class FieldError(ProtocolError):
    """Structurally sound frame carrying invalid field values."""


@dataclass(frozen=True)
class Hello:
    frame_w: int
    frame_h: int
    channels: int
    patch_size: int
    config_hash: int


@dataclass(frozen=True)
class Keyframe:
    frame_id: int
    width: int
    height: int
    channels: int
    pixels: bytes


@dataclass(frozen=True)
class NonKeyframe:
    frame_id: int
    indices: tuple[int, ...]
    patches: tuple[bytes, ...]


@dataclass(frozen=True)
class Result:
    frame_id: int
    detections: tuple[Detection, ...]


@dataclass(frozen=True)
class Bye:
    pass


Message = Hello | Keyframe | NonKeyframe | Result | Bye


def encode_message(m: Message) -> bytes:
    """Serialize one message with its framing header."""
    if isinstance(m, Hello):
        mtype = TYPE_HELLO
        payload = _HELLO.pack(m.frame_w, m.frame_h, m.channels,
                              m.patch_size, m.config_hash)
    elif isinstance(m, Keyframe):
        mtype = TYPE_KEYFRAME
        if len(m.pixels) != m.width * m.height * m.channels:
            raise ValueError("pixel payload does not match dimensions")
        payload = _KEYFRAME_HEAD.pack(m.frame_id, m.width, m.height,
                                      m.channels) + m.pixels
    elif isinstance(m, NonKeyframe):
        mtype = TYPE_NONKEYFRAME
        if len(m.indices) != len(m.patches):
            raise ValueError("index count does not match patch count")
        if len({len(p) for p in m.patches}) > 1:
            raise ValueError("patches must all be the same length")
        parts = [_COUNTED_HEAD.pack(m.frame_id, len(m.indices))]
        for idx, block in zip(m.indices, m.patches):
            parts.append(struct.pack("<I", idx))
            parts.append(block)
        payload = b"".join(parts)
    elif isinstance(m, Result):
        mtype = TYPE_RESULT
        parts = [_COUNTED_HEAD.pack(m.frame_id, len(m.detections))]
        for det in m.detections:
            parts.append(_DETECTION.pack(det.bbox.x1, det.bbox.y1,
                                         det.bbox.x2, det.bbox.y2,
                                         det.score, det.class_id))
        payload = b"".join(parts)
    elif isinstance(m, Bye):
        mtype = TYPE_BYE
        payload = b""
    else:
        raise ValueError(f"not a wire message: {type(m).__name__}")
    return _HEADER.pack(MAGIC, VERSION, mtype, len(payload)) + payload


def decode_message(data: bytes) -> Message:
    """Decode exactly one message; trailing bytes are a length error."""
    msg, consumed = decode_from(data, 0)
    if consumed != len(data):
        raise LengthError(f"{len(data) - consumed} trailing bytes after message")
    return msg


def decode_from(data: bytes, offset: int) -> tuple[Message, int]:
    """Decode one message starting at ``offset``; returns (message, end)."""
    if len(data) - offset < _HEADER.size:
        raise TruncatedError("incomplete frame header")
    magic, version, mtype, length = _HEADER.unpack_from(data, offset)
    if magic != MAGIC:
        raise MagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionError(f"unsupported version {version}")
    start = offset + _HEADER.size
    if len(data) - start < length:
        raise TruncatedError("payload shorter than declared length")
    payload = data[start:start + length]
    return _decode_payload(mtype, payload), start + length


def decode_all(data: bytes) -> list[Message]:
    """Decode a concatenation of frames back to the original sequence."""
    out: list[Message] = []
    offset = 0
    while offset < len(data):
        msg, offset = decode_from(data, offset)
        out.append(msg)
    return out


def _decode_payload(mtype: int, payload: bytes) -> Message:
    if mtype == TYPE_HELLO:
        if len(payload) != _HELLO.size:
            raise LengthError("HELLO payload size mismatch")
        w, h, c, p, chash = _HELLO.unpack(payload)
        if c not in (1, 3):
            raise FieldError(f"channels must be 1 or 3, got {c}")
        if w == 0 or h == 0 or p == 0:
            raise FieldError("zero dimension in HELLO")
        return Hello(w, h, c, p, chash)

    if mtype == TYPE_KEYFRAME:
        if len(payload) < _KEYFRAME_HEAD.size:
            raise LengthError("KEYFRAME payload shorter than fixed fields")
        fid, w, h, c = _KEYFRAME_HEAD.unpack_from(payload)
        if c not in (1, 3):
            raise FieldError(f"channels must be 1 or 3, got {c}")
        pixels = payload[_KEYFRAME_HEAD.size:]
        if len(pixels) != w * h * c:
            raise LengthError(
                f"pixel bytes {len(pixels)} != {w}x{h}x{c}")
        return Keyframe(fid, w, h, c, pixels)

    if mtype == TYPE_NONKEYFRAME:
        if len(payload) < _COUNTED_HEAD.size:
            raise LengthError("NONKEYFRAME payload shorter than fixed fields")
        fid, count = _COUNTED_HEAD.unpack_from(payload)
        body = payload[_COUNTED_HEAD.size:]
        if count == 0:
            if body:
                raise LengthError("zero patches but non-empty body")
            return NonKeyframe(fid, (), ())
        if len(body) % count:
            raise LengthError("patch body not divisible by patch count")
        per = len(body) // count
        if per <= 4:
            raise LengthError("declared patch count exceeds payload")
        indices = []
        patches = []
        for i in range(count):
            chunk = body[i * per:(i + 1) * per]
            indices.append(struct.unpack_from("<I", chunk)[0])
            patches.append(chunk[4:])
        if len(set(indices)) != count:
            raise FieldError("duplicate patch indices")
        return NonKeyframe(fid, tuple(indices), tuple(patches))

    if mtype == TYPE_RESULT:
        if len(payload) < _COUNTED_HEAD.size:
            raise LengthError("RESULT payload shorter than fixed fields")
        fid, count = _COUNTED_HEAD.unpack_from(payload)
        body = payload[_COUNTED_HEAD.size:]
        if len(body) != count * _DETECTION.size:
            raise LengthError("detection body size mismatch")
        dets = []
        for i in range(count):
            x1, y1, x2, y2, score, cid = _DETECTION.unpack_from(
                body, i * _DETECTION.size)
            if not all(map(math.isfinite, (x1, y1, x2, y2, score))):
                raise FieldError("non-finite detection values")
            if x1 > x2 or y1 > y2:
                raise FieldError("inverted detection box")
            if not (0.0 <= score <= 1.0):
                raise FieldError("score outside [0, 1]")
            dets.append(Detection(BBox(x1, y1, x2, y2), score, cid))
        return Result(fid, tuple(dets))

    if mtype == TYPE_BYE:
        if payload:
            raise LengthError("BYE carries no payload")
        return Bye()

    raise MessageTypeError(f"unknown message type 0x{mtype:02X}")
