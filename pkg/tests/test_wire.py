"""Wire codec tests: exact framing bytes, round trips, error taxonomy,
stream safety, and a decode fuzz smoke pass."""

import random
import struct

import pytest

from arena.model import BBox, Detection
from arena.wire import (Bye, FieldError, Hello, Keyframe, LengthError,
                        MagicError, MessageTypeError, NonKeyframe,
                        ProtocolError, Result, TruncatedError, VersionError,
                        decode_all, decode_message, encode_message)


def f32(x):
    """Quantize through the wire's float32 so round trips are exact."""
    return struct.unpack("<f", struct.pack("<f", x))[0]


def random_message(rnd):
    kind = rnd.randrange(5)
    if kind == 0:
        return Hello(rnd.randrange(1, 4096), rnd.randrange(1, 4096),
                     rnd.choice((1, 3)), 16, rnd.getrandbits(64))
    if kind == 1:
        w, h, c = rnd.randrange(1, 32), rnd.randrange(1, 32), rnd.choice((1, 3))
        return Keyframe(rnd.getrandbits(32), w, h, c,
                        rnd.randbytes(w * h * c))
    if kind == 2:
        count = rnd.randrange(0, 6)
        size = rnd.choice((16, 768))
        indices = tuple(rnd.sample(range(1000), count))
        return NonKeyframe(rnd.getrandbits(32), indices,
                           tuple(rnd.randbytes(size) for _ in indices))
    if kind == 3:
        dets = []
        for _ in range(rnd.randrange(0, 5)):
            x1, y1 = f32(rnd.uniform(0, 500)), f32(rnd.uniform(0, 500))
            dets.append(Detection(
                BBox(x1, y1, f32(x1 + rnd.uniform(0, 100)),
                     f32(y1 + rnd.uniform(0, 100))),
                f32(rnd.uniform(0, 1)), rnd.randrange(0, 100)))
        return Result(rnd.getrandbits(32), tuple(dets))
    return Bye()


class TestEncode:
    def test_bye_is_exactly_ten_documented_bytes(self):
        assert encode_message(Bye()) == bytes.fromhex("41524E4101FF00000000")

    def test_nonkeyframe_size_arithmetic(self):
        m = NonKeyframe(7, (1, 2, 3), tuple(bytes(768) for _ in range(3)))
        data = encode_message(m)
        assert len(data) == 10 + 8 + 4 + 3 * (4 + 768)
        assert len(data) - 10 == 2328

    def test_keyframe_payload_layout(self):
        m = Keyframe(0x0102030405060708, 2, 1, 1, b"\xAA\xBB")
        data = encode_message(m)
        assert data[10:18] == bytes.fromhex("0807060504030201")
        assert data[-2:] == b"\xAA\xBB"

    def test_mismatched_pixel_length_rejected(self):
        with pytest.raises(ValueError):
            encode_message(Keyframe(0, 4, 4, 3, b"\x00"))

    def test_unequal_patch_sizes_rejected(self):
        with pytest.raises(ValueError):
            encode_message(NonKeyframe(0, (0, 1), (bytes(4), bytes(8))))


class TestRoundTrip:
    def test_each_variant(self):
        messages = [
            Hello(64, 64, 3, 16, 0xDEADBEEFCAFEF00D),
            Keyframe(3, 2, 2, 3, bytes(range(12))),
            NonKeyframe(4, (0, 5, 9), tuple(bytes([i] * 768) for i in range(3))),
            Result(5, (Detection(BBox(1.0, 2.0, 3.0, 4.5), 0.5, 7),)),
            Bye(),
        ]
        for m in messages:
            assert decode_message(encode_message(m)) == m

    def test_thousand_random_messages(self):
        rnd = random.Random(2024)
        for _ in range(1000):
            m = random_message(rnd)
            assert decode_message(encode_message(m)) == m

    def test_stream_concatenation_decodes_to_sequence(self):
        rnd = random.Random(99)
        msgs = [random_message(rnd) for _ in range(50)]
        blob = b"".join(encode_message(m) for m in msgs)
        assert decode_all(blob) == msgs


class TestErrors:
    def test_truncated_header(self):
        with pytest.raises(TruncatedError):
            decode_message(b"ARNA\x01")

    def test_wrong_magic(self):
        data = bytearray(encode_message(Bye()))
        data[0] = ord("X")
        with pytest.raises(MagicError):
            decode_message(bytes(data))

    def test_unknown_version(self):
        data = bytearray(encode_message(Bye()))
        data[4] = 9
        with pytest.raises(VersionError):
            decode_message(bytes(data))

    def test_unknown_type(self):
        data = bytearray(encode_message(Bye()))
        data[5] = 0x42
        with pytest.raises(MessageTypeError):
            decode_message(bytes(data))

    def test_truncated_payload(self):
        data = encode_message(Keyframe(0, 2, 2, 1, bytes(4)))
        with pytest.raises(TruncatedError):
            decode_message(data[:-1])

    def test_patch_count_exceeding_payload(self):
        # declare 500 patches with a 12-byte body
        payload = struct.pack("<QI", 0, 500) + bytes(12)
        data = b"ARNA\x01\x02" + struct.pack("<I", len(payload)) + payload
        with pytest.raises(LengthError):
            decode_message(data)

    def test_trailing_garbage_is_length_error(self):
        with pytest.raises(LengthError):
            decode_message(encode_message(Bye()) + b"x")

    def test_duplicate_indices_rejected(self):
        payload = struct.pack("<QI", 0, 2)
        payload += struct.pack("<I", 3) + bytes(8)
        payload += struct.pack("<I", 3) + bytes(8)
        data = b"ARNA\x01\x02" + struct.pack("<I", len(payload)) + payload
        with pytest.raises(FieldError):
            decode_message(data)

    def test_bad_score_rejected(self):
        payload = struct.pack("<QI", 0, 1)
        payload += struct.pack("<fffffH", 0, 0, 1, 1, 7.5, 0)
        data = b"ARNA\x01\x81" + struct.pack("<I", len(payload)) + payload
        with pytest.raises(FieldError):
            decode_message(data)

    def test_inverted_box_rejected(self):
        payload = struct.pack("<QI", 0, 1)
        payload += struct.pack("<fffffH", 5, 0, 1, 1, 0.5, 0)
        data = b"ARNA\x01\x81" + struct.pack("<I", len(payload)) + payload
        with pytest.raises(FieldError):
            decode_message(data)


class TestFuzz:
    def test_random_bytes_never_crash(self):
        rnd = random.Random(1337)
        for i in range(2000):
            blob = rnd.randbytes(rnd.randrange(0, 200))
            try:
                decode_message(blob)
            except ProtocolError:
                pass

    def test_mutated_valid_messages_never_crash(self):
        rnd = random.Random(4242)
        for i in range(2000):
            data = bytearray(encode_message(random_message(rnd)))
            for _ in range(rnd.randrange(1, 6)):
                if data:
                    data[rnd.randrange(len(data))] ^= 1 << rnd.randrange(8)
            try:
                decode_message(bytes(data))
            except ProtocolError:
                pass
