"""Engine configuration, seeded weight initialization, and the weights file.

Every parameter tensor is drawn from one xorshift64* stream in a fixed,
documented order (the order of ``param_shapes``), each element uniform in
[-1/sqrt(D), 1/sqrt(D)], row-major within a tensor. The weights file simply
serializes that same order, so a file written by one implementation seeds
another bit-for-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from arena.rng import Xorshift64Star

WEIGHTS_MAGIC = b"AVWT"
WEIGHTS_VERSION = 1
_HEADER = struct.Struct("<4sBHHHHHHHQ")  # magic, ver, P,D,L,h,mlp,fw,fh, count


@dataclass(frozen=True)
class EngineConfig:
    """Desk-scale backbone dimensions.

    The feature pyramid is defined at absolute 1/4..1/32 frame scales, which
    ties the token grid to patch size 16 and requires frame dimensions
    divisible by 32. ``channels`` is the pixel depth the patch projection
    was built for (the wire format carries it; the weights header implies it
    through the parameter count).
    """

    patch_size: int = 16
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4
    mlp_ratio: int = 4
    frame_w: int = 64
    frame_h: int = 64
    channels: int = 3
    weight_seed: int = 1

    def __post_init__(self):
        if self.patch_size != 16:
            raise ValueError("patch size must be 16 (pyramid scales are "
                             "absolute fractions 1/4..1/32 of the frame)")
        if self.embed_dim <= 0 or self.embed_dim % self.heads:
            raise ValueError("embed_dim must be a positive multiple of heads")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.mlp_ratio <= 0:
            raise ValueError("mlp_ratio must be positive")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.frame_w % 32 or self.frame_h % 32:
            raise ValueError("frame dimensions must be divisible by 32")

    @property
    def grid_rows(self) -> int:
        return self.frame_h // self.patch_size

    @property
    def grid_cols(self) -> int:
        return self.frame_w // self.patch_size

    @property
    def token_count(self) -> int:
        return self.grid_rows * self.grid_cols


def _attn_shapes(prefix: str, d: int) -> list[tuple[str, tuple[int, ...]]]:
    return [
        (f"{prefix}.wq", (d, d)), (f"{prefix}.bq", (d,)),
        (f"{prefix}.wk", (d, d)), (f"{prefix}.bk", (d,)),
        (f"{prefix}.wv", (d, d)), (f"{prefix}.bv", (d,)),
        (f"{prefix}.wo", (d, d)), (f"{prefix}.bo", (d,)),
    ]


def _mlp_shapes(prefix: str, d: int, ratio: int) -> list[tuple[str, tuple[int, ...]]]:
    return [
        (f"{prefix}.w1", (d, ratio * d)), (f"{prefix}.b1", (ratio * d,)),
        (f"{prefix}.w2", (ratio * d, d)), (f"{prefix}.b2", (d,)),
    ]


def _ln_shapes(prefix: str, d: int) -> list[tuple[str, tuple[int, ...]]]:
    return [(f"{prefix}.g", (d,)), (f"{prefix}.b", (d,))]


def param_shapes(cfg: EngineConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical parameter list; its order is the draw and file order."""
    d, r = cfg.embed_dim, cfg.mlp_ratio
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("embed.w", (cfg.patch_size ** 2 * cfg.channels, d)),
        ("embed.b", (d,)),
        ("pos", (cfg.token_count, d)),
    ]
    for layer in range(cfg.depth):
        shapes += _ln_shapes(f"enc{layer}.ln1", d)
        shapes += _attn_shapes(f"enc{layer}.attn", d)
        shapes += _ln_shapes(f"enc{layer}.ln2", d)
        shapes += _mlp_shapes(f"enc{layer}.mlp", d, r)
    shapes += _ln_shapes("mfr.ln1", d)
    shapes += _attn_shapes("mfr.self", d)
    shapes += _ln_shapes("mfr.ln2", d)
    shapes += _attn_shapes("mfr.cross", d)
    shapes += _ln_shapes("mfr.ln3", d)
    shapes += _mlp_shapes("mfr.mlp", d, r)
    for name in ("pyr.f1a", "pyr.f1b", "pyr.f2", "pyr.f4"):
        shapes += [(f"{name}.w", (d, d, 2, 2)), (f"{name}.b", (d,))]
    shapes += [("head.w", (d,)), ("head.b", (1,))]
    return shapes


def param_count(cfg: EngineConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in param_shapes(cfg))


def init_params(cfg: EngineConfig) -> dict[str, np.ndarray]:
    """Draw all parameters from the seed, in canonical order."""
    rng = Xorshift64Star(cfg.weight_seed)
    scale = 1.0 / np.sqrt(cfg.embed_dim)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg):
        n = int(np.prod(shape))
        flat = np.fromiter(
            ((2.0 * rng.next_float() - 1.0) * scale for _ in range(n)),
            dtype=np.float64, count=n)
        arr = flat.astype(np.float32).reshape(shape)
        arr.setflags(write=False)
        params[name] = arr
    return params


def save_weights(path: str, cfg: EngineConfig,
                 params: dict[str, np.ndarray]) -> None:
    """Write the binary weights file (little-endian, canonical order)."""
    count = param_count(cfg)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION, cfg.patch_size,
                             cfg.embed_dim, cfg.depth, cfg.heads,
                             cfg.mlp_ratio, cfg.frame_w, cfg.frame_h, count))
        for name, _ in param_shapes(cfg):
            f.write(params[name].astype("<f4").tobytes())


def load_weights(path: str, weight_seed: int = 0
                 ) -> tuple[EngineConfig, dict[str, np.ndarray]]:
    """Read a weights file; channels are inferred from the parameter count.

    ``weight_seed`` only labels the returned config (weights come from the
    file); it must match whatever the peer session advertises.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _HEADER.size:
        raise ValueError("weights file truncated in header")
    (magic, version, p, d, depth, heads, ratio, fw, fh,
     count) = _HEADER.unpack_from(blob)
    if magic != WEIGHTS_MAGIC:
        raise ValueError(f"bad weights magic {magic!r}")
    if version != WEIGHTS_VERSION:
        raise ValueError(f"unsupported weights version {version}")
    cfg = None
    for channels in (1, 3):
        candidate = EngineConfig(p, d, depth, heads, ratio, fw, fh,
                                 channels, weight_seed)
        if param_count(candidate) == count:
            cfg = candidate
            break
    if cfg is None:
        raise ValueError(f"declared parameter count {count} matches no "
                         "supported channel layout")
    expected = _HEADER.size + 4 * count
    if len(blob) != expected:
        raise ValueError(f"weights file length {len(blob)} != expected {expected}")
    params: dict[str, np.ndarray] = {}
    offset = _HEADER.size
    for name, shape in param_shapes(cfg):
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=n,
                            offset=offset).astype(np.float32).reshape(shape)
        arr.setflags(write=False)
        params[name] = arr
        offset += 4 * n
    return cfg, params


def config_hash(cfg: EngineConfig) -> int:
    """FNV-1a 64 over the canonical config string; carried in HELLO."""
    text = (f"P={cfg.patch_size};D={cfg.embed_dim};L={cfg.depth};"
            f"h={cfg.heads};r={cfg.mlp_ratio};w={cfg.frame_w};"
            f"ht={cfg.frame_h};c={cfg.channels};seed={cfg.weight_seed}")
    h = 0xCBF29CE484222325
    for byte in text.encode("ascii"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h
