"""Sparse ViT inference engine with memory token pools.

Keyframes tokenize the whole frame and refill both pools; non-keyframes
run the encoder over only the transmitted patches, splice the results into
the pooled full-length sequences, and rebuild the multi-scale pyramid from
the spliced sequences. The reconstruction decoder lets the fresh tokens
attend into the cached pre-encoder pool, pulling background context from
the last keyframe into the sparse update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from arena.grid import patchify
from arena.model import Frame, PatchGrid, PoISet
from arena.vit.params import EngineConfig, init_params

_LN_EPS = np.float32(1e-5)
_GELU_C = np.float32(0.7978845608028654)  # sqrt(2/pi)


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """Embedding rows aligned 1:1 with originating patch indices."""

    indices: tuple[int, ...]
    tokens: np.ndarray  # (len(indices), D) float32

    def __post_init__(self):
        if len(self.indices) != len(set(self.indices)):
            raise ValueError("duplicate patch indices in token sequence")
        if self.tokens.shape[0] != len(self.indices):
            raise ValueError("token rows do not align with indices")


class MemoryTokenPools:
    """Per-session cache of full-length token sequences.

    ``a`` holds the pre-encoder, pre-positional tokens; ``b`` the
    post-encoder tokens. Both always cover every patch index once primed
    by a keyframe.
    """

    def __init__(self):
        self.a: np.ndarray | None = None
        self.b: np.ndarray | None = None

    @property
    def initialized(self) -> bool:
        return self.a is not None


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    """Multi-scale maps at 1/4, 1/8, 1/16, 1/32 of the frame."""

    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray


@dataclass
class AttnStats:
    """Instrumentation: score entries (query-key pairs) per encoder layer."""

    encoder_entries: list[int] = field(default_factory=list)


class Engine:
    """Immutable weights plus the forward operations.

    Weights never change after construction, so one engine is safely shared
    across concurrent sessions; all mutable inference state lives in the
    per-session MemoryTokenPools.
    """

    def __init__(self, cfg: EngineConfig,
                 params: dict[str, np.ndarray] | None = None):
        self.cfg = cfg
        self.grid = PatchGrid.for_frame(cfg.frame_w, cfg.frame_h, cfg.patch_size)
        self.params = params if params is not None else init_params(cfg)

    # -- token construction ------------------------------------------------

    def embed_patches(self, blocks: np.ndarray,
                      indices: tuple[int, ...]) -> TokenSequence:
        """Project raw patch blocks (scaled to [0,1]) into embedding space.

        No positional information and no class token: detection consumes
        spatial tokens only.
        """
        cfg = self.cfg
        blocks = np.asarray(blocks, dtype=np.uint8)
        expected = cfg.patch_size ** 2 * cfg.channels
        if blocks.reshape(len(indices), -1).shape[1] != expected:
            raise ValueError(f"patch blocks must be {expected} bytes each")
        x = blocks.reshape(len(indices), expected).astype(np.float32) / np.float32(255.0)
        tokens = x @ self.params["embed.w"] + self.params["embed.b"]
        return TokenSequence(tuple(indices), tokens)

    def add_positional(self, ts: TokenSequence) -> TokenSequence:
        """Add the embedding of each token's original frame position."""
        n = self.grid.count
        if any(i < 0 or i >= n for i in ts.indices):
            raise ValueError("patch index out of range for positional table")
        if not ts.indices:
            return ts
        rows = self.params["pos"][list(ts.indices)]
        return TokenSequence(ts.indices, ts.tokens + rows)

    # -- encoder -----------------------------------------------------------

    def encode(self, ts: TokenSequence,
               stats: AttnStats | None = None) -> TokenSequence:
        """Run the pre-norm encoder over exactly the tokens present."""
        if len(ts.indices) == 0:
            raise ValueError("encode requires a non-empty token sequence")
        x = ts.tokens
        for layer in range(self.cfg.depth):
            pre = f"enc{layer}"
            y = self._attention(_layer_norm(x, self.params[f"{pre}.ln1.g"],
                                            self.params[f"{pre}.ln1.b"]),
                                None, f"{pre}.attn", stats)
            x = x + y
            z = self._mlp(_layer_norm(x, self.params[f"{pre}.ln2.g"],
                                      self.params[f"{pre}.ln2.b"]), f"{pre}.mlp")
            x = x + z
        return TokenSequence(ts.indices, x)

    def _attention(self, xq: np.ndarray, xkv: np.ndarray | None, prefix: str,
                   stats: AttnStats | None = None) -> np.ndarray:
        """Multi-head scaled dot-product attention (self when xkv is None)."""
        p = self.params
        if xkv is None:
            xkv = xq
        h = self.cfg.heads
        dh = self.cfg.embed_dim // h
        q = (xq @ p[f"{prefix}.wq"] + p[f"{prefix}.bq"]).reshape(-1, h, dh)
        k = (xkv @ p[f"{prefix}.wk"] + p[f"{prefix}.bk"]).reshape(-1, h, dh)
        v = (xkv @ p[f"{prefix}.wv"] + p[f"{prefix}.bv"]).reshape(-1, h, dh)
        scores = np.einsum("qhd,khd->hqk", q, k) / np.float32(np.sqrt(dh))
        if stats is not None and prefix.startswith("enc"):
            stats.encoder_entries.append(scores.shape[1] * scores.shape[2])
        scores -= scores.max(axis=2, keepdims=True)
        weights = np.exp(scores)
        weights /= weights.sum(axis=2, keepdims=True)
        out = np.einsum("hqk,khd->qhd", weights, v).reshape(xq.shape[0], -1)
        return out @ p[f"{prefix}.wo"] + p[f"{prefix}.bo"]

    def _mlp(self, x: np.ndarray, prefix: str) -> np.ndarray:
        p = self.params
        hidden = _gelu(x @ p[f"{prefix}.w1"] + p[f"{prefix}.b1"])
        return hidden @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"]

    # -- reconstruction and pyramid -----------------------------------------

    def mfr(self, z_full: TokenSequence, z0_full: TokenSequence) -> np.ndarray:
        """One decoder layer rebuilding the 1/16-scale map from full-length
        sequences: self-attention over the post-encoder tokens, then
        cross-attention into the pre-encoder pool, then MLP; pre-norm
        residuals throughout."""
        n = self.grid.count
        if len(z_full.indices) != n or len(z0_full.indices) != n:
            raise ValueError("reconstruction requires full-length sequences")
        p = self.params
        x = z_full.tokens
        x = x + self._attention(
            _layer_norm(x, p["mfr.ln1.g"], p["mfr.ln1.b"]), None, "mfr.self")
        x = x + self._attention(
            _layer_norm(x, p["mfr.ln2.g"], p["mfr.ln2.b"]),
            z0_full.tokens, "mfr.cross")
        x = x + self._mlp(_layer_norm(x, p["mfr.ln3.g"], p["mfr.ln3.b"]),
                          "mfr.mlp")
        return x.reshape(self.grid.rows, self.grid.cols, self.cfg.embed_dim)

    def _pyramid(self, z0_full: np.ndarray, f3: np.ndarray) -> FeaturePyramid:
        g0 = z0_full.reshape(self.grid.rows, self.grid.cols, self.cfg.embed_dim)
        p = self.params
        f2 = _deconv2(g0, p["pyr.f2.w"], p["pyr.f2.b"])
        f1 = _deconv2(_deconv2(g0, p["pyr.f1a.w"], p["pyr.f1a.b"]),
                      p["pyr.f1b.w"], p["pyr.f1b.b"])
        f4 = _conv2(f3, p["pyr.f4.w"], p["pyr.f4.b"])
        return FeaturePyramid(f1, f2, f3, f4)

    # -- full inference phases ----------------------------------------------

    def keyframe_infer(self, frame: Frame, pools: MemoryTokenPools,
                       stats: AttnStats | None = None) -> FeaturePyramid:
        """Full-frame inference; refills both memory pools."""
        cfg = self.cfg
        if (frame.width, frame.height) != (cfg.frame_w, cfg.frame_h):
            raise ValueError("frame dimensions do not match engine config")
        if frame.channels != cfg.channels:
            raise ValueError("frame channels do not match engine config")
        blocks = patchify(frame, self.grid)
        all_idx = tuple(range(self.grid.count))
        z0t = self.embed_patches(blocks, all_idx)
        z0 = self.add_positional(z0t)
        zl = self.encode(z0, stats)
        pools.a = z0t.tokens.copy()
        pools.b = zl.tokens.copy()
        f3 = self.mfr(zl, z0t)
        return self._pyramid(z0t.tokens, f3)

    def nonkeyframe_infer(self, patch_blocks: np.ndarray, poi: PoISet,
                          pools: MemoryTokenPools,
                          stats: AttnStats | None = None) -> FeaturePyramid:
        """Sparse inference over the transmitted patches only.

        The encoder attends among the sparse tokens alone; full-length
        sequences are restored by splicing into the pools, which are then
        updated with the spliced sequences.
        """
        if not pools.initialized:
            raise ValueError("non-keyframe inference before any keyframe")
        n_blocks = 0 if patch_blocks is None else len(patch_blocks)
        if n_blocks != len(poi):
            raise ValueError("patch count does not match the index set")
        all_idx = tuple(range(self.grid.count))
        z0_full = pools.a.copy()
        zl_full = pools.b.copy()
        if len(poi):
            rows = list(poi.indices)
            zsp = self.embed_patches(patch_blocks, poi.indices)
            zl_sp = self.encode(self.add_positional(zsp), stats)
            z0_full[rows] = zsp.tokens
            zl_full[rows] = zl_sp.tokens
        pools.a = z0_full.copy()
        pools.b = zl_full.copy()
        f3 = self.mfr(TokenSequence(all_idx, zl_full),
                      TokenSequence(all_idx, z0_full))
        return self._pyramid(z0_full, f3)


def flops(n: int, d: int) -> int:
    """Analytic cost of one attention + MLP block over n tokens: 12nd^2 + 2n^2d."""
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    return 12 * n * d * d + 2 * n * n * d


def flops_total(n: int, d: int, depth: int) -> int:
    """Whole-encoder analytic cost: depth blocks."""
    return depth * flops(n, d)


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + _LN_EPS) * g + b


def _gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation; keeps the dependency surface to numpy
    return np.float32(0.5) * x * (np.float32(1.0) + np.tanh(
        _GELU_C * (x + np.float32(0.044715) * x * x * x)))


def _deconv2(g: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stride-2 kernel-2 transposed convolution: exact 2x upscale."""
    r, c, d = g.shape
    out = np.empty((2 * r, 2 * c, w.shape[1]), dtype=np.float32)
    for di in range(2):
        for dj in range(2):
            out[di::2, dj::2] = g @ w[:, :, di, dj] + b
    return out


def _conv2(g: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stride-2 kernel-2 convolution: exact 2x downscale."""
    r, c, d = g.shape
    out = np.zeros((r // 2, c // 2, w.shape[1]), dtype=np.float32)
    for di in range(2):
        for dj in range(2):
            out += g[di::2, dj::2] @ w[:, :, di, dj]
    return out + b
