"""Sparse ViT backbone: config, seeded weights, memory pools, inference."""

from arena.vit.engine import (AttnStats, Engine, FeaturePyramid,
                              MemoryTokenPools, TokenSequence, flops,
                              flops_total)
from arena.vit.params import (EngineConfig, config_hash, init_params,
                              load_weights, param_count, param_shapes,
                              save_weights)

__all__ = [
    "AttnStats", "Engine", "EngineConfig", "FeaturePyramid",
    "MemoryTokenPools", "TokenSequence", "config_hash", "flops",
    "flops_total", "init_params", "load_weights", "param_count",
    "param_shapes", "save_weights",
]
