"""Patch-of-interest inference offloading for edge video analytics.

A camera-side sampler/scheduler and an edge-side sparse ViT engine with
memory token pools, connected by a binary wire protocol, plus a replay
harness measuring bandwidth, latency, and detection accuracy.
"""

__version__ = "0.1.0"
