"""Hierarchical high-level activity recognition from multi-channel motion
streams: a two-stage window-sharing neural classifier, an MLP baseline, and
the full train / evaluate / embedding-analysis pipeline with a synthetic
compositional-activity generator."""

__version__ = "0.1.0"
