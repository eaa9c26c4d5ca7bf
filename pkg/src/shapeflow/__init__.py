"""Desk-scale flow-matching generator/editor with staged RL post-training."""

__version__ = "0.1.0"
