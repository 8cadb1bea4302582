"""Reward-based alignment of MT models toward natural output, plus its evaluation battery."""

__version__ = "0.1.0"
