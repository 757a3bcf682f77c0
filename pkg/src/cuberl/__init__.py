"""Search-free reinforcement learning for the 2x2x2 cube."""

__version__ = "0.1.0"
