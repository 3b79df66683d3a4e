"""Streaming reinforcement learning on a shared MLP substrate."""

__version__ = "0.1.0"
