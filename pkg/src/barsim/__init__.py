"""Simulated robot bartender: perception, memory, dialogue and dual-arm
execution wired on a deterministic message bus."""

__version__ = "0.1.0"
