"""Keyed watermarking of token sequences: generation, detection and exact checks."""

__version__ = "0.1.0"
