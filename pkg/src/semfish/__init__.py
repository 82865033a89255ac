"""Semantic Fisher encodings of bags of class-posterior descriptors."""

__version__ = "0.1.0"
