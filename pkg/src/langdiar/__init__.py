"""Embedding-agnostic spoken language / speaker diarization toolkit."""

__version__ = "0.1.0"
