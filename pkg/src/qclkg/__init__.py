"""Quantum cascade laser property extraction and knowledge-graph construction."""

__version__ = "0.1.0"
