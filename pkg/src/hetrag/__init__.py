"""Heterogeneous graph index and dual-evolution retrieval loop for graph RAG."""

__version__ = "0.1.0"
