"""Memory-efficient neural reranking for API code completion."""

__version__ = "0.1.0"
