"""Research paper assistant: ingestion, precomputed retrieval, cached services."""

__version__ = "0.1.0"
