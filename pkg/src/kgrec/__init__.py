"""Hybrid recommender toolkit for knowledge-graph items.

Fuses collaborative-filtering edit representations, item content embeddings
and item relational embeddings through a learned per-dimension soft gate,
and provides the ingestion, training and ranking-evaluation machinery
around that core.
"""

__version__ = "0.1.0"
