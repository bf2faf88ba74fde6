"""Dual-source retrieval-augmented generation engine.

Combines a locally indexed regulatory corpus (HNSW vector search) with
live scientific-literature lookups, weights the two evidence streams by
query type, and generates grounded, citation-attributed answers over a
persistent multi-turn chat session.
"""

__version__ = "0.1.0"
