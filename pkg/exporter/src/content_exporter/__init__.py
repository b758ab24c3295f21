"""Offline item-content embedding exporter.

Runs a locally stored pretrained contextual sentence encoder over item
descriptions and writes the embeddings in the recommender toolkit's WDR1
binary format (plus the id sidecar), ready for its content-import path.
"""

__version__ = "0.1.0"
