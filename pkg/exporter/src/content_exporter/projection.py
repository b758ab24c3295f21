"""Dimension reduction from encoder width to the requested output width."""

from __future__ import annotations

import numpy as np


class ProjectionError(ValueError):
    pass


def project_to_dim(vectors: np.ndarray, target_dim: int) -> np.ndarray:
    """Truncated PCA fitted on the export corpus itself.

    Identity when the encoder width already matches. Raises when the
    target cannot be reached (wider than the encoder, or more components
    than the corpus supports).
    """
    n, dim = vectors.shape
    if target_dim == dim:
        return vectors
    if target_dim > dim:
        raise ProjectionError(
            f"target dim {target_dim} exceeds encoder dim {dim}; cannot project up"
        )
    if target_dim > n:
        raise ProjectionError(
            f"target dim {target_dim} exceeds the {n} corpus rows available "
            "to fit the projection"
        )
    centered = vectors - vectors.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:target_dim].T
