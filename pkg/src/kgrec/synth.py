"""Seeded synthetic corpora for desk-scale experiments.

Items carry a topic and a scalar quality; editors carry sparse topic
interests.  Edit probability mixes topic affinity with item quality, so
the resulting interaction matrix has recoverable latent structure, the
content vectors encode topic and quality with mild noise, and the
relational vectors encode the topic cluster with heavier noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import InteractionMatrix
from .store import EmbeddingMatrix


@dataclass(frozen=True)
class SynthConfig:
    n_editors: int = 2000
    n_items: int = 5000
    dim: int = 32
    n_topics: int = 10
    topics_per_editor: int = 2
    items_per_editor_mean: float = 15.0
    items_per_editor_min: int = 6
    items_per_editor_sigma: float = 0.0  # >0: lognormal activity tail
    affinity_weight: float = 0.6
    quality_weight: float = 1.2
    content_quality_scale: float = 1.0
    content_topic_scale: float = 0.5
    content_noise: float = 0.3
    relational_quality_scale: float = 0.25
    relational_noise: float = 1.0
    relational_scale: float = 1.5
    choice_temperature: float = 1.2
    seed: int = 0


@dataclass(frozen=True)
class SynthCorpus:
    matrix: InteractionMatrix
    content: EmbeddingMatrix
    relational: EmbeddingMatrix
    item_topics: np.ndarray
    item_quality: np.ndarray


def generate(cfg: SynthConfig) -> SynthCorpus:
    rng = np.random.default_rng([cfg.seed, 3])
    dim, n_items, n_editors = cfg.dim, cfg.n_items, cfg.n_editors

    topic_content = rng.normal(0.0, 1.0, size=(cfg.n_topics, dim)) / np.sqrt(dim)
    topic_relational = rng.normal(0.0, 1.0, size=(cfg.n_topics, dim)) / np.sqrt(dim)

    # skewed topic popularity so items and editors cluster unevenly
    topic_weights = np.exp(-0.35 * np.arange(cfg.n_topics))
    topic_weights /= topic_weights.sum()
    item_topics = rng.choice(cfg.n_topics, size=n_items, p=topic_weights)
    item_quality = rng.normal(0.0, 1.0, size=n_items)

    # quality enters content as a uniform per-position level shift, the
    # kind of signal a position-shared value gate can actually read
    level = np.ones(dim) / np.sqrt(dim)
    content = (
        cfg.content_quality_scale * item_quality[:, None] * level[None, :]
        + cfg.content_topic_scale * topic_content[item_topics]
        + cfg.content_noise * rng.normal(0.0, 1.0, size=(n_items, dim)) / np.sqrt(dim)
    )
    relational = cfg.relational_scale * (
        cfg.relational_quality_scale * item_quality[:, None] * level[None, :]
        + topic_relational[item_topics]
        + cfg.relational_noise * rng.normal(0.0, 1.0, size=(n_items, dim)) / np.sqrt(dim)
    )

    entries: set[tuple[int, int]] = set()
    mean_extra = max(0.0, cfg.items_per_editor_mean - cfg.items_per_editor_min)
    for i in range(n_editors):
        interests = rng.choice(cfg.n_topics, size=cfg.topics_per_editor,
                               replace=False, p=topic_weights)
        affinity = np.where(np.isin(item_topics, interests), 1.0, 0.0)
        utility = (
            cfg.affinity_weight * affinity
            + cfg.quality_weight * item_quality
        ) / cfg.choice_temperature
        # Gumbel top-k: sampling without replacement from the softmax
        gumbel = -np.log(-np.log(rng.uniform(1e-12, 1.0, size=n_items)))
        if cfg.items_per_editor_sigma > 0.0 and mean_extra > 0.0:
            mu = np.log(mean_extra) - cfg.items_per_editor_sigma**2 / 2.0
            extra = int(rng.lognormal(mu, cfg.items_per_editor_sigma))
        else:
            extra = int(rng.poisson(mean_extra))
        n_edits = min(cfg.items_per_editor_min + extra, n_items)
        picked = np.argpartition(-(utility + gumbel), n_edits - 1)[:n_edits]
        entries.update((i, int(j)) for j in picked)

    editors = tuple(f"U{i + 1}" for i in range(n_editors))
    items = tuple(f"Q{j + 1}" for j in range(n_items))
    return SynthCorpus(
        matrix=InteractionMatrix(editors, items, frozenset(entries)),
        content=EmbeddingMatrix(items, content.astype(np.float32)),
        relational=EmbeddingMatrix(items, relational.astype(np.float32)),
        item_topics=item_topics,
        item_quality=item_quality,
    )
