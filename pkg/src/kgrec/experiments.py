"""Desk-scale experiment drivers: the ablation grid and the sparsity study.

These reproduce the *shape* of the full-scale experiments (which model
variants beat which, and how density moves recall), not their absolute
numbers; corpus sizes and epoch counts are chosen for minutes-scale runs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import InteractionMatrix, SplitSpec, split_holdout
from .evaluation import (
    MetricsReport,
    ModelBundle,
    ProtocolConfig,
    derive_seed,
    evaluate_model,
    fold_in_editor,
    sparsity_slices,
)
from .fusion import NmorConfig, train_nmor
from .mf import MfConfig, train_bpr
from .store import EmbeddingMatrix
from .synth import SynthConfig, SynthCorpus, generate

log = logging.getLogger(__name__)

ABLATION_VARIANTS = ("cf", "cf+content", "cf+content+relations", "sum")


@dataclass(frozen=True)
class AblationConfig:
    corpus: SynthConfig = field(default_factory=SynthConfig)
    mf: MfConfig = field(default_factory=lambda: MfConfig(dim=32, epochs=20))
    nmor: NmorConfig = field(
        default_factory=lambda: NmorConfig(hidden=32, epochs=8, learning_rate=0.003)
    )
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    max_eval_editors: int = 250
    seed: int = 0


def _subsample_test(test: InteractionMatrix, limit: int) -> InteractionMatrix:
    """Keep the first ``limit`` eligible test editors' entries (by index)."""
    kept: set[tuple[int, int]] = set()
    taken = 0
    for i in range(test.n_editors):
        row = test.rows[i]
        if len(row) < 2:
            continue
        if taken >= limit:
            break
        taken += 1
        kept.update((i, int(j)) for j in row)
    return InteractionMatrix(test.editors, test.items, frozenset(kept))


def _zero_like(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    return EmbeddingMatrix(
        matrix.ids, np.zeros_like(np.asarray(matrix.data))
    )


def fold_in_all_editors(
    train: InteractionMatrix,
    fused: np.ndarray,
    steps: int,
    lr: float,
    seed: int,
) -> np.ndarray:
    """Editor vectors estimated the way evaluation estimates them.

    Folds every editor in against a fixed merged item matrix from their
    train items; editors without train items keep a zero vector.
    """
    out = np.zeros((train.n_editors, fused.shape[1]))
    for i in range(train.n_editors):
        row = train.rows[i]
        if len(row) == 0:
            continue
        pool = np.setdiff1d(
            np.arange(train.n_items), row, assume_unique=False
        )
        out[i] = fold_in_editor(
            row, fused, pool, steps=steps, lr=lr,
            seed=derive_seed(seed, f"fold/{train.editors[i]}"),
        )
    return out


def run_ablation(cfg: AblationConfig) -> dict[str, MetricsReport]:
    """Train and evaluate the four model variants on one synthetic corpus."""
    corpus = generate(replace(cfg.corpus, seed=derive_seed(cfg.seed, "corpus")))
    split = split_holdout(
        corpus.matrix, replace(cfg.split, seed=derive_seed(cfg.seed, "split"))
    )
    mf_result = train_bpr(
        split.train, replace(cfg.mf, seed=derive_seed(cfg.seed, "bpr"))
    )
    V = mf_result.item_vectors
    test = _subsample_test(split.test, cfg.max_eval_editors)
    protocol = replace(cfg.protocol, seed=derive_seed(cfg.seed, "protocol"))

    def gate_for(content: EmbeddingMatrix, relational: EmbeddingMatrix, tag: str):
        # Match training to how the model is used: editor vectors are
        # fold-in estimates against the uniformly merged item matrix, and
        # the target pairs come from the validation split (on train pairs
        # the memorized CF scores leave nothing for other channels to add).
        merged = (
            np.asarray(V.data, dtype=np.float64)
            + np.asarray(content.data, dtype=np.float64)
            + np.asarray(relational.data, dtype=np.float64)
        ) / 3.0
        editors = fold_in_all_editors(
            split.train, merged,
            steps=cfg.protocol.fold_in_steps, lr=cfg.protocol.fold_in_lr,
            seed=derive_seed(cfg.seed, f"gate-fold/{tag}"),
        )
        params, losses = train_nmor(
            split.validation,
            editors,
            np.asarray(V.data),
            np.asarray(content.data),
            np.asarray(relational.data),
            replace(cfg.nmor, seed=derive_seed(cfg.seed, f"nmor/{tag}")),
        )
        log.info("gate %s: loss %.4f -> %.4f", tag, losses[0], losses[-1])
        return params

    zero_rel = _zero_like(corpus.relational)
    bundles = {
        "cf": ModelBundle(
            item_vectors=V, use_content=False, use_relations=False, name="cf"
        ),
        "cf+content": ModelBundle(
            item_vectors=V,
            content_vectors=corpus.content,
            use_relations=False,
            gate=gate_for(corpus.content, zero_rel, "content"),
            name="cf+content",
        ),
        "cf+content+relations": ModelBundle(
            item_vectors=V,
            content_vectors=corpus.content,
            relational_vectors=corpus.relational,
            gate=gate_for(corpus.content, corpus.relational, "full"),
            name="cf+content+relations",
        ),
        "sum": ModelBundle(
            item_vectors=V,
            content_vectors=corpus.content,
            relational_vectors=corpus.relational,
            gate=None,
            name="sum",
        ),
    }
    reports = {}
    for name in ABLATION_VARIANTS:
        reports[name] = evaluate_model(
            bundles[name], corpus.matrix, test, protocol, dataset_id="synthetic"
        )
        log.info("%s: %s", name, _fmt(reports[name]))
    return reports


def _fmt(report: MetricsReport) -> str:
    return " ".join(f"{k}={v:.4f}" for k, v in sorted(report.metrics.items()))


@dataclass(frozen=True)
class SparsityStudyConfig:
    corpus: SynthConfig = field(
        default_factory=lambda: SynthConfig(
            n_editors=600,
            n_items=1200,
            items_per_editor_mean=30.0,
            items_per_editor_min=6,
            affinity_weight=1.0,
            quality_weight=1.0,
            choice_temperature=0.8,
        )
    )
    budget: tuple[int, int] = (300, 600)
    n_slices: int = 3
    mf: MfConfig = field(default_factory=lambda: MfConfig(dim=16, epochs=25))
    protocol: ProtocolConfig = field(
        default_factory=lambda: ProtocolConfig(
            n_negatives=200, precision_ks=(5,), recall_ks=(10,), mar_ks=(5,)
        )
    )
    split: SplitSpec = field(default_factory=SplitSpec)
    max_eval_editors: int = 200
    seed: int = 0


@dataclass(frozen=True)
class SparsitySlicePoint:
    sparsity: float
    recall: float
    recall_key: str


def _corner_sparsities(m: InteractionMatrix, budget: tuple[int, int]) -> tuple[float, float]:
    """Sparsity of the densest and sparsest budget-sized corner windows."""
    be, bi = budget
    editor_order = sorted(range(m.n_editors), key=lambda i: (-len(m.rows[i]), i))
    item_order = sorted(range(m.n_items), key=lambda j: (-len(m.cols[j]), j))

    def window(eo, io):
        items = set(item_order[io : io + bi])
        nnz = sum(
            sum(1 for j in m.rows[i] if int(j) in items)
            for i in editor_order[eo : eo + be]
        )
        return 1.0 - nnz / (be * bi)

    return window(0, 0), window(m.n_editors - be, m.n_items - bi)


def run_sparsity_study(cfg: SparsityStudyConfig) -> list[SparsitySlicePoint]:
    """Recall on fixed-size slices of one corpus, densest to sparsest."""
    corpus = generate(replace(cfg.corpus, seed=derive_seed(cfg.seed, "corpus")))
    dense_s, sparse_s = _corner_sparsities(corpus.matrix, cfg.budget)
    span = sparse_s - dense_s
    targets = [
        dense_s + span * (0.08 + 0.84 * k / max(1, cfg.n_slices - 1))
        for k in range(cfg.n_slices)
    ]
    slices = sparsity_slices(corpus.matrix, targets, cfg.budget)
    recall_key = f"recall@{cfg.protocol.recall_ks[0]}"
    points = []
    for idx, piece in enumerate(slices):
        split = split_holdout(
            piece.matrix, replace(cfg.split, seed=derive_seed(cfg.seed, f"split/{idx}"))
        )
        mf_result = train_bpr(
            split.train, replace(cfg.mf, seed=derive_seed(cfg.seed, f"bpr/{idx}"))
        )
        test = _subsample_test(split.test, cfg.max_eval_editors)
        bundle = ModelBundle(
            item_vectors=mf_result.item_vectors,
            use_content=False,
            use_relations=False,
            name=f"cf-slice-{idx}",
        )
        report = evaluate_model(
            bundle,
            piece.matrix,
            test,
            replace(cfg.protocol, seed=derive_seed(cfg.seed, f"protocol/{idx}")),
            dataset_id=f"slice-{idx}",
        )
        points.append(
            SparsitySlicePoint(
                sparsity=piece.achieved_sparsity,
                recall=report.metrics[recall_key],
                recall_key=recall_key,
            )
        )
        log.info(
            "slice %d sparsity %.4f %s %.4f",
            idx, piece.achieved_sparsity, recall_key, points[-1].recall,
        )
    return points
