"""Offline ranking evaluation: per-editor protocol, metrics, sparsity slices.

For each test editor the protocol splits their test items half/half,
folds the first half into an editor vector against frozen item factors,
then ranks the second half against sampled never-edited negatives and
scores the list with precision/recall/average-recall at the configured
cutoffs plus intra-list diversity and catalog coverage.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import InteractionMatrix
from .errors import EmptyInputError
from .fusion import GateParams, _gate_raw
from .mf import _sigmoid
from .store import EmbeddingMatrix

log = logging.getLogger(__name__)


def derive_seed(seed: int, name: str) -> int:
    """Stable 64-bit sub-seed for a named component of a run."""
    digest = hashlib.sha256(f"{seed}/{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class ProtocolConfig:
    n_negatives: int = 200
    precision_ks: tuple[int, ...] = (5, 10)
    recall_ks: tuple[int, ...] = (50, 100, 200)
    mar_ks: tuple[int, ...] = (5, 10)
    diversity_k: int = 10
    fold_in_steps: int = 50
    fold_in_lr: float = 0.05
    fold_in_l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        for k in (*self.precision_ks, *self.recall_ks, *self.mar_ks, self.diversity_k):
            if k < 1:
                raise ValueError("every k must be >= 1")
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be >= 1")


@dataclass
class ModelBundle:
    """Everything needed to score candidate items for an editor.

    ``gate`` switches between the learned per-dimension mixture and the
    plain unweighted sum of the active representations; ``use_content`` /
    ``use_relations`` zero out a representation entirely (the pure
    collaborative-filtering variant uses neither).

    The gate weights depend only on the item, so each item's merged
    representation is editor-independent; it is computed once and reused
    for both fold-in and scoring (``x_ij = e_i . merged_j``).
    """

    item_vectors: EmbeddingMatrix
    content_vectors: EmbeddingMatrix | None = None
    relational_vectors: EmbeddingMatrix | None = None
    gate: GateParams | None = None
    use_content: bool = True
    use_relations: bool = True
    name: str = "model"

    def fused_matrix(self, items) -> np.ndarray:
        """Merged item representations for the given item-id list."""
        cached = getattr(self, "_fused_cache", None)
        if cached is not None and cached[0] is items:
            return cached[1]
        v, _ = self.item_vectors.align(items)
        v = v.astype(np.float64)
        dim = self.item_vectors.dim
        if self.use_content and self.content_vectors is not None:
            c, _ = self.content_vectors.align(items)
            c = c.astype(np.float64)
        else:
            c = np.zeros((len(items), dim))
        if self.use_relations and self.relational_vectors is not None:
            r, _ = self.relational_vectors.align(items)
            r = r.astype(np.float64)
        else:
            r = np.zeros((len(items), dim))
        if self.gate is None:
            fused = v + c + r
        else:
            x = np.stack([v, c, r], axis=-1)
            weights, _ = _gate_raw(x, self.gate)
            fused = (weights * x).sum(axis=-1)
        # hold the items reference so identity stays valid while cached
        self._fused_cache = (items, fused)
        return fused

    def score(self, e: np.ndarray, item_indices: np.ndarray, items) -> np.ndarray:
        fused = self.fused_matrix(items)
        return fused[item_indices] @ np.asarray(e, dtype=np.float64)


@dataclass
class EditorEval:
    editor_id: str
    metrics: dict[str, float]
    top_items: tuple[int, ...]
    fold_in_items: tuple[int, ...]
    relevant_items: tuple[int, ...]
    negatives: tuple[int, ...]


@dataclass
class MetricsReport:
    metrics: dict[str, float]
    meta: dict[str, object]
    per_editor: list[EditorEval] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {**self.metrics, "meta": self.meta}


def precision_at_k(ranked, relevant, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = len(set(ranked[:k]) & set(relevant))
    return hits / k


def recall_at_k(ranked, relevant, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    if not relevant:
        raise EmptyInputError("recall is undefined for an empty relevant set")
    return len(set(ranked[:k]) & relevant) / len(relevant)


def average_recall_at_k(ranked, relevant, k: int) -> float:
    """Mean of recall@1..recall@k for one ranked list."""
    return sum(recall_at_k(ranked, relevant, i) for i in range(1, k + 1)) / k


def intra_list_diversity(item_ids, content: EmbeddingMatrix) -> float:
    """Mean pairwise dissimilarity (1 - cosine)/2 inside one list.

    Items with a zero content vector cannot enter a cosine and are
    excluded (logged); at least two usable items are required.
    """
    if len(item_ids) < 2:
        raise ValueError("diversity needs at least two items")
    vectors = []
    skipped = 0
    for item_id in item_ids:
        vec = np.asarray(content.row(item_id), dtype=np.float64)
        if np.linalg.norm(vec) == 0.0:
            skipped += 1
        else:
            vectors.append(vec)
    if skipped:
        log.debug("diversity: skipped %d zero-vector items", skipped)
    if len(vectors) < 2:
        raise EmptyInputError("diversity undefined: fewer than two non-zero vectors")
    total = 0.0
    pairs = 0
    for a in range(len(vectors)):
        for b in range(a + 1, len(vectors)):
            cos = float(
                vectors[a] @ vectors[b]
                / (np.linalg.norm(vectors[a]) * np.linalg.norm(vectors[b]))
            )
            total += (1.0 - cos) / 2.0
            pairs += 1
    return min(1.0, max(0.0, total / pairs))


def catalog_coverage(top_lists, catalog_size: int) -> float:
    if catalog_size < 1:
        raise ValueError("catalog size must be >= 1")
    union: set = set()
    for lst in top_lists:
        union.update(lst)
    return len(union) / catalog_size


def fold_in_editor(
    positive_items: np.ndarray,
    item_vectors: np.ndarray,
    negative_pool: np.ndarray,
    steps: int,
    lr: float = 0.05,
    l2_reg: float = 1e-4,
    seed: int = 0,
) -> np.ndarray:
    """Editor vector from held items by pairwise gradient steps, items frozen.

    Cycles through the positives; each step samples a negative from the
    pool and applies one ranking-gradient update to the editor vector
    alone.  With zero steps the seeded initialization is returned as-is.
    """
    if len(positive_items) == 0:
        raise EmptyInputError("fold-in needs at least one positive item")
    rng = np.random.default_rng([seed, 2])
    dim = item_vectors.shape[1]
    e = rng.uniform(-0.01, 0.01, size=dim)
    pool = np.asarray(negative_pool)
    if len(pool) == 0:
        return e
    for step in range(steps):
        p = positive_items[step % len(positive_items)]
        n = int(pool[int(rng.integers(0, len(pool)))])
        vp = item_vectors[p].astype(np.float64)
        vn = item_vectors[n].astype(np.float64)
        d = float(e @ (vp - vn))
        s = _sigmoid(-d)
        e += lr * (s * (vp - vn) - l2_reg * e)
    return e


def _half_split(rng, items: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(len(items))
    cut = math.ceil(len(items) / 2)
    return items[perm[:cut]], items[perm[cut:]]


def evaluate_editor(
    editor_index: int,
    bundle: ModelBundle,
    full: InteractionMatrix,
    test: InteractionMatrix,
    cfg: ProtocolConfig,
) -> EditorEval | None:
    """Run the half/half fold-in protocol for a single test editor.

    Returns None (logged) for editors with fewer than two test items.
    The relevant second half never feeds the fold-in: the editor vector
    is estimated from the first half only, and negatives come from items
    the editor never edited at all.
    """
    test_items = test.rows[editor_index]
    if len(test_items) < 2:
        log.debug(
            "editor %s skipped: %d test item(s)",
            full.editors[editor_index],
            len(test_items),
        )
        return None
    editor_id = full.editors[editor_index]
    rng = np.random.default_rng([derive_seed(cfg.seed, f"editor/{editor_id}"), 0])
    first_half, second_half = _half_split(rng, test_items)
    edited = full.row_sets[editor_index]
    never_edited = np.array(
        [j for j in range(full.n_items) if j not in edited], dtype=np.int64
    )
    fused = bundle.fused_matrix(full.items)
    e = fold_in_editor(
        first_half,
        fused,
        never_edited,
        steps=cfg.fold_in_steps,
        lr=cfg.fold_in_lr,
        l2_reg=cfg.fold_in_l2,
        seed=derive_seed(cfg.seed, f"fold/{editor_id}"),
    )
    take = min(cfg.n_negatives, len(never_edited))
    negatives = rng.choice(never_edited, size=take, replace=False)
    candidates = np.concatenate([second_half, negatives])
    scores = bundle.score(e, candidates, full.items)
    order = sorted(
        range(len(candidates)),
        key=lambda k: (-scores[k], full.items[candidates[k]]),
    )
    ranked = [int(candidates[k]) for k in order]
    relevant = [int(j) for j in second_half]
    metrics: dict[str, float] = {}
    for k in cfg.precision_ks:
        metrics[f"precision@{k}"] = precision_at_k(ranked, relevant, k)
    for k in cfg.recall_ks:
        metrics[f"recall@{k}"] = recall_at_k(ranked, relevant, k)
    for k in cfg.mar_ks:
        metrics[f"mar@{k}"] = average_recall_at_k(ranked, relevant, k)
    top = ranked[: cfg.diversity_k]
    if bundle.content_vectors is not None:
        try:
            metrics[f"diversity@{cfg.diversity_k}"] = intra_list_diversity(
                [full.items[j] for j in top], bundle.content_vectors
            )
        except EmptyInputError:
            log.debug("editor %s: diversity undefined (zero vectors)", editor_id)
    return EditorEval(
        editor_id=editor_id,
        metrics=metrics,
        top_items=tuple(top),
        fold_in_items=tuple(int(j) for j in first_half),
        relevant_items=tuple(relevant),
        negatives=tuple(int(j) for j in negatives),
    )


def evaluate_model(
    bundle: ModelBundle,
    full: InteractionMatrix,
    test: InteractionMatrix,
    cfg: ProtocolConfig,
    dataset_id: str = "dataset",
    keep_per_editor: bool = False,
) -> MetricsReport:
    """Aggregate the per-editor protocol over every eligible test editor."""
    per_editor: list[EditorEval] = []
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    top_lists = []
    evaluated = 0
    for i in range(test.n_editors):
        result = evaluate_editor(i, bundle, full, test, cfg)
        if result is None:
            continue
        evaluated += 1
        for name, value in result.metrics.items():
            sums[name] = sums.get(name, 0.0) + value
            counts[name] = counts.get(name, 0) + 1
        top_lists.append(result.top_items)
        if keep_per_editor:
            per_editor.append(result)
    metrics = {name: sums[name] / counts[name] for name in sorted(sums)}
    if top_lists:
        metrics[f"coverage@{cfg.diversity_k}"] = catalog_coverage(
            top_lists, full.n_items
        )
    report = MetricsReport(
        metrics=metrics,
        meta={
            "seed": cfg.seed,
            "dataset": dataset_id,
            "model": bundle.name,
            "editors_evaluated": evaluated,
        },
        per_editor=per_editor,
    )
    return report


@dataclass(frozen=True)
class SliceResult:
    matrix: InteractionMatrix
    target_sparsity: float
    achieved_sparsity: float


class SliceError(EmptyInputError):
    def __init__(self, target: float, closest: float):
        self.target = target
        self.closest = closest
        super().__init__(
            f"target sparsity {target:.6f} unreachable; closest achievable "
            f"is {closest:.6f}"
        )


SLICE_TOLERANCE = 0.0005  # 0.05 percentage points


def sparsity_slices(
    m: InteractionMatrix,
    targets,
    budget: tuple[int, int],
    tolerance: float = SLICE_TOLERANCE,
) -> list[SliceResult]:
    """Fixed-size sub-matrices hitting each target sparsity.

    Editors and items are ordered densest-first; windows of the budgeted
    size slide away from the dense end until a window's sparsity lands
    within tolerance of the target (item offset scanned outer, editor
    offset inner, first hit wins).  If no window qualifies, the error
    names the closest achievable value.
    """
    from .data import _subset

    budget_editors, budget_items = budget
    if budget_editors > m.n_editors or budget_items > m.n_items:
        raise ValueError("budget exceeds the matrix size")
    if budget_editors < 1 or budget_items < 1:
        raise ValueError("budget must be positive")
    editor_order = sorted(range(m.n_editors), key=lambda i: (-len(m.rows[i]), i))
    item_order = sorted(range(m.n_items), key=lambda j: (-len(m.cols[j]), j))
    dense = m.to_dense()[np.ix_(editor_order, item_order)]
    # item-axis prefix sums: row window counts in O(1) per (row, offset)
    col_prefix = np.zeros((m.n_editors, m.n_items + 1))
    col_prefix[:, 1:] = np.cumsum(dense, axis=1)
    cells = budget_editors * budget_items
    results = []
    for target in targets:
        best_gap, best_achieved = math.inf, math.nan
        found = None
        for io in range(m.n_items - budget_items + 1):
            row_counts = col_prefix[:, io + budget_items] - col_prefix[:, io]
            row_prefix = np.concatenate([[0.0], np.cumsum(row_counts)])
            nnz = row_prefix[budget_editors:] - row_prefix[: m.n_editors - budget_editors + 1]
            achieved = 1.0 - nnz / cells
            gaps = np.abs(achieved - target)
            eo = int(np.argmin(gaps))
            if gaps[eo] < best_gap:
                best_gap, best_achieved = float(gaps[eo]), float(achieved[eo])
            hits = np.nonzero(gaps <= tolerance)[0]
            if hits.size:
                found = (float(achieved[hits[0]]), int(hits[0]), io)
                break
        if not found:
            raise SliceError(target, best_achieved)
        achieved_value, eo, io = found
        editor_keep = sorted(editor_order[eo : eo + budget_editors])
        item_keep = sorted(item_order[io : io + budget_items])
        results.append(
            SliceResult(
                matrix=_subset(m, editor_keep, item_keep),
                target_sparsity=float(target),
                achieved_sparsity=achieved_value,
            )
        )
    return results
