"""Editor- and item-centric edit representations via matrix factorization.

Three trainers over the binary interaction matrix: pairwise-ranking SGD
(BPR), pointwise cross-entropy SGD (GMF) and popularity-weighted
alternating least squares (eALS).  All are single-threaded and fully
deterministic under their seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import InteractionMatrix
from .errors import DimensionMismatchError, DivergenceError, EmptyInputError
from .store import EmbeddingMatrix

log = logging.getLogger(__name__)

INIT_SCALE = 0.01  # embeddings start uniform in [-INIT_SCALE, INIT_SCALE]
PROBE_SIZE = 1024


@dataclass(frozen=True)
class MfConfig:
    dim: int = 64
    learning_rate: float = 0.05
    l2_reg: float = 1e-4
    epochs: int = 50
    negatives_per_positive: int = 1
    seed: int = 0


@dataclass(frozen=True)
class EalsConfig:
    dim: int = 64
    l2_reg: float = 1e-4
    sweeps: int = 20
    popularity_weight_exponent: float = 0.5
    unobserved_scale: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class MfResult:
    editor_vectors: EmbeddingMatrix
    item_vectors: EmbeddingMatrix
    epoch_losses: tuple[float, ...]


def score(e: np.ndarray, v: np.ndarray) -> float:
    """Predicted preference: plain dot product of the two latent rows."""
    e = np.asarray(e, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if e.shape != v.shape:
        raise DimensionMismatchError(f"shapes {e.shape} and {v.shape} differ")
    return float(e @ v)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def bpr_pair_loss(s_pos: float, s_neg: float) -> float:
    """Pairwise ranking loss -ln sigmoid(s_pos - s_neg), overflow-safe."""
    return float(np.logaddexp(0.0, -(s_pos - s_neg)))


def bpr_step_grads(
    e: np.ndarray, v_pos: np.ndarray, v_neg: np.ndarray, l2_reg: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the per-step objective wrt the three sampled rows.

    The step objective is the pair loss plus an L2 penalty
    ``l2/2 * (|e|^2 + |v_pos|^2 + |v_neg|^2)`` on the touched rows only.
    """
    d = float(e @ (v_pos - v_neg))
    coeff = -_sigmoid(-d)  # d(pair loss)/dd
    g_e = coeff * (v_pos - v_neg) + l2_reg * e
    g_pos = coeff * e + l2_reg * v_pos
    g_neg = -coeff * e + l2_reg * v_neg
    return g_e, g_pos, g_neg


def _init(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    return rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n, dim))


def _positive_lists(train: InteractionMatrix):
    rows = train.rows
    row_sets = train.row_sets
    active = [i for i in range(train.n_editors) if len(rows[i]) > 0]
    return rows, row_sets, active


def _sample_negative(rng, row_set, n_items: int) -> int:
    while True:
        j = int(rng.integers(0, n_items))
        if j not in row_set:
            return j


def _probe_triples(train: InteractionMatrix, rng) -> np.ndarray:
    """A fixed (editor, positive, negative) probe set for loss reporting."""
    entries = train.sorted_entries()
    take = min(PROBE_SIZE, len(entries))
    picks = rng.choice(len(entries), size=take, replace=False)
    triples = np.empty((take, 3), dtype=np.int64)
    for k, idx in enumerate(sorted(picks.tolist())):
        i, j = entries[idx]
        triples[k] = (i, j, _sample_negative(rng, train.row_sets[i], train.n_items))
    return triples


def _check_finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise DivergenceError("training produced non-finite parameters")


def _result(train, E, V, losses) -> MfResult:
    _check_finite(E, V)
    return MfResult(
        editor_vectors=EmbeddingMatrix(train.editors, E.astype(np.float32)),
        item_vectors=EmbeddingMatrix(train.items, V.astype(np.float32)),
        epoch_losses=tuple(losses),
    )


def train_bpr(train: InteractionMatrix, cfg: MfConfig) -> MfResult:
    """Pairwise-ranking SGD over (editor, positive, negative) triples.

    Each epoch visits every observed entry once in a seeded shuffle; the
    negative item is rejection-sampled from the editor's unobserved items.
    The reported per-epoch loss is the mean pair loss over a fixed probe
    set, so it is comparable across epochs.
    """
    if train.n_interactions == 0:
        raise EmptyInputError("training matrix has no interactions")
    rng = np.random.default_rng([cfg.seed, 0])
    probe_rng = np.random.default_rng([cfg.seed, 1])
    E = _init(rng, train.n_editors, cfg.dim)
    V = _init(rng, train.n_items, cfg.dim)
    entries = train.sorted_entries()
    row_sets = train.row_sets
    probe = _probe_triples(train, probe_rng)
    lr, l2 = cfg.learning_rate, cfg.l2_reg
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(entries))
        for idx in order:
            i, p = entries[idx]
            for _ in range(cfg.negatives_per_positive):
                n = _sample_negative(rng, row_sets[i], train.n_items)
                e, vp, vn = E[i], V[p], V[n]
                d = float(e @ vp) - float(e @ vn)
                s = _sigmoid(-d)
                de = s * (vp - vn) - l2 * e
                dp = s * e - l2 * vp
                dn = -s * e - l2 * vn
                E[i] += lr * de
                V[p] += lr * dp
                V[n] += lr * dn
        losses.append(_probe_loss(E, V, probe))
        log.debug("bpr epoch %d probe loss %.6f", epoch, losses[-1])
    return _result(train, E, V, losses)


def _probe_loss(E, V, probe) -> float:
    e = E[probe[:, 0]]
    d = np.einsum("ij,ij->i", e, V[probe[:, 1]] - V[probe[:, 2]])
    return float(np.mean(np.logaddexp(0.0, -d)))


def train_gmf(train: InteractionMatrix, cfg: MfConfig) -> MfResult:
    """Pointwise SGD on the cross-entropy of sigmoid(e . v).

    Every positive entry is paired with ``negatives_per_positive`` freshly
    sampled unobserved items per epoch, labelled 0.
    """
    if train.n_interactions == 0:
        raise EmptyInputError("training matrix has no interactions")
    rng = np.random.default_rng([cfg.seed, 0])
    probe_rng = np.random.default_rng([cfg.seed, 1])
    E = _init(rng, train.n_editors, cfg.dim)
    V = _init(rng, train.n_items, cfg.dim)
    entries = train.sorted_entries()
    row_sets = train.row_sets
    probe = _probe_triples(train, probe_rng)
    lr, l2 = cfg.learning_rate, cfg.l2_reg
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(entries))
        for idx in order:
            i, p = entries[idx]
            examples = [(p, 1.0)]
            examples.extend(
                (_sample_negative(rng, row_sets[i], train.n_items), 0.0)
                for _ in range(cfg.negatives_per_positive)
            )
            for j, y in examples:
                e, v = E[i], V[j]
                g = _sigmoid(float(e @ v)) - y
                de = g * v + l2 * e
                dv = g * e + l2 * v
                E[i] -= lr * de
                V[j] -= lr * dv
        losses.append(_gmf_probe_loss(E, V, probe))
        log.debug("gmf epoch %d probe loss %.6f", epoch, losses[-1])
    return _result(train, E, V, losses)


def _gmf_probe_loss(E, V, probe) -> float:
    e = E[probe[:, 0]]
    x_pos = np.einsum("ij,ij->i", e, V[probe[:, 1]])
    x_neg = np.einsum("ij,ij->i", e, V[probe[:, 2]])
    loss_pos = np.logaddexp(0.0, -x_pos)
    loss_neg = np.logaddexp(0.0, x_neg)
    return float(np.mean(np.concatenate([loss_pos, loss_neg])))


def eals_weights(train: InteractionMatrix, exponent: float, scale: float) -> np.ndarray:
    """Per-item weight of unobserved cells: popularity^exponent, scaled so
    the mean unobserved weight equals ``scale``."""
    pop = np.array([len(c) for c in train.cols], dtype=np.float64)
    powed = np.power(np.maximum(pop, 0.0), exponent)
    mean = powed.mean()
    if mean == 0.0:
        return np.full(train.n_items, scale)
    return scale * powed / mean


def eals_objective(
    dense: np.ndarray, W: np.ndarray, E: np.ndarray, V: np.ndarray, l2_reg: float
) -> float:
    """Weighted squared reconstruction error plus the L2 penalty."""
    resid = dense - E @ V.T
    return float(np.sum(W * resid * resid) + l2_reg * (np.sum(E * E) + np.sum(V * V)))


def _solve_rows(target, W, fixed, l2_reg, label):
    """Per-row weighted ridge solves: returns argmin rows of the objective."""
    dim = fixed.shape[1]
    out = np.empty((target.shape[0], dim))
    eye = np.eye(dim)
    for i in range(target.shape[0]):
        w = W[i]
        A = (fixed * w[:, None]).T @ fixed + l2_reg * eye
        b = fixed.T @ (w * target[i])
        try:
            out[i] = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            log.warning("%s row %d: singular normal equations, adding ridge jitter",
                        label, i)
            out[i] = np.linalg.solve(A + 1e-6 * eye, b)
    return out


def train_eals(train: InteractionMatrix, cfg: EalsConfig) -> MfResult:
    """Alternating least squares with popularity-weighted unobserved cells.

    Observed cells carry weight 1; an unobserved cell in item j's column
    carries the item's popularity raised to the configured exponent
    (normalized, see :func:`eals_weights`).  Each sweep solves every
    editor row and then every item row exactly, so the objective is
    non-increasing across sweeps.
    """
    if train.n_interactions == 0:
        raise EmptyInputError("training matrix has no interactions")
    rng = np.random.default_rng([cfg.seed, 0])
    E = _init(rng, train.n_editors, cfg.dim)
    V = _init(rng, train.n_items, cfg.dim)
    dense = train.to_dense()
    w0 = eals_weights(train, cfg.popularity_weight_exponent, cfg.unobserved_scale)
    W = np.where(dense > 0, 1.0, w0[None, :])
    objectives = []
    for sweep in range(cfg.sweeps):
        E = _solve_rows(dense, W, V, cfg.l2_reg, "editor")
        V = _solve_rows(dense.T, W.T, E, cfg.l2_reg, "item")
        objectives.append(eals_objective(dense, W, E, V, cfg.l2_reg))
        log.debug("eals sweep %d objective %.6f", sweep, objectives[-1])
    return _result(train, E, V, objectives)
