"""The fusion core: a per-dimension soft gate over three item representations.

Three pointwise layers (weights shared across all vector positions) map the
stacked (edit, content, relational) channels to three logits per position;
a softmax across channels yields simplex weights used to convex-combine
the representations before the dot product with the editor vector.

Only the gate trains; the four input representations stay frozen.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import InteractionMatrix
from .errors import DimensionMismatchError, DivergenceError, EmptyInputError

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
GATE_INIT_SCALE = 0.1


@dataclass
class GateParams:
    """Weights of the three pointwise gate layers (channel plan 3->H->H->3)."""

    dim: int
    hidden: int
    w1: np.ndarray  # (hidden, 3)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, hidden)
    b2: np.ndarray  # (hidden,)
    w3: np.ndarray  # (3, hidden)
    b3: np.ndarray  # (3,)

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "w1": self.w1, "b1": self.b1,
            "w2": self.w2, "b2": self.b2,
            "w3": self.w3, "b3": self.b3,
        }


@dataclass(frozen=True)
class FusionInput:
    e: np.ndarray
    v: np.ndarray
    c: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        dims = {arr.shape for arr in (self.e, self.v, self.c, self.r)}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise DimensionMismatchError("all four inputs must share one 1-D shape")


@dataclass(frozen=True)
class NmorConfig:
    batch_size: int = 32
    learning_rate: float = 0.001
    epochs: int = 100
    hidden: int = 1024
    seed: int = 0
    resample_negatives: bool = True


def init_gate(dim: int, hidden: int, seed: int) -> GateParams:
    rng = np.random.default_rng([seed, 0])
    # small positive hidden biases keep ReLU units initially active (and
    # off the exact kink, where the subgradient convention would bite)
    return GateParams(
        dim=dim,
        hidden=hidden,
        w1=rng.uniform(-GATE_INIT_SCALE, GATE_INIT_SCALE, size=(hidden, 3)),
        b1=np.full(hidden, 0.01),
        w2=rng.uniform(-GATE_INIT_SCALE, GATE_INIT_SCALE, size=(hidden, hidden)),
        b2=np.full(hidden, 0.01),
        w3=rng.uniform(-GATE_INIT_SCALE, GATE_INIT_SCALE, size=(3, hidden)),
        b3=np.zeros(3),
    )


def _stack_inputs(v, c, r) -> np.ndarray:
    v, c, r = (np.asarray(a, dtype=np.float64) for a in (v, c, r))
    if not (v.shape == c.shape == r.shape):
        raise DimensionMismatchError("v, c, r must share a shape")
    return np.stack([v, c, r], axis=-1)  # (..., dim, 3)


def _gate_raw(x: np.ndarray, params: GateParams):
    """Forward pass on a (..., dim, 3) stack; returns softmax weights and
    the intermediates needed for backprop."""
    z1 = x @ params.w1.T + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.w2.T + params.b2
    a2 = np.maximum(z2, 0.0)
    logits = a2 @ params.w3.T + params.b3
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    weights = expd / expd.sum(axis=-1, keepdims=True)
    return weights, (x, z1, a1, z2, a2, weights)


def gate_forward(v, c, r, params: GateParams):
    """Per-position simplex weights (w_v, w_c, w_r) for one item."""
    weights, _ = _gate_raw(_stack_inputs(v, c, r), params)
    return weights[..., 0], weights[..., 1], weights[..., 2]


def fuse(v, c, r, weights) -> np.ndarray:
    """Element-wise convex combination of the three representations."""
    w_v, w_c, w_r = (np.asarray(w, dtype=np.float64) for w in weights)
    v, c, r = (np.asarray(a, dtype=np.float64) for a in (v, c, r))
    if not (v.shape == c.shape == r.shape == w_v.shape == w_c.shape == w_r.shape):
        raise DimensionMismatchError("weights and representations must share a shape")
    return w_v * v + w_c * c + w_r * r


def predict(inp: FusionInput, params: GateParams) -> float:
    """Preference score: editor vector dotted with the gated item vector."""
    w_v, w_c, w_r = gate_forward(inp.v, inp.c, inp.r, params)
    merged = fuse(inp.v, inp.c, inp.r, (w_v, w_c, w_r))
    return float(np.asarray(inp.e, dtype=np.float64) @ merged)


def bce_loss(x: float, y: float) -> float:
    """Binary cross-entropy of sigmoid(x) against label y, in stable form."""
    x = float(x)
    return max(x, 0.0) - x * y + math.log1p(math.exp(-abs(x)))


def _batch_forward(e, v, c, r, params):
    x = np.stack([v, c, r], axis=-1)  # (B, dim, 3)
    weights, cache = _gate_raw(x, params)
    merged = (weights * x).sum(axis=-1)  # (B, dim)
    scores = np.einsum("bd,bd->b", e, merged)
    return scores, weights, cache


def batch_scores(e, v, c, r, params: GateParams) -> np.ndarray:
    scores, _, _ = _batch_forward(
        *(np.asarray(a, dtype=np.float64) for a in (e, v, c, r)), params
    )
    return scores


def gate_param_grads(e, v, c, r, y, params: GateParams):
    """Mean BCE loss of the batch plus gradients wrt every gate array."""
    e, v, c, r = (np.asarray(a, dtype=np.float64) for a in (e, v, c, r))
    y = np.asarray(y, dtype=np.float64)
    scores, weights, cache = _batch_forward(e, v, c, r, params)
    x, z1, a1, z2, a2, _ = cache
    batch = scores.shape[0]
    loss = float(
        np.mean(np.maximum(scores, 0.0) - scores * y + np.log1p(np.exp(-np.abs(scores))))
    )
    # dL/dscore, averaged over the batch
    dscore = (_sigmoid_vec(scores) - y) / batch  # (B,)
    dmerged = dscore[:, None] * e  # (B, dim)
    dweights = dmerged[:, :, None] * x  # (B, dim, 3)
    # softmax backward across the channel axis
    dot = (dweights * weights).sum(axis=-1, keepdims=True)
    dlogits = weights * (dweights - dot)  # (B, dim, 3)
    grads = {}
    grads["w3"] = np.einsum("bdo,bdh->oh", dlogits, a2)
    grads["b3"] = dlogits.sum(axis=(0, 1))
    da2 = dlogits @ params.w3
    dz2 = da2 * (z2 > 0.0)
    grads["w2"] = np.einsum("bdo,bdh->oh", dz2, a1)
    grads["b2"] = dz2.sum(axis=(0, 1))
    da1 = dz2 @ params.w2
    dz1 = da1 * (z1 > 0.0)
    grads["w1"] = np.einsum("bdo,bdh->oh", dz1, x)
    grads["b1"] = dz1.sum(axis=(0, 1))
    return loss, grads


def _sigmoid_vec(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    z = np.exp(x[~pos])
    out[~pos] = z / (1.0 + z)
    return out


@dataclass
class _AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def update(self, params: GateParams, grads: dict, lr: float) -> None:
        self.t += 1
        arrays = params.arrays()
        for name, grad in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(grad)
                self.v[name] = np.zeros_like(grad)
            self.m[name] = ADAM_BETA1 * self.m[name] + (1 - ADAM_BETA1) * grad
            self.v[name] = ADAM_BETA2 * self.v[name] + (1 - ADAM_BETA2) * grad * grad
            m_hat = self.m[name] / (1 - ADAM_BETA1**self.t)
            v_hat = self.v[name] / (1 - ADAM_BETA2**self.t)
            arrays[name] -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def train_nmor(
    train: InteractionMatrix,
    editor_vectors: np.ndarray,
    item_vectors: np.ndarray,
    content_vectors: np.ndarray,
    relational_vectors: np.ndarray,
    cfg: NmorConfig,
) -> tuple[GateParams, tuple[float, ...]]:
    """Train the gate on frozen representations with 1:1 negative sampling.

    Every epoch takes all observed (editor, item) pairs as positives plus
    an equal number of per-editor unobserved pairs as negatives (freshly
    resampled each epoch unless ``resample_negatives`` is off), shuffles,
    and runs minibatch Adam on the BCE of the predicted scores.  Only the
    gate parameters move.
    """
    if train.n_interactions == 0:
        raise EmptyInputError("training matrix has no interactions")
    for name, arr in (
        ("editor", editor_vectors),
        ("item", item_vectors),
        ("content", content_vectors),
        ("relational", relational_vectors),
    ):
        if arr.shape[0] < (train.n_editors if name == "editor" else train.n_items):
            raise DimensionMismatchError(
                f"{name} vectors cover {arr.shape[0]} rows, need more"
            )
    dim = item_vectors.shape[1]
    params = init_gate(dim, cfg.hidden, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    positives = train.sorted_entries()
    row_sets = train.row_sets
    E = np.asarray(editor_vectors, dtype=np.float64)
    V = np.asarray(item_vectors, dtype=np.float64)
    C = np.asarray(content_vectors, dtype=np.float64)
    R = np.asarray(relational_vectors, dtype=np.float64)
    state = _AdamState()
    fixed_negatives = None
    losses = []
    for epoch in range(cfg.epochs):
        if fixed_negatives is None or cfg.resample_negatives:
            negatives = _draw_negatives(rng, positives, row_sets, train.n_items)
            if not cfg.resample_negatives:
                fixed_negatives = negatives
        else:
            negatives = fixed_negatives
        editors = np.concatenate([positives[:, 0], negatives[:, 0]])
        items = np.concatenate([positives[:, 1], negatives[:, 1]])
        labels = np.concatenate(
            [np.ones(len(positives)), np.zeros(len(negatives))]
        )
        order = rng.permutation(len(labels))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            ii, jj, yy = editors[sel], items[sel], labels[sel]
            loss, grads = gate_param_grads(E[ii], V[jj], C[jj], R[jj], yy, params)
            if not math.isfinite(loss):
                raise DivergenceError(f"gate loss became non-finite at epoch {epoch}")
            state.update(params, grads, cfg.learning_rate)
            epoch_loss += loss * len(sel)
        losses.append(epoch_loss / len(labels))
        log.debug("gate epoch %d mean loss %.6f", epoch, losses[-1])
    return params, tuple(losses)


def _draw_negatives(rng, positives, row_sets, n_items: int) -> np.ndarray:
    negatives = np.empty_like(positives)
    for k in range(len(positives)):
        i = positives[k, 0]
        while True:
            j = int(rng.integers(0, n_items))
            if j not in row_sets[i]:
                break
        negatives[k] = (i, j)
    return negatives


def score_candidates(
    e: np.ndarray,
    candidate_ids,
    item_vectors,
    content_vectors,
    relational_vectors,
    params: GateParams,
) -> list[tuple[str, float]]:
    """Rank candidate items for one editor, highest score first.

    ``item_vectors``/``content_vectors``/``relational_vectors`` are
    EmbeddingMatrix instances; duplicate candidate ids are collapsed.
    Ties break by ascending item id.
    """
    if len(candidate_ids) == 0:
        raise EmptyInputError("no candidate items to score")
    unique_ids = sorted(set(candidate_ids))
    v, _ = item_vectors.align(unique_ids)
    c, _ = content_vectors.align(unique_ids)
    r, _ = relational_vectors.align(unique_ids)
    e_rows = np.tile(np.asarray(e, dtype=np.float64), (len(unique_ids), 1))
    scores = batch_scores(e_rows, v, c, r, params)
    ranked = sorted(zip(unique_ids, scores.tolist()), key=lambda t: (-t[1], t[0]))
    return [(item_id, float(s)) for item_id, s in ranked]
