"""Item relational representations via TransR.

Entities and relations get separate embedding spaces; each relation owns a
projection matrix that maps entities into its space, where the relation
acts as a translation.  Training is minibatch SGD on binary cross-entropy
over positive triples and corrupted negatives.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Triple, TripleStore
from .errors import DivergenceError, EmptyInputError, UnknownIdError
from .store import (
    EmbeddingMatrix,
    read_embeddings,
    read_projections,
    write_embeddings,
    write_projections,
)

log = logging.getLogger(__name__)

PROJECTION_NOISE = 0.01
INIT_RANGE_NUMERATOR = 6.0  # classic uniform(-6/sqrt(dim), 6/sqrt(dim)) init
INITIAL_BIAS = 1.0
DISTANCE_FLOOR = 1e-12  # keeps the norm gradient defined at zero distance
MAX_CORRUPT_ATTEMPTS = 100


@dataclass(frozen=True)
class TransRConfig:
    dim: int = 64
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 0.01
    negatives_per_positive: int = 1
    seed: int = 0


@dataclass
class TransRModel:
    entity_ids: tuple[str, ...]
    relation_ids: tuple[str, ...]
    entity_vectors: np.ndarray  # (entities, dim)
    relation_vectors: np.ndarray  # (relations, dim)
    projections: np.ndarray  # (relations, dim, dim)
    score_bias: float

    def __post_init__(self):
        self.entity_index = {e: i for i, e in enumerate(self.entity_ids)}
        self.relation_index = {r: i for i, r in enumerate(self.relation_ids)}

    @property
    def dim(self) -> int:
        return self.entity_vectors.shape[1]


def _lookup(model: TransRModel, head: str, relation: str, tail: str):
    try:
        h = model.entity_index[head]
        t = model.entity_index[tail]
    except KeyError as exc:
        raise UnknownIdError(f"unknown entity {exc.args[0]!r}") from exc
    try:
        r = model.relation_index[relation]
    except KeyError as exc:
        raise UnknownIdError(f"unknown relation {relation!r}") from exc
    return h, r, t


def transr_distance(head: str, relation: str, tail: str, model: TransRModel) -> float:
    """Translation residual norm |h.M_r + v_r - t.M_r| in relation space."""
    h, r, t = _lookup(model, head, relation, tail)
    proj = model.projections[r]
    g = (model.entity_vectors[h] - model.entity_vectors[t]) @ proj
    g = g + model.relation_vectors[r]
    return float(np.linalg.norm(g))


def triple_probability(head: str, relation: str, tail: str, model: TransRModel) -> float:
    """sigmoid(bias - distance): monotone decreasing in the distance."""
    d = transr_distance(head, relation, tail, model)
    return _sigmoid(model.score_bias - d)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def triple_grads(
    h_vec: np.ndarray,
    t_vec: np.ndarray,
    r_vec: np.ndarray,
    proj: np.ndarray,
    bias: float,
    label: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float, float]:
    """Gradients of the BCE loss of one triple wrt every parameter group.

    Returns (g_head, g_tail, g_relation, g_projection, g_bias, loss).
    """
    diff = h_vec - t_vec
    g = diff @ proj + r_vec
    d = max(float(np.linalg.norm(g)), DISTANCE_FLOOR)
    s = bias - d
    p = _sigmoid(s)
    loss = float(np.logaddexp(0.0, -s)) if label == 1.0 else float(np.logaddexp(0.0, s))
    # dL/ds = p - label; ds/dd = -1
    dl_dd = -(p - label)
    dl_dg = dl_dd * g / d
    g_head = dl_dg @ proj.T
    g_tail = -g_head
    g_rel = dl_dg
    g_proj = np.outer(diff, dl_dg)
    g_bias = p - label
    return g_head, g_tail, g_rel, g_proj, g_bias, loss


def corrupt(
    triples: TripleStore, seed: int, positives: list[Triple] | None = None
) -> list[Triple]:
    """One corrupted negative per positive triple.

    A fair coin picks head or tail; the chosen side is replaced with a
    uniformly random entity, resampling while the result is a known
    positive.  Deterministic under the seed.
    """
    rng = np.random.default_rng([seed, 0])
    return corrupt_with_rng(triples, rng, positives)


def corrupt_with_rng(
    triples: TripleStore, rng: np.random.Generator, positives=None
) -> list[Triple]:
    entities = triples.entities
    if len(entities) < 2:
        raise EmptyInputError("cannot corrupt triples: fewer than two entities")
    known = triples.triple_set
    out = []
    for pos in positives if positives is not None else triples.triples:
        for _attempt in range(MAX_CORRUPT_ATTEMPTS):
            replace_head = bool(rng.integers(0, 2))
            entity = entities[int(rng.integers(0, len(entities)))]
            cand = (
                Triple(entity, pos.relation, pos.tail)
                if replace_head
                else Triple(pos.head, pos.relation, entity)
            )
            if cand not in known:
                out.append(cand)
                break
        else:
            raise EmptyInputError(
                f"could not corrupt {pos}: every candidate is a known positive"
            )
    return out


def train_transr(triples: TripleStore, cfg: TransRConfig) -> tuple[TransRModel, tuple[float, ...]]:
    """Minibatch SGD on BCE over positives (label 1) and corruptions (label 0).

    Entity vectors are renormalized to norm <= 1 after every epoch.
    Aborts with a diagnostic if the loss goes non-finite.
    """
    if len(triples) == 0:
        raise EmptyInputError("empty triple store")
    entities = triples.entities
    relations = triples.relations
    rng = np.random.default_rng([cfg.seed, 0])
    n_ent, n_rel, dim = len(entities), len(relations), cfg.dim
    bound = INIT_RANGE_NUMERATOR / math.sqrt(dim)
    ent_vecs = rng.uniform(-bound, bound, size=(n_ent, dim))
    rel_vecs = rng.uniform(-bound, bound, size=(n_rel, dim))
    projections = np.tile(np.eye(dim), (n_rel, 1, 1)) + rng.uniform(
        -PROJECTION_NOISE, PROJECTION_NOISE, size=(n_rel, dim, dim)
    )
    bias = INITIAL_BIAS
    model = TransRModel(
        entity_ids=entities,
        relation_ids=relations,
        entity_vectors=ent_vecs,
        relation_vectors=rel_vecs,
        projections=projections,
        score_bias=bias,
    )
    eidx = model.entity_index
    ridx = model.relation_index
    encoded = np.array(
        [(eidx[t.head], ridx[t.relation], eidx[t.tail]) for t in triples.triples],
        dtype=np.int64,
    )
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(encoded))
        epoch_loss = 0.0
        n_examples = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            positives = [triples.triples[k] for k in batch.tolist()]
            negatives = []
            for _ in range(cfg.negatives_per_positive):
                negatives.extend(corrupt_with_rng(triples, rng, positives))
            examples = [(encoded[k], 1.0) for k in batch.tolist()]
            examples.extend(
                ((eidx[n.head], ridx[n.relation], eidx[n.tail]), 0.0)
                for n in negatives
            )
            g_ent = np.zeros_like(ent_vecs)
            g_rel = np.zeros_like(rel_vecs)
            g_proj = np.zeros_like(projections)
            g_bias = 0.0
            for (h, r, t), label in examples:
                gh, gt, gr, gp, gb, loss = triple_grads(
                    ent_vecs[h], ent_vecs[t], rel_vecs[r], projections[r],
                    bias, label,
                )
                g_ent[h] += gh
                g_ent[t] += gt
                g_rel[r] += gr
                g_proj[r] += gp
                g_bias += gb
                epoch_loss += loss
                n_examples += 1
            # per-example gradients applied at the full step size (batch
            # loss is the sum, not the mean; a mean would shrink steps by
            # the batch size and stall training at the stated rates)
            ent_vecs -= cfg.learning_rate * g_ent
            rel_vecs -= cfg.learning_rate * g_rel
            projections -= cfg.learning_rate * g_proj
            bias -= cfg.learning_rate * g_bias
        norms = np.linalg.norm(ent_vecs, axis=1)
        over = norms > 1.0
        if np.any(over):
            ent_vecs[over] /= norms[over, None]
        mean_loss = epoch_loss / max(1, n_examples)
        if not math.isfinite(mean_loss):
            raise DivergenceError(f"transr loss became non-finite at epoch {epoch}")
        losses.append(mean_loss)
        log.debug("transr epoch %d mean loss %.6f", epoch, mean_loss)
    model.entity_vectors = ent_vecs
    model.relation_vectors = rel_vecs
    model.projections = projections
    model.score_bias = bias
    return model, tuple(losses)


def relational_repr(item_id: str, model: TransRModel) -> tuple[np.ndarray, bool]:
    """Entity vector for an item; zero vector + flag when absent."""
    idx = model.entity_index.get(item_id)
    if idx is None:
        return np.zeros(model.dim), True
    return model.entity_vectors[idx].copy(), False


def build_relational_matrix(
    item_ids, model: TransRModel
) -> tuple[EmbeddingMatrix, int]:
    data = np.zeros((len(item_ids), model.dim), dtype=np.float32)
    missing = 0
    for row, item_id in enumerate(item_ids):
        vec, flag = relational_repr(item_id, model)
        data[row] = vec.astype(np.float32)
        missing += int(flag)
    if missing:
        log.warning("%d of %d items absent from the item graph", missing, len(item_ids))
    return EmbeddingMatrix(tuple(item_ids), data), missing


def save_model(model: TransRModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_embeddings(
        EmbeddingMatrix(model.entity_ids, model.entity_vectors.astype(np.float32)),
        directory / "entity_vectors.bin",
    )
    write_embeddings(
        EmbeddingMatrix(model.relation_ids, model.relation_vectors.astype(np.float32)),
        directory / "relation_vectors.bin",
    )
    write_projections(
        model.relation_ids, model.projections, directory / "projections.bin"
    )
    meta = {"score_bias": model.score_bias}
    (directory / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_model(directory) -> TransRModel:
    directory = Path(directory)
    entity = read_embeddings(directory / "entity_vectors.bin")
    relation = read_embeddings(directory / "relation_vectors.bin")
    rel_ids, projections = read_projections(directory / "projections.bin")
    meta = json.loads((directory / "meta.json").read_text())
    return TransRModel(
        entity_ids=entity.ids,
        relation_ids=relation.ids,
        entity_vectors=entity.data.astype(np.float64),
        relation_vectors=relation.data.astype(np.float64),
        projections=projections.astype(np.float64),
        score_bias=float(meta["score_bias"]),
    )
