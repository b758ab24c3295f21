"""Item content representations.

Covers the in-repo path: tokenize label+description, train skip-gram word
vectors with negative sampling from scratch, and average word vectors into
per-item content vectors.  Externally precomputed sentence embeddings come
in through :func:`import_external` instead.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass

import numpy as np

from .data import ItemContentRecord, _rows
from .errors import DimensionMismatchError, EmptyInputError
from .store import EmbeddingMatrix, read_embeddings

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Compact English stopword list; callers may pass their own.
DEFAULT_STOPWORDS = frozenset(
    """a about above after again against all am an and any are as at be because
    been before being below between both but by could did do does doing down
    during each few for from further had has have having he her here hers
    herself him himself his how i if in into is it its itself just me more
    most my myself no nor not now of off on once only or other our ours
    ourselves out over own same she should so some such than that the their
    theirs them themselves then there these they this those through to too
    under until up very was we were what when where which while who whom why
    will with you your yours yourself yourselves""".split()
)

DEFAULT_ALLOWED_POS = frozenset({"NOUN", "ADJ"})


@dataclass(frozen=True)
class TokenizedDoc:
    item_id: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class WordVectorConfig:
    dim: int = 64
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    min_count: int = 1
    learning_rate: float = 0.025
    seed: int = 0


@dataclass
class WordVectors:
    vocabulary: dict[str, int]
    vectors: np.ndarray  # (vocab, dim) center vectors
    context_vectors: np.ndarray
    epoch_losses: tuple[float, ...] = ()

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def preprocess(label: str, description: str, stopwords=DEFAULT_STOPWORDS) -> tuple[str, ...]:
    """Tokenize label+description: lowercase, split on non-alphanumerics,
    drop stopwords and single-character tokens.  Idempotent."""
    text = f"{label} {description}".lower()
    return tuple(
        tok
        for tok in _TOKEN_RE.findall(text)
        if len(tok) > 1 and tok not in stopwords
    )


def build_docs(
    records: list[ItemContentRecord],
    stopwords=DEFAULT_STOPWORDS,
    tagged_tokens: dict[str, list[tuple[str, str]]] | None = None,
    allowed_pos=DEFAULT_ALLOWED_POS,
) -> list[TokenizedDoc]:
    """Tokenize every content record.

    When a tagged-token table is supplied, an item's tokens come from the
    table filtered to the allowed part-of-speech tags (then run through
    the usual lowercase/stopword/length rules); items missing from the
    table fall back to the default pipeline.
    """
    docs = []
    for rec in records:
        if tagged_tokens is not None and rec.item_id in tagged_tokens:
            kept = " ".join(
                tok for tok, pos in tagged_tokens[rec.item_id] if pos in allowed_pos
            )
            tokens = preprocess(kept, "", stopwords)
        else:
            tokens = preprocess(rec.label, rec.description, stopwords)
        docs.append(TokenizedDoc(rec.item_id, tokens))
    return docs


def parse_tagged_tokens(source) -> dict[str, list[tuple[str, str]]]:
    """Parse the optional ``item_id,token,pos`` hook table."""
    table: dict[str, list[tuple[str, str]]] = {}
    for _line, (item_id, token, pos) in _rows(source, ["item_id", "token", "pos"]):
        table.setdefault(item_id, []).append((token, pos))
    return table


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def sgns_step_grads(
    v_center: np.ndarray, u_context: np.ndarray, u_negatives: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of one skip-gram negative-sampling step.

    The step loss is ``-ln s(u_ctx.v) - sum_n ln s(-u_n.v)``.
    """
    g_ctx_coeff = _sigmoid(float(u_context @ v_center)) - 1.0
    g_center = g_ctx_coeff * u_context
    g_context = g_ctx_coeff * v_center
    g_negs = np.empty_like(u_negatives)
    for k in range(u_negatives.shape[0]):
        coeff = _sigmoid(float(u_negatives[k] @ v_center))
        g_center = g_center + coeff * u_negatives[k]
        g_negs[k] = coeff * v_center
    return g_center, g_context, g_negs


def sgns_step_loss(v_center, u_context, u_negatives) -> float:
    loss = float(np.logaddexp(0.0, -(u_context @ v_center)))
    for k in range(u_negatives.shape[0]):
        loss += float(np.logaddexp(0.0, u_negatives[k] @ v_center))
    return loss


def train_word_vectors(docs: list[TokenizedDoc], cfg: WordVectorConfig) -> WordVectors:
    """Skip-gram with negative sampling, trained from scratch.

    Center/context pairs come from a fixed symmetric window; negatives are
    drawn from the unigram distribution raised to 0.75.  The learning rate
    decays linearly over all scheduled pairs down to a floor of 1e-4.
    Deterministic under the seed.
    """
    counts: dict[str, int] = {}
    order: list[str] = []
    for doc in docs:
        for tok in doc.tokens:
            if tok not in counts:
                order.append(tok)
            counts[tok] = counts.get(tok, 0) + 1
    vocab_words = [w for w in order if counts[w] >= cfg.min_count]
    if not vocab_words:
        raise EmptyInputError("empty vocabulary after min_count filtering")
    vocabulary = {w: i for i, w in enumerate(vocab_words)}
    vocab_size = len(vocab_words)

    noise = np.array([counts[w] for w in vocab_words], dtype=np.float64) ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    rng = np.random.default_rng([cfg.seed, 0])
    V = rng.uniform(-0.5 / cfg.dim, 0.5 / cfg.dim, size=(vocab_size, cfg.dim))
    U = np.zeros((vocab_size, cfg.dim))

    encoded = [
        [vocabulary[t] for t in doc.tokens if t in vocabulary] for doc in docs
    ]
    pairs_per_epoch = sum(
        sum(
            min(len(doc), pos + cfg.window + 1) - max(0, pos - cfg.window) - 1
            for pos in range(len(doc))
        )
        for doc in encoded
    )
    total_pairs = max(1, pairs_per_epoch * cfg.epochs)
    seen = 0
    losses = []
    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        epoch_pairs = 0
        for doc in encoded:
            for pos, center in enumerate(doc):
                lo = max(0, pos - cfg.window)
                hi = min(len(doc), pos + cfg.window + 1)
                for ctx_pos in range(lo, hi):
                    if ctx_pos == pos:
                        continue
                    ctx = doc[ctx_pos]
                    lr = max(1e-4, cfg.learning_rate * (1.0 - seen / total_pairs))
                    seen += 1
                    negs = _draw_negatives(rng, noise_cdf, ctx, cfg.negatives)
                    epoch_loss += _sgns_update(V, U, center, ctx, negs, lr)
                    epoch_pairs += 1
        losses.append(epoch_loss / max(1, epoch_pairs))
        log.debug("word vectors epoch %d mean pair loss %.6f", epoch, losses[-1])
    return WordVectors(vocabulary=vocabulary, vectors=V, context_vectors=U,
                       epoch_losses=tuple(losses))


def _draw_negatives(rng, noise_cdf, ctx: int, count: int) -> list[int]:
    negs = []
    for _ in range(count):
        for _attempt in range(10):
            cand = int(np.searchsorted(noise_cdf, rng.random(), side="right"))
            cand = min(cand, len(noise_cdf) - 1)
            if cand != ctx:
                negs.append(cand)
                break
    return negs


def _sgns_update(V, U, center: int, ctx: int, negs: list[int], lr: float) -> float:
    """One SGD step; returns the step loss at the pre-update parameters."""
    v = V[center]
    dot = float(U[ctx] @ v)
    loss = float(np.logaddexp(0.0, -dot))
    coeff = _sigmoid(dot) - 1.0
    g_center = coeff * U[ctx]
    U[ctx] -= lr * coeff * v
    for n in negs:
        dot_n = float(U[n] @ v)
        loss += float(np.logaddexp(0.0, dot_n))
        c = _sigmoid(dot_n)
        g_center = g_center + c * U[n]
        U[n] -= lr * c * v
    V[center] -= lr * g_center
    return loss


def content_repr(doc: TokenizedDoc, wv: WordVectors) -> tuple[np.ndarray, bool]:
    """Mean of in-vocabulary token vectors.

    Returns the vector and a flag that is True when the doc was empty or
    entirely out of vocabulary (the vector is then all zeros).
    """
    rows = [wv.vocabulary[t] for t in doc.tokens if t in wv.vocabulary]
    if not rows:
        return np.zeros(wv.dim), True
    return wv.vectors[rows].mean(axis=0), False


def build_content_matrix(
    docs: list[TokenizedDoc], wv: WordVectors
) -> tuple[EmbeddingMatrix, int]:
    """Stack per-item content vectors; counts items that got a zero row."""
    data = np.zeros((len(docs), wv.dim), dtype=np.float32)
    flagged = 0
    for row, doc in enumerate(docs):
        vec, flag = content_repr(doc, wv)
        data[row] = vec.astype(np.float32)
        flagged += int(flag)
    if flagged:
        log.warning("%d of %d items have no in-vocabulary tokens", flagged, len(docs))
    return EmbeddingMatrix(tuple(d.item_id for d in docs), data), flagged


def import_external(
    path, wanted_ids=None, expected_dim: int | None = None
) -> tuple[EmbeddingMatrix, int]:
    """Load precomputed content embeddings from the binary store format.

    Rows are re-ordered to ``wanted_ids`` when given; ids absent from the
    file become zero rows and are counted in the returned warning count.
    """
    matrix = read_embeddings(path)
    if expected_dim is not None and matrix.dim != expected_dim:
        raise DimensionMismatchError(
            f"{path}: embedding dim {matrix.dim}, expected {expected_dim}"
        )
    if wanted_ids is None:
        return matrix, 0
    data, missing = matrix.align(wanted_ids)
    if missing:
        log.warning("%d of %d wanted ids missing from %s", missing, len(wanted_ids), path)
    return EmbeddingMatrix(tuple(wanted_ids), data), missing


def write_tagged_example(path, rows) -> None:
    """Helper for producing the optional tagged-token hook CSV."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id", "token", "pos"])
        writer.writerows(rows)
