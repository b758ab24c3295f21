"""The export job: items CSV in, WDR1 embedding file out."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .encoder import SentenceEncoder
from .projection import ProjectionError, project_to_dim
from .wdr1 import write_embeddings

log = logging.getLogger(__name__)

EXPECTED_HEADER = ["item_id", "label", "description"]


@dataclass(frozen=True)
class ExportJob:
    items_csv: str
    out_path: str
    dim: int
    encoder_path: str
    batch_size: int = 32


@dataclass(frozen=True)
class ExportResult:
    rows: int
    dim: int
    empty_items: int


def read_items(path) -> list[tuple[str, str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != EXPECTED_HEADER:
            raise ValueError(f"{path}: expected header {EXPECTED_HEADER}, got {header}")
        rows = []
        seen = set()
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path} line {reader.line_num}: expected 3 fields")
            if row[0] in seen:
                raise ValueError(f"{path}: duplicate item id {row[0]!r}")
            seen.add(row[0])
            rows.append((row[0], row[1], row[2]))
    return rows


def run_export(job: ExportJob) -> ExportResult:
    """Encode every item's description and write the embedding file.

    Row order follows the input CSV. Items whose description is empty get
    a zero row (the encoder has no sentence to read) and are counted in
    the result. The encoder's multi-scale outputs are averaged inside the
    encoder; a corpus-fitted PCA maps the encoder width down to the
    requested dimension when they differ.
    """
    items = read_items(job.items_csv)
    encoder = SentenceEncoder(job.encoder_path)
    ids = [item_id for item_id, _, _ in items]
    sentences = []
    positions = []
    empty = 0
    for pos, (_item_id, _label, description) in enumerate(items):
        if description.strip():
            positions.append(pos)
            sentences.append(description)
        else:
            empty += 1
    if empty:
        log.warning("%d of %d items have an empty description; writing zero rows",
                    empty, len(items))
    encoded = np.zeros((len(sentences), encoder.dim), dtype=np.float32)
    for start in range(0, len(sentences), job.batch_size):
        chunk = sentences[start : start + job.batch_size]
        encoded[start : start + len(chunk)] = encoder.encode(chunk)
    projected = (
        project_to_dim(encoded.astype(np.float64), job.dim).astype(np.float32)
        if len(sentences)
        else np.zeros((0, job.dim), dtype=np.float32)
    )
    if projected.shape[1] != job.dim:
        raise ProjectionError(
            f"projection produced dim {projected.shape[1]}, wanted {job.dim}"
        )
    data = np.zeros((len(items), job.dim), dtype=np.float32)
    for row, pos in enumerate(positions):
        data[pos] = projected[row]
    write_embeddings(ids, data, job.out_path)
    return ExportResult(rows=len(items), dim=job.dim, empty_items=empty)
