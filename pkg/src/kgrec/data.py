"""Corpus ingestion: CSV parsing, cleaning, interaction matrices and splits.

Input files are UTF-8 RFC-4180 CSVs with fixed headers:

* ``items-content.csv``   -- ``item_id,label,description``
* ``items-relations.csv`` -- ``head_id,property_id,tail_id``
* ``edits.csv``           -- ``editor_id,item_id,timestamp,comment``

Everything downstream of parsing is a pure function over immutable values.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from typing import Iterable, NamedTuple

import numpy as np

from .errors import CsvParseError, DuplicateKeyError, EmptyInputError

log = logging.getLogger(__name__)

HOUR_SECONDS = 3600.0
DEFAULT_MAX_EDITS_PER_HOUR = 120.0


@dataclass(frozen=True)
class ItemContentRecord:
    item_id: str
    label: str
    description: str


class Triple(NamedTuple):
    head: str
    relation: str
    tail: str


@dataclass(frozen=True)
class TripleStore:
    """Deduplicated (head, relation, tail) edges of the item graph."""

    triples: tuple[Triple, ...]
    duplicates_dropped: int = 0

    def __len__(self) -> int:
        return len(self.triples)

    @cached_property
    def triple_set(self) -> frozenset[Triple]:
        return frozenset(self.triples)

    @cached_property
    def entities(self) -> tuple[str, ...]:
        seen = {t.head for t in self.triples} | {t.tail for t in self.triples}
        return tuple(sorted(seen))

    @cached_property
    def relations(self) -> tuple[str, ...]:
        return tuple(sorted({t.relation for t in self.triples}))


@dataclass(frozen=True)
class EditEvent:
    editor_id: str
    item_id: str
    timestamp: datetime
    comment: str = ""


@dataclass(frozen=True)
class InteractionMatrix:
    """Sparse binary editor-by-item matrix.

    ``entries`` holds (editor index, item index) pairs; presence means the
    editor has edited the item at least once.
    """

    editors: tuple[str, ...]
    items: tuple[str, ...]
    entries: frozenset[tuple[int, int]]

    def __post_init__(self):
        for i, j in self.entries:
            if not (0 <= i < len(self.editors) and 0 <= j < len(self.items)):
                raise ValueError(f"entry ({i}, {j}) out of range")

    @property
    def n_editors(self) -> int:
        return len(self.editors)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_interactions(self) -> int:
        return len(self.entries)

    @cached_property
    def rows(self) -> tuple[np.ndarray, ...]:
        """Sorted item indices per editor."""
        buckets: list[list[int]] = [[] for _ in self.editors]
        for i, j in self.entries:
            buckets[i].append(j)
        return tuple(np.array(sorted(b), dtype=np.int64) for b in buckets)

    @cached_property
    def cols(self) -> tuple[np.ndarray, ...]:
        """Sorted editor indices per item."""
        buckets: list[list[int]] = [[] for _ in self.items]
        for i, j in self.entries:
            buckets[j].append(i)
        return tuple(np.array(sorted(b), dtype=np.int64) for b in buckets)

    @cached_property
    def row_sets(self) -> tuple[frozenset[int], ...]:
        return tuple(frozenset(r.tolist()) for r in self.rows)

    @cached_property
    def editor_index(self) -> dict[str, int]:
        return {e: i for i, e in enumerate(self.editors)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {it: j for j, it in enumerate(self.items)}

    def sorted_entries(self) -> np.ndarray:
        """Entries as an (n, 2) array in lexicographic order."""
        if not self.entries:
            return np.empty((0, 2), dtype=np.int64)
        return np.array(sorted(self.entries), dtype=np.int64)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_editors, self.n_items), dtype=np.float64)
        if self.entries:
            idx = self.sorted_entries()
            dense[idx[:, 0], idx[:, 1]] = 1.0
        return dense


@dataclass(frozen=True)
class DatasetStats:
    n_editors: int
    n_items: int
    n_interactions: int
    items_per_editor: tuple[float, float, float]  # (median, mean, std)
    edits_per_editor: tuple[float, float, float]
    editors_per_item: tuple[float, float, float]
    sparsity: float

    def to_dict(self) -> dict:
        def triple(t):
            return {"median": t[0], "mean": t[1], "std": t[2]}

        return {
            "n_editors": self.n_editors,
            "n_items": self.n_items,
            "n_interactions": self.n_interactions,
            "sparsity": self.sparsity,
            "items_per_editor": triple(self.items_per_editor),
            "edits_per_editor": triple(self.edits_per_editor),
            "editors_per_item": triple(self.editors_per_item),
        }


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    validation_fraction_of_train: float = 0.1
    seed: int = 0
    cold_start_min: int = 2
    cold_start_max: int = 6

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if not 0.0 < self.validation_fraction_of_train < 1.0:
            raise ValueError("validation_fraction_of_train must be in (0, 1)")


@dataclass(frozen=True)
class SplitResult:
    train: InteractionMatrix
    validation: InteractionMatrix
    test: InteractionMatrix
    cold_start_editors: tuple[str, ...]


def _text_stream(source) -> io.TextIOBase:
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _rows(source, expected_header: list[str]):
    """Yield (line_number, row) after validating the header row."""
    reader = csv.reader(_text_stream(source))
    try:
        header = next(reader, None)
    except csv.Error as exc:
        raise CsvParseError(1, str(exc)) from exc
    if header != expected_header:
        raise CsvParseError(1, f"expected header {expected_header}, got {header}")
    while True:
        try:
            row = next(reader)
        except StopIteration:
            return
        except csv.Error as exc:
            raise CsvParseError(reader.line_num, str(exc)) from exc
        if not row:
            continue
        if len(row) != len(expected_header):
            raise CsvParseError(
                reader.line_num,
                f"expected {len(expected_header)} fields, got {len(row)}",
            )
        yield reader.line_num, row


def parse_content(source) -> list[ItemContentRecord]:
    """Parse the item content table; item ids must be unique."""
    records = []
    seen: set[str] = set()
    for line, (item_id, label, description) in _rows(
        source, ["item_id", "label", "description"]
    ):
        if not item_id:
            raise CsvParseError(line, "empty item_id")
        if item_id in seen:
            raise DuplicateKeyError(item_id)
        seen.add(item_id)
        records.append(ItemContentRecord(item_id, label, description))
    return records


def parse_relations(source) -> TripleStore:
    """Parse the item relations table into a deduplicated triple store."""
    triples: list[Triple] = []
    seen: set[Triple] = set()
    dropped = 0
    for line, (head, relation, tail) in _rows(
        source, ["head_id", "property_id", "tail_id"]
    ):
        if not head or not relation or not tail:
            raise CsvParseError(line, "empty field in relation row")
        triple = Triple(head, relation, tail)
        if triple in seen:
            dropped += 1
            continue
        seen.add(triple)
        triples.append(triple)
    return TripleStore(triples=tuple(triples), duplicates_dropped=dropped)


def _parse_timestamp(raw: str, line: int) -> datetime:
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        stamp = datetime.fromisoformat(text)
    except ValueError as exc:
        raise CsvParseError(line, f"unparseable timestamp {raw!r}") from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc)


def parse_edits(source) -> list[EditEvent]:
    """Parse edit events, returned in ascending timestamp order.

    The sort is stable, so events with equal timestamps keep input order.
    """
    events = []
    for line, (editor_id, item_id, raw_ts, comment) in _rows(
        source, ["editor_id", "item_id", "timestamp", "comment"]
    ):
        if not editor_id or not item_id:
            raise CsvParseError(line, "empty editor_id or item_id")
        events.append(
            EditEvent(editor_id, item_id, _parse_timestamp(raw_ts, line), comment)
        )
    events.sort(key=lambda e: e.timestamp)
    return events


def build_matrix(events: Iterable[EditEvent]) -> InteractionMatrix:
    """Binarize edit events into an interaction matrix.

    Editor and item orderings follow first appearance in the event list;
    repeated edits of the same pair collapse to a single entry.
    """
    editors: list[str] = []
    items: list[str] = []
    editor_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    entries: set[tuple[int, int]] = set()
    for event in events:
        i = editor_index.get(event.editor_id)
        if i is None:
            i = len(editors)
            editor_index[event.editor_id] = i
            editors.append(event.editor_id)
        j = item_index.get(event.item_id)
        if j is None:
            j = len(items)
            item_index[event.item_id] = j
            items.append(event.item_id)
        entries.add((i, j))
    if not entries:
        raise EmptyInputError("no edit events to build a matrix from")
    return InteractionMatrix(tuple(editors), tuple(items), frozenset(entries))


def _subset(
    m: InteractionMatrix, editor_keep: list[int], item_keep: list[int]
) -> InteractionMatrix:
    emap = {old: new for new, old in enumerate(editor_keep)}
    imap = {old: new for new, old in enumerate(item_keep)}
    entries = frozenset(
        (emap[i], imap[j]) for i, j in m.entries if i in emap and j in imap
    )
    return InteractionMatrix(
        editors=tuple(m.editors[i] for i in editor_keep),
        items=tuple(m.items[j] for j in item_keep),
        entries=entries,
    )


def filter_active(
    m: InteractionMatrix,
    min_items_per_editor: int,
    min_editors_per_item: int,
    single_pass: bool = False,
) -> InteractionMatrix:
    """Drop low-activity editors and items.

    Removals interact (dropping an editor lowers item degrees and vice
    versa), so by default thresholds are re-applied until a fixed point.
    ``single_pass`` applies each threshold exactly once instead.  The
    result may be empty.
    """
    if min_items_per_editor < 1 or min_editors_per_item < 1:
        raise ValueError("thresholds must be >= 1")
    editor_keep = set(range(m.n_editors))
    item_keep = set(range(m.n_items))
    entries = set(m.entries)
    while True:
        editor_deg: dict[int, int] = {}
        item_deg: dict[int, int] = {}
        for i, j in entries:
            editor_deg[i] = editor_deg.get(i, 0) + 1
            item_deg[j] = item_deg.get(j, 0) + 1
        bad_editors = {
            i for i in editor_keep if editor_deg.get(i, 0) < min_items_per_editor
        }
        bad_items = {
            j for j in item_keep if item_deg.get(j, 0) < min_editors_per_item
        }
        if not bad_editors and not bad_items:
            break
        editor_keep -= bad_editors
        item_keep -= bad_items
        entries = {
            (i, j) for i, j in entries if i in editor_keep and j in item_keep
        }
        if single_pass:
            break
    return _subset(m, sorted(editor_keep), sorted(item_keep))


def peak_hourly_rate(timestamps: list[datetime]) -> int:
    """Largest number of events inside any closed one-hour window."""
    times = sorted(t.timestamp() for t in timestamps)
    peak = 0
    j = 0
    for i in range(len(times)):
        if j < i:
            j = i
        while j + 1 < len(times) and times[j + 1] - times[i] <= HOUR_SECONDS:
            j += 1
        peak = max(peak, j - i + 1)
    return peak


def remove_outliers(
    events: list[EditEvent],
    max_edits_per_hour: float = DEFAULT_MAX_EDITS_PER_HOUR,
) -> tuple[list[EditEvent], list[str]]:
    """Drop every event of editors with burst-like activity.

    An editor is an outlier when its peak sliding one-hour edit count
    strictly exceeds ``max_edits_per_hour``.  Returns the surviving events
    (order preserved) and the removed editor ids, sorted.
    """
    if max_edits_per_hour <= 0:
        raise ValueError("max_edits_per_hour must be positive")
    per_editor: dict[str, list[datetime]] = {}
    for event in events:
        per_editor.setdefault(event.editor_id, []).append(event.timestamp)
    removed = {
        editor
        for editor, stamps in per_editor.items()
        if peak_hourly_rate(stamps) > max_edits_per_hour
    }
    kept = [e for e in events if e.editor_id not in removed]
    if removed:
        log.info("removed %d burst editors: %s", len(removed), sorted(removed))
    return kept, sorted(removed)


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_holdout(m: InteractionMatrix, spec: SplitSpec) -> SplitResult:
    """Per-editor hold-out split into train/validation/test matrices.

    For a regular editor with n items, the test set receives
    ``max(1, round((1 - train_fraction) * n))`` items chosen uniformly
    under the seed, the validation set ``round(vf * remaining)`` of what
    is left, and the rest trains.  Editors whose item count falls in the
    cold-start band contribute everything to test and are reported;
    editors with a single item go wholly to train (logged, never dropped).
    All three outputs share the input's editor/item index space.
    """
    rng = np.random.default_rng(spec.seed)
    train: set[tuple[int, int]] = set()
    validation: set[tuple[int, int]] = set()
    test: set[tuple[int, int]] = set()
    cold: list[str] = []
    for i in range(m.n_editors):
        row = m.rows[i]
        n = len(row)
        if n == 0:
            continue
        if spec.cold_start_min <= n <= spec.cold_start_max:
            test.update((i, j) for j in row)
            cold.append(m.editors[i])
            continue
        if n < 2:
            train.update((i, j) for j in row)
            log.info("editor %s has %d item(s); placed wholly in train",
                     m.editors[i], n)
            continue
        perm = rng.permutation(n)
        n_test = max(1, _half_up((1.0 - spec.train_fraction) * n))
        test_idx = perm[:n_test]
        remaining = perm[n_test:]
        n_val = _half_up(spec.validation_fraction_of_train * len(remaining))
        val_idx = remaining[:n_val]
        train_idx = remaining[n_val:]
        test.update((i, int(row[k])) for k in test_idx)
        validation.update((i, int(row[k])) for k in val_idx)
        train.update((i, int(row[k])) for k in train_idx)

    def wrap(entries):
        return InteractionMatrix(m.editors, m.items, frozenset(entries))

    return SplitResult(
        train=wrap(train),
        validation=wrap(validation),
        test=wrap(test),
        cold_start_editors=tuple(cold),
    )


def sparsity_from_counts(n_editors: int, n_items: int, n_interactions: int) -> float:
    return 1.0 - n_interactions / (n_editors * n_items)


def _triple(values: list[int]) -> tuple[float, float, float]:
    arr = np.array(values, dtype=np.float64)
    if arr.size == 0:
        return (0.0, 0.0, 0.0)
    return (float(np.median(arr)), float(arr.mean()), float(arr.std()))


def stats(m: InteractionMatrix, events: Iterable[EditEvent]) -> DatasetStats:
    """Dataset statistics over a matrix and the events that produced it.

    ``items_per_editor`` counts distinct items (matrix row degrees) while
    ``edits_per_editor`` counts raw events, so both readings of
    "interactions per editor" are reported.  Events whose pair is not in
    the matrix (e.g. removed by filtering) are ignored.
    """
    edit_counts = {e: 0 for e in m.editors}
    for event in events:
        i = m.editor_index.get(event.editor_id)
        j = m.item_index.get(event.item_id)
        if i is None or j is None or (i, j) not in m.entries:
            continue
        edit_counts[event.editor_id] += 1
    return DatasetStats(
        n_editors=m.n_editors,
        n_items=m.n_items,
        n_interactions=m.n_interactions,
        items_per_editor=_triple([len(r) for r in m.rows]),
        edits_per_editor=_triple([edit_counts[e] for e in m.editors]),
        editors_per_item=_triple([len(c) for c in m.cols]),
        sparsity=sparsity_from_counts(m.n_editors, m.n_items, m.n_interactions),
    )


def write_pairs_csv(m: InteractionMatrix, path) -> None:
    """Write a matrix as an ``editor_id,item_id`` pair CSV (LF endings)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["editor_id", "item_id"])
        for i, j in sorted(m.entries):
            writer.writerow([m.editors[i], m.items[j]])


def read_pairs_csv(source) -> InteractionMatrix:
    """Read a pair CSV back into a matrix (first-appearance ordering)."""
    editors: list[str] = []
    items: list[str] = []
    editor_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    entries: set[tuple[int, int]] = set()
    for _line, (editor_id, item_id) in _rows(source, ["editor_id", "item_id"]):
        i = editor_index.setdefault(editor_id, len(editors))
        if i == len(editors):
            editors.append(editor_id)
        j = item_index.setdefault(item_id, len(items))
        if j == len(items):
            items.append(item_id)
        entries.add((i, j))
    if not entries:
        raise EmptyInputError("pair CSV holds no rows")
    return InteractionMatrix(tuple(editors), tuple(items), frozenset(entries))
