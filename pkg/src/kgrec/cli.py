"""Operator command line.

Subcommands: ``ingest | stats | split | train <component> | eval |
recommend | slice``, all driven by one JSON config (``--config``) with
optional ``--seed`` and ``--out`` overrides.

Exit codes: 0 success, 2 usage or input error, 3 missing prerequisite
artifact, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data, text, transr
from .config import ConfigError, RunConfig, load_config
from .errors import DependencyError, DivergenceError, KgrecError
from .evaluation import (
    ModelBundle,
    evaluate_model,
    fold_in_editor,
    sparsity_slices,
)
from .fusion import GateParams, _gate_raw, train_nmor
from .mf import train_bpr, train_eals, train_gmf
from .store import (
    EmbeddingMatrix,
    read_embeddings,
    read_gate,
    write_embeddings,
    write_gate,
)

log = logging.getLogger(__name__)

TRAIN_COMPONENTS = ("bpr", "gmf", "eals", "content", "transr", "nmor")


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _write_training_log(losses, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(losses):
            writer.writerow([epoch, repr(float(loss))])


def _open(path):
    try:
        return open(path, "rb")
    except FileNotFoundError as exc:
        raise KgrecError(f"input file not found: {path}") from exc


def cmd_ingest(cfg: RunConfig) -> int:
    corpus_dir = cfg.out / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    with _open(cfg.edits) as fh:
        events = data.parse_edits(fh)
    # parsed now so schema errors surface during ingest, used by later stages
    with _open(cfg.items_content) as fh:
        data.parse_content(fh)
    with _open(cfg.items_relations) as fh:
        data.parse_relations(fh)

    events, removed = data.remove_outliers(events, cfg.filter.max_edits_per_hour)
    (corpus_dir / "removed_editors.txt").write_text(
        "".join(e + "\n" for e in removed), encoding="utf-8"
    )
    raw = data.build_matrix(events)
    data.write_pairs_csv(raw, corpus_dir / "interactions_raw.csv")
    _write_json(data.stats(raw, events).to_dict(), corpus_dir / "stats_raw.json")

    filtered = data.filter_active(
        raw,
        cfg.filter.min_items_per_editor,
        cfg.filter.min_editors_per_item,
        single_pass=cfg.filter.single_pass,
    )
    if filtered.n_interactions == 0:
        raise KgrecError("filtering removed every interaction")
    data.write_pairs_csv(filtered, corpus_dir / "interactions.csv")
    _write_json(data.stats(filtered, events).to_dict(), corpus_dir / "stats.json")

    split = data.split_holdout(filtered, cfg.split)
    data.write_pairs_csv(split.train, corpus_dir / "train.csv")
    data.write_pairs_csv(split.validation, corpus_dir / "validation.csv")
    data.write_pairs_csv(split.test, corpus_dir / "test.csv")
    (corpus_dir / "cold_start.txt").write_text(
        "".join(e + "\n" for e in split.cold_start_editors), encoding="utf-8"
    )
    print(f"corpus written to {corpus_dir}")
    return 0


def cmd_stats(cfg: RunConfig) -> int:
    with _open(cfg.edits) as fh:
        events = data.parse_edits(fh)
    events, _removed = data.remove_outliers(events, cfg.filter.max_edits_per_hour)
    matrix = data.build_matrix(events)
    print(json.dumps(data.stats(matrix, events).to_dict(), sort_keys=True, indent=2))
    return 0


def _load_universe(cfg: RunConfig) -> data.InteractionMatrix:
    path = cfg.out / "corpus" / "interactions.csv"
    if not path.exists():
        raise DependencyError(f"missing corpus matrix {path}; run ingest first")
    with open(path, "rb") as fh:
        return data.read_pairs_csv(fh)


def _load_split(cfg: RunConfig, name: str, universe) -> data.InteractionMatrix:
    path = cfg.out / "corpus" / f"{name}.csv"
    if not path.exists():
        raise DependencyError(f"missing split {path}; run ingest first")
    eidx = universe.editor_index
    iidx = universe.item_index
    entries = set()
    with open(path, "rb") as fh:
        for _line, (editor_id, item_id) in data._rows(
            fh, ["editor_id", "item_id"]
        ):
            entries.add((eidx[editor_id], iidx[item_id]))
    return data.InteractionMatrix(universe.editors, universe.items,
                                  frozenset(entries))


def cmd_split(cfg: RunConfig) -> int:
    universe = _load_universe(cfg)
    corpus_dir = cfg.out / "corpus"
    split = data.split_holdout(universe, cfg.split)
    data.write_pairs_csv(split.train, corpus_dir / "train.csv")
    data.write_pairs_csv(split.validation, corpus_dir / "validation.csv")
    data.write_pairs_csv(split.test, corpus_dir / "test.csv")
    (corpus_dir / "cold_start.txt").write_text(
        "".join(e + "\n" for e in split.cold_start_editors), encoding="utf-8"
    )
    print(f"splits rewritten under {corpus_dir}")
    return 0


def _model_dir(cfg: RunConfig, component: str) -> Path:
    path = cfg.out / "models" / component
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DependencyError(f"missing artifact {path} ({hint})")
    return path


def _train_mf(cfg: RunConfig, component: str) -> int:
    universe = _load_universe(cfg)
    train = _load_split(cfg, "train", universe)
    if component == "bpr":
        result = train_bpr(train, cfg.bpr)
    elif component == "gmf":
        result = train_gmf(train, cfg.gmf)
    else:
        result = train_eals(train, cfg.eals)
    out = _model_dir(cfg, component)
    write_embeddings(result.editor_vectors, out / "editor_vectors.bin")
    write_embeddings(result.item_vectors, out / "item_vectors.bin")
    _write_training_log(result.epoch_losses, out / "training_log.csv")
    print(f"{component} checkpoints written to {out}")
    return 0


def _train_content(cfg: RunConfig) -> int:
    universe = _load_universe(cfg)
    out = _model_dir(cfg, "content")
    wv_cfg = cfg.word_vectors
    if wv_cfg.import_path:
        matrix, missing = text.import_external(
            wv_cfg.import_path, wanted_ids=universe.items, expected_dim=cfg.dim
        )
        write_embeddings(matrix, out / "content_vectors.bin")
        _write_training_log([], out / "training_log.csv")
        print(f"imported content vectors ({missing} items missing) to {out}")
        return 0
    with _open(cfg.items_content) as fh:
        records = data.parse_content(fh)
    tagged = None
    if wv_cfg.tagged_tokens_path:
        with _open(wv_cfg.tagged_tokens_path) as fh:
            tagged = text.parse_tagged_tokens(fh)
    docs = text.build_docs(records, tagged_tokens=tagged)
    vectors = text.train_word_vectors(docs, wv_cfg)
    word_matrix = EmbeddingMatrix(
        tuple(sorted(vectors.vocabulary, key=vectors.vocabulary.get)),
        vectors.vectors.astype(np.float32),
    )
    write_embeddings(word_matrix, out / "word_vectors.bin")
    by_id = {doc.item_id: doc for doc in docs}
    item_docs = [
        by_id.get(item, text.TokenizedDoc(item, ())) for item in universe.items
    ]
    content, flagged = text.build_content_matrix(item_docs, vectors)
    write_embeddings(content, out / "content_vectors.bin")
    _write_training_log(vectors.epoch_losses, out / "training_log.csv")
    print(f"content vectors written to {out} ({flagged} zero rows)")
    return 0


def _train_transr(cfg: RunConfig) -> int:
    with _open(cfg.items_relations) as fh:
        triples = data.parse_relations(fh)
    model, losses = transr.train_transr(triples, cfg.transr)
    out = _model_dir(cfg, "transr")
    transr.save_model(model, out)
    _write_training_log(losses, out / "training_log.csv")
    universe = _load_universe(cfg)
    relational, missing = transr.build_relational_matrix(universe.items, model)
    write_embeddings(relational, out / "relational_vectors.bin")
    print(f"transr checkpoints written to {out} ({missing} items off-graph)")
    return 0


def _load_cf(cfg: RunConfig) -> tuple[EmbeddingMatrix, EmbeddingMatrix]:
    source = cfg.nmor.cf_source
    base = cfg.out / "models" / source
    editor = _require(base / "editor_vectors.bin", f"train {source} first")
    item = _require(base / "item_vectors.bin", f"train {source} first")
    return read_embeddings(editor), read_embeddings(item)


def _load_content_matrix(cfg: RunConfig) -> EmbeddingMatrix:
    path = _require(
        cfg.out / "models" / "content" / "content_vectors.bin",
        "content vectors; run `train content` first",
    )
    return read_embeddings(path)


def _load_relational_matrix(cfg: RunConfig) -> EmbeddingMatrix:
    path = _require(
        cfg.out / "models" / "transr" / "relational_vectors.bin",
        "relational vectors; run `train transr` first",
    )
    return read_embeddings(path)


def _train_gate(cfg: RunConfig) -> int:
    universe = _load_universe(cfg)
    editors, items = _load_cf(cfg)
    content = _load_content_matrix(cfg)
    relational = _load_relational_matrix(cfg)
    matrix_name = "validation" if cfg.nmor.train_on == "validation" else "train"
    train = _load_split(cfg, matrix_name, universe)
    E, _ = editors.align(universe.editors)
    V, _ = items.align(universe.items)
    C, _ = content.align(universe.items)
    R, _ = relational.align(universe.items)
    params, losses = train_nmor(train, E, V, C, R, cfg.nmor)
    out = _model_dir(cfg, "nmor")
    write_gate(params, out / "gate.bin")
    _write_training_log(losses, out / "training_log.csv")
    print(f"gate checkpoint written to {out}")
    return 0


def cmd_train(cfg: RunConfig, component: str) -> int:
    if component in ("bpr", "gmf", "eals"):
        return _train_mf(cfg, component)
    if component == "content":
        return _train_content(cfg)
    if component == "transr":
        return _train_transr(cfg)
    if component == "nmor":
        return _train_gate(cfg)
    raise KgrecError(f"unknown component {component!r}")


def _bundle(cfg: RunConfig, variant: str) -> ModelBundle:
    _editors, items = _load_cf(cfg)
    if variant == "cf":
        return ModelBundle(item_vectors=items, use_content=False,
                           use_relations=False, name="cf")
    content = _load_content_matrix(cfg)
    relational = _load_relational_matrix(cfg)
    if variant == "sum":
        return ModelBundle(item_vectors=items, content_vectors=content,
                           relational_vectors=relational, gate=None, name="sum")
    gate_path = _require(
        cfg.out / "models" / "nmor" / "gate.bin",
        "gate checkpoint; run `train nmor` first",
    )
    gate = read_gate(gate_path)
    if variant == "cf+content":
        return ModelBundle(item_vectors=items, content_vectors=content,
                           gate=gate, use_relations=False, name="cf+content")
    return ModelBundle(item_vectors=items, content_vectors=content,
                       relational_vectors=relational, gate=gate,
                       name="cf+content+relations")


METRIC_COLUMNS = (
    "precision@5", "precision@10", "recall@50", "recall@100", "recall@200",
    "mar@5", "mar@10", "diversity@10", "coverage@10",
)


def cmd_eval(cfg: RunConfig) -> int:
    universe = _load_universe(cfg)
    test = _load_split(cfg, "test", universe)
    eval_dir = cfg.out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for variant in cfg.eval_models:
        bundle = _bundle(cfg, variant)
        report = evaluate_model(bundle, universe, test, cfg.protocol,
                                dataset_id=str(cfg.out))
        _write_json(report.to_dict(),
                    eval_dir / f"report_{variant.replace('+', '_')}.json")
        rows.append((variant, report.metrics))
        print(variant, json.dumps(report.metrics, sort_keys=True))
    with open(eval_dir / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("model",) + METRIC_COLUMNS)
        for variant, metrics in rows:
            writer.writerow(
                [variant] + [
                    ("" if metrics.get(col) is None else repr(metrics[col]))
                    for col in METRIC_COLUMNS
                ]
            )
    print(f"reports written to {eval_dir}")
    return 0


def cmd_recommend(cfg: RunConfig, editor_id: str, k: int, history_path) -> int:
    universe = _load_universe(cfg)
    bundle = _bundle(cfg, "cf+content+relations")
    editors, _items = _load_cf(cfg)
    fused = bundle.fused_matrix(universe.items)
    if editor_id in universe.editor_index:
        idx = universe.editor_index[editor_id]
        edited = universe.row_sets[idx]
        if editor_id in editors:
            e = np.asarray(editors.row(editor_id), dtype=np.float64)
        else:
            e = None
    elif history_path is None:
        raise KgrecError(
            f"unknown editor {editor_id!r}; provide --history with one item id "
            "per line to fold the editor in"
        )
    else:
        edited = set()
        e = None
    if e is None:
        if history_path is None:
            raise KgrecError(
                f"editor {editor_id!r} has no trained vector; provide --history "
                "with one item id per line to fold the editor in"
            )
        history = [
            line.strip() for line in Path(history_path).read_text().splitlines()
            if line.strip()
        ]
        known = [universe.item_index[i] for i in history if i in universe.item_index]
        if not known:
            raise KgrecError("none of the history items are in the corpus")
        edited = edited | set(known)
        pool = np.array([j for j in range(universe.n_items) if j not in edited])
        e = fold_in_editor(
            np.array(known), fused, pool,
            steps=cfg.protocol.fold_in_steps, lr=cfg.protocol.fold_in_lr,
            l2_reg=cfg.protocol.fold_in_l2, seed=cfg.sub_seed(f"recommend/{editor_id}"),
        )
    candidates = np.array(
        [j for j in range(universe.n_items) if j not in edited], dtype=np.int64
    )
    scores = fused[candidates] @ e
    order = sorted(range(len(candidates)),
                   key=lambda t: (-scores[t], universe.items[candidates[t]]))
    top = order[:k]
    content = bundle.content_vectors
    relational = bundle.relational_vectors
    v, _ = bundle.item_vectors.align(universe.items)
    c, _ = content.align(universe.items)
    r, _ = relational.align(universe.items)
    x = np.stack([v, c, r], axis=-1).astype(np.float64)
    weights, _ = _gate_raw(x[candidates[top]], bundle.gate)
    mean_weights = weights.mean(axis=(0, 1))
    for rank, t in enumerate(top, start=1):
        print(f"{rank}\t{universe.items[candidates[t]]}\t{scores[t]:.6f}")
    print(
        "gate weights (edit, content, relations): "
        f"{mean_weights[0]:.4f} {mean_weights[1]:.4f} {mean_weights[2]:.4f}"
    )
    return 0


def cmd_slice(cfg: RunConfig) -> int:
    if not cfg.slice_targets or cfg.slice_budget is None:
        raise KgrecError("config block 'slices' needs 'targets' and 'budget'")
    universe = _load_universe(cfg)
    results = sparsity_slices(universe, cfg.slice_targets, cfg.slice_budget)
    slice_dir = cfg.out / "slices"
    slice_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for idx, piece in enumerate(results):
        sub = slice_dir / f"slice_{idx}"
        sub.mkdir(exist_ok=True)
        data.write_pairs_csv(piece.matrix, sub / "interactions.csv")
        summary.append(
            {
                "slice": idx,
                "target_sparsity": piece.target_sparsity,
                "achieved_sparsity": piece.achieved_sparsity,
                "n_editors": piece.matrix.n_editors,
                "n_items": piece.matrix.n_items,
            }
        )
        print(f"slice {idx}: target {piece.target_sparsity:.6f} "
              f"achieved {piece.achieved_sparsity:.6f}")
    _write_json({"slices": summary}, slice_dir / "slices.json")
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgrec",
        description="Hybrid recommender toolkit for knowledge-graph items",
    )
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="override the global seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest")
    sub.add_parser("stats")
    sub.add_parser("split")
    train = sub.add_parser("train")
    train.add_argument("component", choices=TRAIN_COMPONENTS)
    sub.add_parser("eval")
    rec = sub.add_parser("recommend")
    rec.add_argument("editor")
    rec.add_argument("-k", type=int, default=10)
    rec.add_argument("--history", default=None,
                     help="item-id list for folding in an unknown editor")
    sub.add_parser("slice")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "stats":
            return cmd_stats(cfg)
        if args.command == "split":
            return cmd_split(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.component)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "recommend":
            return cmd_recommend(cfg, args.editor, args.k, args.history)
        if args.command == "slice":
            return cmd_slice(cfg)
        raise KgrecError(f"unknown command {args.command!r}")
    except DependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (KgrecError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
