"""Run configuration: one JSON file drives every command.

Fixed top-level keys; unknown keys anywhere are a hard error so mistyped
hyperparameters cannot pass silently.  The global seed is never used
directly: every component draws a stable sub-seed derived from
``(seed, component name)``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import SplitSpec
from .errors import KgrecError
from .evaluation import ProtocolConfig, derive_seed
from .fusion import NmorConfig
from .mf import EalsConfig, MfConfig
from .text import WordVectorConfig
from .transr import TransRConfig


class ConfigError(KgrecError):
    """Bad or unknown keys in the run configuration."""


@dataclass(frozen=True)
class FilterConfig:
    min_items_per_editor: int = 2
    min_editors_per_item: int = 1
    max_edits_per_hour: float = 120.0
    single_pass: bool = False


@dataclass(frozen=True)
class ContentConfig(WordVectorConfig):
    # when set, content vectors are imported from this embedding file
    # instead of being trained from the item text
    import_path: str | None = None
    tagged_tokens_path: str | None = None


@dataclass(frozen=True)
class GateTrainConfig(NmorConfig):
    cf_source: str = "bpr"  # which trainer provides E and V
    train_on: str = "train"  # or "validation"


@dataclass(frozen=True)
class RunConfig:
    items_content: str
    items_relations: str
    edits: str
    dim: int
    seed: int
    out_dir: str
    filter: FilterConfig
    split: SplitSpec
    bpr: MfConfig
    gmf: MfConfig
    eals: EalsConfig
    word_vectors: ContentConfig
    transr: TransRConfig
    nmor: GateTrainConfig
    protocol: ProtocolConfig
    eval_models: tuple[str, ...]
    slice_targets: tuple[float, ...]
    slice_budget: tuple[int, int] | None

    def sub_seed(self, name: str) -> int:
        return derive_seed(self.seed, name)

    @property
    def out(self) -> Path:
        return Path(self.out_dir)


def _build(cls, block: dict, where: str, **forced):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where!r}")
    merged = {**block, **forced}
    merged = {
        k: tuple(v) if isinstance(v, list) else v for k, v in merged.items()
    }
    try:
        return cls(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where!r} block: {exc}") from exc


_TOP_KEYS = {
    "inputs",
    "dim",
    "seed",
    "out_dir",
    "filter",
    "split",
    "bpr",
    "gmf",
    "eals",
    "word_vectors",
    "transr",
    "nmor",
    "protocol",
    "eval_models",
    "slices",
}

DEFAULT_EVAL_MODELS = ("cf", "cf+content", "cf+content+relations", "sum")


def load_config(path, seed_override: int | None = None, out_override=None) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")

    inputs = raw.get("inputs", {})
    bad = set(inputs) - {"items_content", "items_relations", "edits"}
    if bad:
        raise ConfigError(f"unknown key(s) {sorted(bad)} in 'inputs'")
    for key in ("items_content", "items_relations", "edits"):
        if key not in inputs:
            raise ConfigError(f"'inputs' is missing {key!r}")

    dim = int(raw.get("dim", 64))
    seed = int(raw["seed"]) if "seed" in raw else 0
    if seed_override is not None:
        seed = seed_override
    out_dir = str(out_override) if out_override else raw.get("out_dir", "out")

    def seeded(name):
        return derive_seed(seed, name)

    slices = raw.get("slices", {})
    bad = set(slices) - {"targets", "budget"}
    if bad:
        raise ConfigError(f"unknown key(s) {sorted(bad)} in 'slices'")
    budget = slices.get("budget")

    models = tuple(raw.get("eval_models", DEFAULT_EVAL_MODELS))
    for m in models:
        if m not in DEFAULT_EVAL_MODELS:
            raise ConfigError(
                f"unknown eval model {m!r}; choose from {DEFAULT_EVAL_MODELS}"
            )

    return RunConfig(
        items_content=inputs["items_content"],
        items_relations=inputs["items_relations"],
        edits=inputs["edits"],
        dim=dim,
        seed=seed,
        out_dir=out_dir,
        filter=_build(FilterConfig, raw.get("filter", {}), "filter"),
        split=_build(SplitSpec, raw.get("split", {}), "split", seed=seeded("split")),
        bpr=_build(MfConfig, raw.get("bpr", {}), "bpr", dim=dim, seed=seeded("bpr")),
        gmf=_build(MfConfig, raw.get("gmf", {}), "gmf", dim=dim, seed=seeded("gmf")),
        eals=_build(EalsConfig, raw.get("eals", {}), "eals", dim=dim, seed=seeded("eals")),
        word_vectors=_build(
            ContentConfig, raw.get("word_vectors", {}), "word_vectors",
            dim=dim, seed=seeded("word_vectors"),
        ),
        transr=_build(
            TransRConfig, raw.get("transr", {}), "transr",
            dim=dim, seed=seeded("transr"),
        ),
        nmor=_build(
            GateTrainConfig, raw.get("nmor", {}), "nmor", seed=seeded("nmor")
        ),
        protocol=_build(
            ProtocolConfig, raw.get("protocol", {}), "protocol",
            seed=seeded("protocol"),
        ),
        eval_models=models,
        slice_targets=tuple(float(t) for t in slices.get("targets", ())),
        slice_budget=tuple(int(b) for b in budget) if budget else None,
    )
