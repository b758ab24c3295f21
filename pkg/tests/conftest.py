import json
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"
MINI = DATA / "mini"


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, visible in captured runs too."""
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance"
    )
    results = getattr(module, "CRITERION_RESULTS", [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for status, name in results:
        terminalreporter.write_line(f"[{status}] {name}")


@pytest.fixture(scope="session")
def mini_corpus_dir() -> Path:
    return MINI


@pytest.fixture(scope="session")
def mini_paths() -> dict:
    return {
        "items_content": str(MINI / "items-content.csv"),
        "items_relations": str(MINI / "items-relations.csv"),
        "edits": str(MINI / "edits.csv"),
    }


@pytest.fixture(scope="session")
def expected_mini_stats() -> dict:
    return json.loads((MINI / "expected_stats.json").read_text())


def make_config(tmp_path: Path, mini_paths: dict, **overrides) -> Path:
    """Write a small runnable config pointing at the mini corpus."""
    cfg = {
        "inputs": mini_paths,
        "dim": 8,
        "seed": 7,
        "out_dir": str(tmp_path / "out"),
        "filter": {"min_items_per_editor": 1, "min_editors_per_item": 1},
        "bpr": {"epochs": 3},
        "gmf": {"epochs": 3},
        "eals": {"sweeps": 3},
        "word_vectors": {"epochs": 2},
        "transr": {"epochs": 3},
        "nmor": {"epochs": 3, "hidden": 6},
        "protocol": {"n_negatives": 10, "fold_in_steps": 10},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path
