import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgrec.data import InteractionMatrix, stats
from kgrec.errors import EmptyInputError
from kgrec.evaluation import (
    ModelBundle,
    ProtocolConfig,
    SliceError,
    average_recall_at_k,
    catalog_coverage,
    derive_seed,
    evaluate_editor,
    evaluate_model,
    fold_in_editor,
    intra_list_diversity,
    precision_at_k,
    recall_at_k,
    sparsity_slices,
)
from kgrec.store import EmbeddingMatrix


# ------------------------------------------------------------ rank metrics


def test_precision_recall_worked_example():
    # relevant {A,B}, ranked [A,X,B,...]
    ranked = ["A", "X", "B", "Y", "Z"]
    relevant = ["A", "B"]
    assert precision_at_k(ranked, relevant, 3) == pytest.approx(2 / 3)
    assert recall_at_k(ranked, relevant, 3) == 1.0


def test_recall_zero_when_all_below_k():
    ranked = ["x1", "x2", "x3", "A", "B"]
    assert recall_at_k(ranked, ["A", "B"], 3) == 0.0


def test_perfect_top_k():
    ranked = ["A", "B", "C", "D"]
    assert precision_at_k(ranked, ["A", "B"], 4) == pytest.approx(0.5)
    assert recall_at_k(ranked, ["A", "B"], 4) == 1.0


def test_disjoint_sets_are_zero():
    assert precision_at_k(["x"], ["A"], 1) == 0.0
    assert recall_at_k(["x"], ["A"], 1) == 0.0


def test_recall_empty_relevant_is_an_error():
    with pytest.raises(EmptyInputError):
        recall_at_k(["x"], [], 1)


def test_average_recall_examples():
    assert average_recall_at_k(["A", "x"], ["A"], 2) == 1.0
    assert average_recall_at_k(["x", "A"], ["A"], 2) == 0.5


def test_metrics_match_bruteforce_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 20))
        ranked = [f"i{k}" for k in rng.permutation(n)]
        relevant = [f"i{k}" for k in rng.choice(n, size=int(rng.integers(1, n)),
                                                replace=False)]
        k = int(rng.integers(1, n + 1))
        hits = sum(1 for item in ranked[:k] if item in set(relevant))
        assert precision_at_k(ranked, relevant, k) == hits / k
        assert recall_at_k(ranked, relevant, k) == hits / len(relevant)
        ar = sum(
            sum(1 for item in ranked[:i] if item in set(relevant)) / len(relevant)
            for i in range(1, k + 1)
        ) / k
        assert average_recall_at_k(ranked, relevant, k) == pytest.approx(ar)


@settings(max_examples=40)
@given(
    st.integers(2, 15),
    st.data(),
)
def test_recall_monotone_in_k(n, data):
    ranked = [f"i{k}" for k in range(n)]
    relevant = data.draw(
        st.lists(st.sampled_from(ranked), min_size=1, max_size=n, unique=True)
    )
    values = [recall_at_k(ranked, relevant, k) for k in range(1, n + 1)]
    assert all(a <= b for a, b in zip(values, values[1:]))


@settings(max_examples=40)
@given(st.integers(2, 15), st.integers(1, 15), st.data())
def test_counts_are_integers(n, k, data):
    ranked = [f"i{j}" for j in range(n)]
    relevant = data.draw(
        st.lists(st.sampled_from(ranked), min_size=1, max_size=n, unique=True)
    )
    p = precision_at_k(ranked, relevant, k)
    r = recall_at_k(ranked, relevant, k)
    assert p * k == pytest.approx(round(p * k))
    assert r * len(relevant) == pytest.approx(round(r * len(relevant)))


# -------------------------------------------------------------- diversity


def _content(vectors):
    ids = tuple(f"q{k}" for k in range(len(vectors)))
    return ids, EmbeddingMatrix(ids, np.asarray(vectors, dtype=np.float32))


def test_diversity_identical_vectors_zero():
    ids, content = _content([[1.0, 0.0], [1.0, 0.0]])
    assert intra_list_diversity(ids, content) == pytest.approx(0.0, abs=1e-7)


def test_diversity_orthogonal_half():
    ids, content = _content([[1.0, 0.0], [0.0, 1.0]])
    assert intra_list_diversity(ids, content) == pytest.approx(0.5, abs=1e-7)


def test_diversity_antipodal_one():
    ids, content = _content([[1.0, 0.0], [-1.0, 0.0]])
    assert intra_list_diversity(ids, content) == pytest.approx(1.0, abs=1e-7)


def test_diversity_excludes_zero_vectors():
    ids, content = _content([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    assert intra_list_diversity(ids, content) == pytest.approx(0.5, abs=1e-7)


def test_diversity_all_zero_is_error():
    ids, content = _content([[0.0, 0.0], [0.0, 0.0]])
    with pytest.raises(EmptyInputError):
        intra_list_diversity(ids, content)


def test_diversity_needs_two_items():
    ids, content = _content([[1.0, 0.0]])
    with pytest.raises(ValueError):
        intra_list_diversity(ids, content)


# --------------------------------------------------------------- coverage


def test_coverage_identical_lists():
    lists = [["a", "b", "c"]] * 5
    assert catalog_coverage(lists, 30) == pytest.approx(3 / 30)


def test_coverage_full_catalog():
    lists = [["a", "b"], ["c", "d"]]
    assert catalog_coverage(lists, 4) == 1.0


def test_coverage_matches_union_oracle():
    rng = np.random.default_rng(1)
    lists = [
        [f"i{int(rng.integers(0, 40))}" for _ in range(10)] for _ in range(12)
    ]
    union = set()
    for lst in lists:
        union |= set(lst)
    assert catalog_coverage(lists, 40) == len(union) / 40


# ---------------------------------------------------------------- fold-in


def test_fold_in_pulls_toward_item_direction():
    rng = np.random.default_rng(2)
    u = np.array([1.0, 0.0, 0.0, 0.0])
    w = np.array([0.0, 1.0, 0.0, 0.0])
    V = 0.01 * rng.normal(size=(30, 4))
    V[:5] = u  # the editor's items all sit on u
    e = fold_in_editor(
        np.arange(5), V, np.arange(5, 30), steps=80, lr=0.1, seed=3
    )
    assert float(e @ u) > float(e @ w)


def test_fold_in_zero_steps_returns_init():
    V = np.zeros((10, 4))
    e = fold_in_editor(np.array([0]), V, np.arange(1, 10), steps=0, seed=9)
    rng = np.random.default_rng([9, 2])
    np.testing.assert_array_equal(e, rng.uniform(-0.01, 0.01, size=4))


def test_fold_in_deterministic():
    rng = np.random.default_rng(4)
    V = rng.normal(size=(20, 4))
    a = fold_in_editor(np.array([1, 2]), V, np.arange(3, 20), steps=25, seed=7)
    b = fold_in_editor(np.array([1, 2]), V, np.arange(3, 20), steps=25, seed=7)
    np.testing.assert_array_equal(a, b)


def test_fold_in_requires_positives():
    with pytest.raises(EmptyInputError):
        fold_in_editor(np.array([], dtype=int), np.zeros((5, 2)), np.arange(5),
                       steps=5)


# ---------------------------------------------------------- editor protocol


def _toy_world(seed=0, n_editors=6, n_items=30, dim=4):
    rng = np.random.default_rng(seed)
    entries = set()
    for i in range(n_editors):
        for j in rng.choice(n_items, size=10, replace=False):
            entries.add((i, int(j)))
    full = InteractionMatrix(
        tuple(f"u{i}" for i in range(n_editors)),
        tuple(f"q{j}" for j in range(n_items)),
        frozenset(entries),
    )
    test_entries = set()
    for i in range(n_editors):
        row = full.rows[i]
        test_entries.update((i, int(j)) for j in row[:4])
    test = InteractionMatrix(full.editors, full.items, frozenset(test_entries))
    items = EmbeddingMatrix(
        full.items, rng.normal(size=(n_items, dim)).astype(np.float32)
    )
    content = EmbeddingMatrix(
        full.items, rng.normal(size=(n_items, dim)).astype(np.float32)
    )
    bundle = ModelBundle(
        item_vectors=items, content_vectors=content,
        use_relations=False, gate=None, name="cf+content-sum",
    )
    return full, test, bundle


def test_evaluate_editor_never_leaks_relevant_items():
    full, test, bundle = _toy_world()
    cfg = ProtocolConfig(n_negatives=10, fold_in_steps=10, seed=5)
    for i in range(test.n_editors):
        result = evaluate_editor(i, bundle, full, test, cfg)
        assert result is not None
        fold_set = set(result.fold_in_items)
        relevant = set(result.relevant_items)
        assert not (fold_set & relevant)
        assert fold_set | relevant == set(test.rows[i].tolist())
        edited = full.row_sets[i]
        assert not (set(result.negatives) & edited)


def test_evaluate_editor_skips_tiny_editors():
    full, test, bundle = _toy_world()
    shrunk = InteractionMatrix(
        test.editors, test.items, frozenset({(0, next(iter(test.rows[0])))})
    )
    cfg = ProtocolConfig(n_negatives=5, fold_in_steps=5, seed=1)
    assert evaluate_editor(0, bundle, full, shrunk, cfg) is None


def test_evaluate_editor_matches_bruteforce_metrics():
    full, test, bundle = _toy_world(seed=3)
    cfg = ProtocolConfig(
        n_negatives=12, precision_ks=(3,), recall_ks=(5,), mar_ks=(3,),
        diversity_k=4, fold_in_steps=8, seed=11,
    )
    result = evaluate_editor(2, bundle, full, test, cfg)
    assert result is not None
    fused = bundle.fused_matrix(full.items)
    e = fold_in_editor(
        np.array(result.fold_in_items),
        fused,
        np.array([j for j in range(full.n_items) if j not in full.row_sets[2]]),
        steps=cfg.fold_in_steps, lr=cfg.fold_in_lr, l2_reg=cfg.fold_in_l2,
        seed=derive_seed(cfg.seed, "fold/u2"),
    )
    candidates = list(result.relevant_items) + list(result.negatives)
    scored = [(full.items[j], float(fused[j] @ e), j) for j in candidates]
    scored.sort(key=lambda t: (-t[1], t[0]))
    ranked = [j for _, _, j in scored]
    relevant = set(result.relevant_items)
    hits3 = sum(1 for j in ranked[:3] if j in relevant)
    assert result.metrics["precision@3"] == hits3 / 3
    hits5 = sum(1 for j in ranked[:5] if j in relevant)
    assert result.metrics["recall@5"] == hits5 / len(relevant)
    ar = sum(
        sum(1 for j in ranked[:i] if j in relevant) / len(relevant)
        for i in (1, 2, 3)
    ) / 3
    assert result.metrics["mar@3"] == pytest.approx(ar)
    assert result.top_items == tuple(ranked[:4])


def test_evaluate_model_aggregates_and_reports():
    full, test, bundle = _toy_world(seed=5)
    cfg = ProtocolConfig(
        n_negatives=10, precision_ks=(3,), recall_ks=(5,), mar_ks=(3,),
        diversity_k=3, fold_in_steps=5, seed=2,
    )
    report = evaluate_model(bundle, full, test, cfg, dataset_id="toy")
    assert report.meta["editors_evaluated"] == test.n_editors
    for name, value in report.metrics.items():
        assert 0.0 <= value <= 1.0, name
    assert "coverage@3" in report.metrics


# ------------------------------------------------------------------ slices


def _sliceable_matrix(seed=0, n_editors=30, n_items=60):
    rng = np.random.default_rng(seed)
    entries = set()
    for i in range(n_editors):
        # earlier editors are denser
        size = 3 + (n_editors - i) // 3
        for j in rng.choice(n_items, size=min(size, n_items), replace=False):
            entries.add((i, int(j)))
    return InteractionMatrix(
        tuple(f"u{i}" for i in range(n_editors)),
        tuple(f"q{j}" for j in range(n_items)),
        frozenset(entries),
    )


def test_slice_identity_at_full_budget():
    m = _sliceable_matrix()
    own = 1.0 - m.n_interactions / (m.n_editors * m.n_items)
    [result] = sparsity_slices(m, [own], (m.n_editors, m.n_items))
    assert result.matrix == m
    assert result.achieved_sparsity == pytest.approx(own)


def test_slice_hits_denser_target_verified_by_stats():
    m = _sliceable_matrix()
    [probe] = sparsity_slices(m, [1.0 - m.n_interactions / (m.n_editors * m.n_items)],
                              (m.n_editors, m.n_items))
    full_sparsity = probe.achieved_sparsity
    target = full_sparsity - 0.03
    [result] = sparsity_slices(m, [target], (15, 30), tolerance=0.01)
    recomputed = stats(result.matrix, []).sparsity
    assert abs(recomputed - target) <= 0.01
    assert result.achieved_sparsity == pytest.approx(recomputed)


def test_slice_impossible_target_errors_with_closest():
    m = _sliceable_matrix()
    with pytest.raises(SliceError) as err:
        sparsity_slices(m, [0.0], (15, 30))
    assert 0.0 < err.value.closest < 1.0


def test_slice_budget_validation():
    m = _sliceable_matrix()
    with pytest.raises(ValueError):
        sparsity_slices(m, [0.5], (m.n_editors + 1, 5))
