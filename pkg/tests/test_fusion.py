import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgrec.data import InteractionMatrix
from kgrec.errors import DimensionMismatchError, EmptyInputError
from kgrec.fusion import (
    FusionInput,
    GateParams,
    NmorConfig,
    bce_loss,
    fuse,
    gate_forward,
    gate_param_grads,
    init_gate,
    predict,
    score_candidates,
    train_nmor,
)
from kgrec.store import EmbeddingMatrix


def random_inputs(rng, dim, batch=1):
    return (
        rng.normal(size=(batch, dim)) if batch > 1 else rng.normal(size=dim)
        for _ in range(3)
    )


# ------------------------------------------------------------ gate_forward


def test_gate_weights_form_a_simplex():
    rng = np.random.default_rng(0)
    params = init_gate(dim=16, hidden=8, seed=1)
    v, c, r = random_inputs(rng, 16)
    w_v, w_c, w_r = gate_forward(v, c, r, params)
    np.testing.assert_allclose(w_v + w_c + w_r, np.ones(16), atol=1e-6)
    for w in (w_v, w_c, w_r):
        assert np.all(w >= 0.0) and np.all(w <= 1.0)


def test_zero_final_layer_gives_uniform_weights():
    rng = np.random.default_rng(1)
    params = init_gate(dim=8, hidden=5, seed=2)
    params.w3[:] = 0.0
    params.b3[:] = 0.0
    v, c, r = random_inputs(rng, 8)
    w_v, w_c, w_r = gate_forward(v, c, r, params)
    for w in (w_v, w_c, w_r):
        np.testing.assert_array_equal(w, np.full(8, 1.0 / 3.0))


def test_channel_permutation_equivariance():
    rng = np.random.default_rng(3)
    params = init_gate(dim=6, hidden=4, seed=4)
    perm = [2, 0, 1]
    permuted = GateParams(
        dim=params.dim,
        hidden=params.hidden,
        w1=params.w1[:, perm].copy(),
        b1=params.b1.copy(),
        w2=params.w2.copy(),
        b2=params.b2.copy(),
        w3=params.w3[perm, :].copy(),
        b3=params.b3[perm].copy(),
    )
    v, c, r = random_inputs(rng, 6)
    original = gate_forward(v, c, r, params)
    channels = [v, c, r]
    shuffled = gate_forward(*(channels[k] for k in perm), permuted)
    for out_pos in range(3):
        np.testing.assert_allclose(shuffled[out_pos], original[perm[out_pos]],
                                   atol=1e-12)


def test_gate_dimension_mismatch():
    params = init_gate(dim=4, hidden=3, seed=0)
    with pytest.raises(DimensionMismatchError):
        gate_forward(np.zeros(4), np.zeros(5), np.zeros(4), params)


# ------------------------------------------------------------------- fuse


def test_fuse_identical_representations_is_identity():
    rng = np.random.default_rng(5)
    u = rng.normal(size=10)
    params = init_gate(dim=10, hidden=4, seed=6)
    weights = gate_forward(u, u, u, params)
    np.testing.assert_allclose(fuse(u, u, u, weights), u, atol=1e-12)


def test_fuse_selects_single_channel():
    v, c, r = np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array([5.0, 6.0])
    ones, zeros = np.ones(2), np.zeros(2)
    np.testing.assert_array_equal(fuse(v, c, r, (ones, zeros, zeros)), v)


def test_fuse_matches_scalar_loop():
    rng = np.random.default_rng(7)
    v, c, r = rng.normal(size=(3, 9))
    w = rng.dirichlet(np.ones(3), size=9)
    weights = (w[:, 0], w[:, 1], w[:, 2])
    manual = np.array(
        [
            w[k, 0] * v[k] + w[k, 1] * c[k] + w[k, 2] * r[k]
            for k in range(9)
        ]
    )
    np.testing.assert_allclose(fuse(v, c, r, weights), manual, atol=1e-6)


# ---------------------------------------------------------------- predict


def test_predict_convexity_degeneracy():
    rng = np.random.default_rng(8)
    u = rng.normal(size=12)
    e = rng.normal(size=12)
    for seed in range(5):
        params = init_gate(dim=12, hidden=6, seed=seed)
        x = predict(FusionInput(e=e, v=u, c=u, r=u), params)
        assert x == pytest.approx(float(e @ u), abs=1e-6)


def test_predict_zero_editor_vector():
    rng = np.random.default_rng(9)
    params = init_gate(dim=5, hidden=4, seed=1)
    v, c, r = random_inputs(rng, 5)
    assert predict(FusionInput(e=np.zeros(5), v=v, c=c, r=r), params) == 0.0


def test_predict_hand_case_uniform_weights():
    params = init_gate(dim=2, hidden=4, seed=0)
    params.w3[:] = 0.0
    params.b3[:] = 0.0
    inp = FusionInput(
        e=np.array([1.0, 1.0]),
        v=np.array([2.0, 0.0]),
        c=np.array([0.0, 2.0]),
        r=np.array([0.0, 0.0]),
    )
    assert predict(inp, params) == pytest.approx(4.0 / 3.0, abs=1e-12)


# --------------------------------------------------------------- bce_loss


def test_bce_at_zero_is_ln2():
    assert bce_loss(0.0, 1.0) == pytest.approx(math.log(2), abs=1e-12)
    assert bce_loss(0.0, 0.0) == pytest.approx(math.log(2), abs=1e-12)


def test_bce_stable_at_large_logits():
    assert bce_loss(30.0, 1.0) == pytest.approx(9.36e-14, rel=1e-2)
    assert bce_loss(-30.0, 1.0) == pytest.approx(30.0, rel=1e-9)
    assert bce_loss(1000.0, 0.0) == pytest.approx(1000.0)
    assert bce_loss(-1000.0, 1.0) == pytest.approx(1000.0)


def test_bce_gradient_is_sigmoid_minus_label():
    eps = 1e-6
    for x, y in ((0.0, 1.0), (1.3, 0.0), (-2.0, 1.0)):
        numeric = (bce_loss(x + eps, y) - bce_loss(x - eps, y)) / (2 * eps)
        analytic = 1.0 / (1.0 + math.exp(-x)) - y
        assert analytic == pytest.approx(numeric, abs=1e-6)


@given(st.floats(-50, 50), st.sampled_from([0.0, 1.0]))
def test_bce_nonnegative(x, y):
    assert bce_loss(x, y) >= 0.0


# ------------------------------------------------------------- train_nmor


def _content_only_task(rng, n_editors=30, n_items=60, dim=8):
    """Positives decided purely by content similarity."""
    E = rng.normal(size=(n_editors, dim))
    C = rng.normal(size=(n_items, dim))
    V = 0.05 * rng.normal(size=(n_items, dim))
    R = 0.05 * rng.normal(size=(n_items, dim))
    entries = set()
    for i in range(n_editors):
        scores = C @ E[i]
        for j in np.argsort(-scores)[:8]:
            entries.add((i, int(j)))
    matrix = InteractionMatrix(
        tuple(f"u{i}" for i in range(n_editors)),
        tuple(f"q{j}" for j in range(n_items)),
        frozenset(entries),
    )
    return matrix, E, V, C, R


def test_gate_learns_to_prefer_content():
    rng = np.random.default_rng(10)
    matrix, E, V, C, R = _content_only_task(rng)
    params, losses = train_nmor(
        matrix, E, V, C, R, NmorConfig(hidden=8, epochs=30, seed=2,
                                       learning_rate=0.01)
    )
    w_v, w_c, w_r = gate_forward(V, C, R, params)
    assert w_c.mean() > w_v.mean()
    assert w_c.mean() > w_r.mean()
    assert losses[-1] < losses[0]


def test_training_loss_decreases_by_epoch_twenty():
    rng = np.random.default_rng(11)
    matrix, E, V, C, R = _content_only_task(rng, n_editors=15, n_items=30)
    _, losses = train_nmor(
        matrix, E, V, C, R, NmorConfig(hidden=6, epochs=21, seed=3,
                                       learning_rate=0.005)
    )
    assert losses[20] < losses[0]


def test_gate_gradients_match_finite_differences():
    rng = np.random.default_rng(12)
    params = init_gate(dim=4, hidden=5, seed=7)
    e, v, c, r = (rng.normal(size=(3, 4)) for _ in range(4))
    y = np.array([1.0, 0.0, 1.0])
    _, grads = gate_param_grads(e, v, c, r, y, params)
    eps = 1e-6
    for name, arr in params.arrays().items():
        numeric = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            up, _ = gate_param_grads(e, v, c, r, y, params)
            arr[idx] = orig - eps
            down, _ = gate_param_grads(e, v, c, r, y, params)
            arr[idx] = orig
            numeric[idx] = (up - down) / (2 * eps)
        rel = np.linalg.norm(grads[name] - numeric) / max(
            np.linalg.norm(grads[name]), np.linalg.norm(numeric), 1e-12
        )
        assert rel < 1e-4, name


def test_train_nmor_deterministic():
    rng = np.random.default_rng(13)
    matrix, E, V, C, R = _content_only_task(rng, n_editors=10, n_items=20)
    cfg = NmorConfig(hidden=4, epochs=3, seed=5)
    a, losses_a = train_nmor(matrix, E, V, C, R, cfg)
    b, losses_b = train_nmor(matrix, E, V, C, R, cfg)
    assert losses_a == losses_b
    for name, arr in a.arrays().items():
        np.testing.assert_array_equal(arr, b.arrays()[name])


def test_fixed_negatives_mode_differs_from_resampling():
    rng = np.random.default_rng(14)
    matrix, E, V, C, R = _content_only_task(rng, n_editors=10, n_items=20)
    resampled, _ = train_nmor(
        matrix, E, V, C, R, NmorConfig(hidden=4, epochs=4, seed=5)
    )
    fixed, _ = train_nmor(
        matrix, E, V, C, R,
        NmorConfig(hidden=4, epochs=4, seed=5, resample_negatives=False),
    )
    assert any(
        not np.array_equal(resampled.arrays()[k], fixed.arrays()[k])
        for k in resampled.arrays()
    )


# --------------------------------------------------------- score_candidates


def _bundle_matrices(rng, dim=6):
    ids = tuple(f"q{j}" for j in range(8))
    mk = lambda: EmbeddingMatrix(ids, rng.normal(size=(8, dim)).astype(np.float32))
    return mk(), mk(), mk()


def test_score_candidates_single_item():
    rng = np.random.default_rng(15)
    V, C, R = _bundle_matrices(rng)
    params = init_gate(dim=6, hidden=4, seed=0)
    out = score_candidates(rng.normal(size=6), ["q3"], V, C, R, params)
    assert len(out) == 1 and out[0][0] == "q3"


def test_score_candidates_deduplicates():
    rng = np.random.default_rng(16)
    V, C, R = _bundle_matrices(rng)
    params = init_gate(dim=6, hidden=4, seed=0)
    out = score_candidates(rng.normal(size=6), ["q1", "q1", "q2"], V, C, R, params)
    assert [item for item, _ in out] in (["q1", "q2"], ["q2", "q1"])


def test_score_candidates_descending_with_id_ties():
    rng = np.random.default_rng(17)
    V, C, R = _bundle_matrices(rng)
    params = init_gate(dim=6, hidden=4, seed=0)
    out = score_candidates(np.zeros(6), ["q5", "q2", "q7"], V, C, R, params)
    # zero editor vector scores everything 0; ties break by ascending id
    assert [item for item, _ in out] == ["q2", "q5", "q7"]


def test_score_candidates_consistent_with_predict():
    rng = np.random.default_rng(18)
    V, C, R = _bundle_matrices(rng)
    params = init_gate(dim=6, hidden=4, seed=1)
    e = rng.normal(size=6)
    out = dict(score_candidates(e, [f"q{j}" for j in range(8)], V, C, R, params))
    for j in range(8):
        inp = FusionInput(
            e=e,
            v=np.asarray(V.row(f"q{j}"), dtype=np.float64),
            c=np.asarray(C.row(f"q{j}"), dtype=np.float64),
            r=np.asarray(R.row(f"q{j}"), dtype=np.float64),
        )
        assert out[f"q{j}"] == pytest.approx(predict(inp, params), abs=1e-6)


def test_score_candidates_empty_rejected():
    rng = np.random.default_rng(19)
    V, C, R = _bundle_matrices(rng)
    with pytest.raises(EmptyInputError):
        score_candidates(np.zeros(6), [], V, C, R, init_gate(6, 4, 0))


@settings(max_examples=25)
@given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=12, unique=True),
       st.integers(-500, 500))
def test_ranking_invariant_to_constant_shift(scores, shift):
    # exact arithmetic so the shift cannot manufacture float ties
    ids = [f"q{k}" for k in range(len(scores))]
    base = sorted(zip(ids, map(float, scores)), key=lambda t: (-t[1], t[0]))
    shifted = sorted(
        zip(ids, [float(s + shift) for s in scores]), key=lambda t: (-t[1], t[0])
    )
    assert [i for i, _ in base] == [i for i, _ in shifted]
