import math

import numpy as np
import pytest

from clonefuse import fusion
from clonefuse.fusion import (
    FeatureBundle,
    ProbabilityDistribution,
    TrainConfig,
    adamw_step,
    backward,
    cross_entropy,
    forward,
    init_adamw_state,
    init_params,
    load_checkpoint,
    lr_at,
    predict,
    predict_batch,
    save_checkpoint,
    train,
)


def random_inputs(rng, n=3, d=8):
    H = rng.standard_normal((n, d))
    S = rng.random((n, 7))
    S = S / S.sum(axis=1, keepdims=True)
    V = rng.random((n, 6))
    return H, S, V


def randomized_params(seed=1, d=8, d_k=5, hidden=6):
    """All parameter tensors non-zero so every gradient path is exercised."""
    params = init_params(d, d_k=d_k, hidden=hidden, seed=seed)
    rng = np.random.default_rng(seed + 100)
    for key in ("film_w2", "film_b2", "cls_w", "cls_b", "ln_bias"):
        params[key] = rng.normal(0, 0.3, params[key].shape)
    params["ln_gain"] = 1.0 + rng.normal(0, 0.2, params["ln_gain"].shape)
    return params


# ------------------------------------------------------------- init checks


def test_film_is_exact_identity_at_init():
    rng = np.random.default_rng(0)
    params = init_params(16, seed=3)
    for _ in range(100):
        H, S, V = random_inputs(rng, n=1, d=16)
        _, cache = forward(params, H, S, V)
        assert np.array_equal(cache["M"], cache["H"])  # bit-exact identity


def test_initial_distribution_uniform():
    params = init_params(8, seed=0)
    H, S, V = random_inputs(np.random.default_rng(1), n=4, d=8)
    probs, _ = forward(params, H, S, V)
    np.testing.assert_array_equal(probs, np.full((4, 7), 1.0 / 7.0))


def test_initial_distribution_matches_class_prior():
    prior = np.array([0.4, 0.2, 0.1, 0.1, 0.1, 0.05, 0.05])
    params = init_params(8, seed=0, class_prior=prior)
    H, S, V = random_inputs(np.random.default_rng(2), n=3, d=8)
    probs, _ = forward(params, H, S, V)
    np.testing.assert_allclose(probs, np.tile(prior, (3, 1)), atol=1e-12)


def test_layer_norm_whitens():
    params = randomized_params(seed=5, d=32, d_k=8, hidden=6)
    H, S, V = random_inputs(np.random.default_rng(3), n=6, d=32)
    _, cache = forward(params, H, S, V)
    xhat = cache["xhat"]
    assert np.abs(xhat.mean(axis=1)).max() < 1e-4
    assert np.abs(xhat.var(axis=1) - 1.0).max() < 1e-4


def test_attention_weights_are_simplex_over_six_slots():
    params = randomized_params(seed=7)
    H, S, V = random_inputs(np.random.default_rng(4), n=5, d=8)
    _, cache = forward(params, H, S, V)
    w = cache["w"]
    assert w.shape == (5, 6)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
    assert (w > 0).all()


# ---------------------------------------------------------------- gradients


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    params = randomized_params(seed=11)
    H, S, V = random_inputs(rng, n=3, d=8)
    labels = np.array([0, 3, 6])
    smoothing = 0.1

    def loss_with(p):
        probs, _ = forward(p, H, S, V)
        return cross_entropy(probs, labels, smoothing)

    _, cache = forward(params, H, S, V)
    grads = backward(params, cache, labels, smoothing)

    eps = 1e-6
    worst = 0.0
    for key in fusion.PARAM_KEYS:
        flat = params[key].reshape(-1)
        gflat = grads[key].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_with(params)
            flat[i] = orig - eps
            down = loss_with(params)
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            ga = gflat[i]
            err = abs(ga - fd) / max(abs(ga), abs(fd), 1e-8)
            if abs(ga - fd) > 1e-9:
                assert err < 1e-4, f"{key}[{i}]: analytic {ga}, fd {fd}"
            worst = max(worst, err if abs(ga - fd) > 1e-9 else 0.0)
    assert worst < 1e-4


def test_cross_entropy_uniform_is_log_k():
    probs = np.full((2, 7), 1 / 7)
    labels = np.array([0, 5])
    for smoothing in (0.0, 0.1):
        assert cross_entropy(probs, labels, smoothing) == pytest.approx(math.log(7))


def test_cross_entropy_hand_value():
    p = np.zeros((1, 7))
    p[0] = [0.7, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05]
    assert cross_entropy(p, np.array([0])) == pytest.approx(-math.log(0.7))


# -------------------------------------------------------------------- adamw


def test_adamw_zero_lr_is_identity():
    params = randomized_params(seed=2)
    before = {k: v.copy() for k, v in params.items()}
    grads = {k: np.ones_like(v) for k, v in params.items()}
    state = init_adamw_state(params)
    adamw_step(params, grads, state, TrainConfig(learning_rate=0.0, warmup_steps=0))
    for k in params:
        assert np.array_equal(params[k], before[k])


def test_adamw_first_step_formula():
    params = init_params(8, seed=0)
    grads = {k: np.ones_like(v) for k, v in params.items()}
    state = init_adamw_state(params)
    cfg = TrainConfig(learning_rate=0.1, warmup_steps=0, weight_decay=0.01)
    adamw_step(params, grads, state, cfg)
    # ln_gain starts at exactly 1.0; with g=1: mhat=1, vhat=1
    expected = 1.0 - 0.1 * (1.0 / (1.0 + cfg.eps) + 0.01 * 1.0)
    np.testing.assert_allclose(params["ln_gain"], expected, rtol=0, atol=1e-15)


def test_warmup_schedule():
    cfg = TrainConfig(learning_rate=1e-4, warmup_steps=80)
    assert lr_at(0, cfg) == pytest.approx(1e-4 / 80)
    assert lr_at(39, cfg) == pytest.approx(1e-4 * 40 / 80)
    assert lr_at(79, cfg) == pytest.approx(1e-4)
    assert lr_at(500, cfg) == 1e-4
    assert lr_at(0, TrainConfig(learning_rate=1e-4, warmup_steps=0)) == 1e-4


# ----------------------------------------------------------------- training


def toy_training_set(seed=0, n_per=40, d=8):
    rng = np.random.default_rng(seed)
    classes = [0, 3, 5]
    centers = rng.normal(0, 2.0, (len(classes), d))
    H, y = [], []
    for ci, c in enumerate(classes):
        H.append(centers[ci] + 0.1 * rng.standard_normal((n_per, d)))
        y.extend([c] * n_per)
    H = np.vstack(H)
    y = np.array(y)
    S = np.full((len(y), 7), 1 / 7)
    V = rng.random((len(y), 6)) * 0.1
    return H, S, V, y


def test_toy_training_reaches_95_percent():
    H, S, V, y = toy_training_set()
    params = init_params(8, d_k=8, hidden=8, seed=4)
    cfg = TrainConfig(learning_rate=1e-2, epochs=30, batch_size=32,
                      warmup_steps=10, label_smoothing=0.1, seed=9)
    result = train(params, H, S, V, y, cfg)
    probs = predict_batch(result.params, H, S, V)
    acc = (probs.argmax(axis=1) == y).mean()
    assert acc >= 0.95
    assert result.epoch_losses[2] < result.epoch_losses[0]
    assert result.steps == cfg.epochs * math.ceil(len(y) / cfg.batch_size)


def test_training_is_bit_reproducible():
    H, S, V, y = toy_training_set(seed=5)
    cfg = TrainConfig(learning_rate=1e-3, epochs=3, seed=21)
    a = train(init_params(8, seed=1), H, S, V, y, cfg)
    b = train(init_params(8, seed=1), H, S, V, y, cfg)
    for key in fusion.PARAM_KEYS:
        assert a.params[key].tobytes() == b.params[key].tobytes()
    assert a.epoch_losses == b.epoch_losses
    c = train(init_params(8, seed=1), H, S, V, y, TrainConfig(learning_rate=1e-3, epochs=3, seed=22))
    assert any(a.params[k].tobytes() != c.params[k].tobytes() for k in fusion.PARAM_KEYS)


# ------------------------------------------------------------ distributions


def test_top_k_breaks_ties_by_lower_index():
    probs = np.full(7, 1 / 7)
    dist = ProbabilityDistribution(probs)
    assert dist.top_k(3) == [(0, 1 / 7), (1, 1 / 7), (2, 1 / 7)]
    p = np.array([0.1, 0.05, 0.3, 0.05, 0.3, 0.1, 0.1])
    assert [label for label, _ in ProbabilityDistribution(p).top_k(3)] == [2, 4, 0]
    assert ProbabilityDistribution(p).predicted == 2


def test_predict_single_bundle():
    params = init_params(8, seed=0)
    bundle = FeatureBundle(
        pair_id="p1",
        lexical=np.zeros(18),
        structural=np.linspace(0, 1, 6),
        prior=np.full(7, 1 / 7),
        semantic=np.arange(8, dtype=np.float64),
    )
    dist = predict(params, bundle)
    assert dist.probs.shape == (7,)
    assert dist.confidence == pytest.approx(1 / 7)
    payload = dist.to_json()
    assert payload["prediction"] == 0 and len(payload["top3"]) == 3


# -------------------------------------------------------------- checkpoints


def test_checkpoint_roundtrip_bitwise(tmp_path):
    H, S, V, y = toy_training_set(seed=2, n_per=10)
    result = train(init_params(8, seed=3), H, S, V, y, TrainConfig(epochs=1, seed=0))
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, result.params, seed=3, step=result.steps)
    loaded, meta = load_checkpoint(path)
    for key in fusion.PARAM_KEYS:
        assert loaded[key].tobytes() == result.params[key].tobytes()
    assert meta == {"seed": 3, "step": result.steps}
    # identical params => identical bytes, and no hidden timestamps
    again = tmp_path / "ckpt2.json"
    save_checkpoint(again, result.params, seed=3, step=result.steps)
    assert path.read_bytes() == again.read_bytes()


def test_checkpoint_version_guard(tmp_path):
    path = tmp_path / "ckpt.json"
    path.write_text('{"version": 99}')
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)
