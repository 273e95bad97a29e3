import json

import numpy as np
import pytest

from clonefuse import prior
from clonefuse.lexical import FIELD_ORDER
from clonefuse.prior import (
    GbdtConfig,
    SoftmaxConfig,
    fit_gbdt,
    fit_prior,
    fit_softmax,
    load_model,
    save_model,
)

FAST_GBDT = GbdtConfig(n_rounds=25)


def monotone_toy(n=200):
    """Only the first feature (jaccard) carries signal; the rest sit at 0.3."""
    X = np.full((n, 18), 0.3)
    X[:, 0] = np.linspace(0.0, 1.0, n)
    y = np.where(X[:, 0] > 0.5, 6, 0)
    return X, y


def blob_toy(seed=0, n_per=60):
    rng = np.random.default_rng(seed)
    X, y = [], []
    centers = {0: 0.1, 3: 0.5, 6: 0.9}
    for label, c in centers.items():
        pts = np.full((n_per, 18), 0.3)
        pts[:, 0] = rng.normal(c, 0.03, n_per)
        pts[:, 3] = rng.normal(1 - c, 0.03, n_per)
        X.append(pts)
        y.extend([label] * n_per)
    return np.vstack(X), np.array(y)


# -------------------------------------------------------------------- gbdt


def test_gbdt_fits_blobs():
    X, y = blob_toy()
    model = fit_gbdt(X, y, FIELD_ORDER, FAST_GBDT)
    proba = model.predict_proba(X)
    assert proba.shape == (len(y), 7)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
    assert (proba >= 0).all()
    assert (proba.argmax(axis=1) == y).mean() >= 0.95


def test_gbdt_monotone_in_jaccard():
    X, y = monotone_toy()
    model = fit_gbdt(X, y, FIELD_ORDER, FAST_GBDT)
    p6 = model.predict_proba(X)[:, 6]
    assert np.all(np.diff(p6) >= -1e-9)
    assert p6[0] < 0.1 and p6[-1] > 0.9


def test_gbdt_absent_classes_stay_quiet():
    X, y = blob_toy()
    model = fit_gbdt(X, y, FIELD_ORDER, FAST_GBDT)
    proba = model.predict_proba(X)
    present = {0, 3, 6}
    for c in range(7):
        if c not in present:
            assert not model.trees[c]
            assert proba[:, c].max() < 0.01
    assert set(np.unique(proba.argmax(axis=1))) <= present


def test_gbdt_depth_limit_respected():
    X, y = blob_toy()
    model = fit_gbdt(X, y, FIELD_ORDER, GbdtConfig(n_rounds=10, max_depth=3))

    def depth(node):
        if "value" in node:
            return 0
        return 1 + max(depth(node["left"]), depth(node["right"]))

    for per_class in model.trees:
        for tree in per_class:
            assert depth(tree) <= 3


def test_gbdt_handles_many_unique_values():
    rng = np.random.default_rng(4)
    X = np.full((2000, 18), 0.3)
    X[:, 0] = rng.random(2000)
    y = (X[:, 0] > 0.5).astype(int) * 6
    model = fit_gbdt(X, y, FIELD_ORDER, GbdtConfig(n_rounds=5, max_bins=256))
    acc = (model.predict_proba(X).argmax(axis=1) == y).mean()
    assert acc > 0.99

    # internal quantization really is bounded
    edges = prior._candidate_thresholds(X[:, 0], 256)
    assert len(edges) <= 255


def test_gbdt_refit_is_bit_identical(tmp_path):
    X, y = blob_toy(seed=2)
    a = fit_gbdt(X, y, FIELD_ORDER, FAST_GBDT)
    b = fit_gbdt(X, y, FIELD_ORDER, FAST_GBDT)
    pa, pb = tmp_path / "a.json", tmp_path / "b.json"
    save_model(a, pa)
    save_model(b, pb)
    assert pa.read_bytes() == pb.read_bytes()
    assert a.predict_proba(X).tobytes() == b.predict_proba(X).tobytes()


def test_gbdt_roundtrip(tmp_path):
    X, y = blob_toy(seed=5)
    model = fit_gbdt(X, y, FIELD_ORDER, FAST_GBDT)
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    assert isinstance(loaded, prior.GbdtModel)
    assert loaded.feature_order == list(FIELD_ORDER)
    assert model.predict_proba(X).tobytes() == loaded.predict_proba(X).tobytes()


def test_gbdt_rejects_wrong_width():
    X, y = blob_toy()
    model = fit_gbdt(X, y, FIELD_ORDER, GbdtConfig(n_rounds=2))
    with pytest.raises(ValueError, match="features"):
        model.predict_proba(np.zeros((3, 5)))


# ----------------------------------------------------------------- softmax


def separable_toy(seed=1, n=240):
    """Binary 0-vs-6 by jaccard with a margin around the 0.5 boundary."""
    rng = np.random.default_rng(seed)
    X = np.full((n, 18), 0.3)
    low = rng.uniform(0.0, 0.42, n // 2)
    high = rng.uniform(0.58, 1.0, n - n // 2)
    X[:, 0] = np.concatenate([low, high])
    y = np.array([0] * (n // 2) + [6] * (n - n // 2))
    order = rng.permutation(n)
    return X[order], y[order]


def test_softmax_separable_accuracy():
    X, y = separable_toy()
    model = fit_softmax(X, y, FIELD_ORDER)
    acc = (model.predict_proba(X).argmax(axis=1) == y).mean()
    assert acc >= 0.99


def test_softmax_zero_init_determinism(tmp_path):
    X, y = separable_toy(seed=3)
    a = fit_softmax(X, y, FIELD_ORDER)
    b = fit_softmax(X, y, FIELD_ORDER)
    assert a.W.tobytes() == b.W.tobytes() and a.b.tobytes() == b.b.tobytes()
    pa = tmp_path / "a.json"
    pb = tmp_path / "b.json"
    save_model(a, pa)
    save_model(b, pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_softmax_permutation_consistency():
    X, y = separable_toy(seed=7)
    perm = np.random.default_rng(0).permutation(len(y))
    a = fit_softmax(X, y, FIELD_ORDER)
    b = fit_softmax(X[perm], y[perm], FIELD_ORDER)
    probe = X[:25]
    assert np.abs(a.predict_proba(probe) - b.predict_proba(probe)).max() < 1e-8


def test_softmax_l2_shrinks_weights():
    X, y = separable_toy(seed=9)
    tight = fit_softmax(X, y, FIELD_ORDER, SoftmaxConfig(l2=0.1))
    loose = fit_softmax(X, y, FIELD_ORDER, SoftmaxConfig(l2=0.0))
    assert np.linalg.norm(tight.W) < np.linalg.norm(loose.W)


def test_softmax_roundtrip(tmp_path):
    X, y = separable_toy(seed=11)
    model = fit_softmax(X, y, FIELD_ORDER)
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    assert isinstance(loaded, prior.SoftmaxModel)
    assert model.predict_proba(X).tobytes() == loaded.predict_proba(X).tobytes()


# -------------------------------------------------------------- dispatcher


def test_fit_prior_dispatch():
    X, y = separable_toy(seed=13, n=60)
    assert fit_prior(X, y, FIELD_ORDER, "softmax").kind == "softmax"
    assert fit_prior(X, y, FIELD_ORDER, "gbdt", GbdtConfig(n_rounds=2)).kind == "gbdt"
    with pytest.raises(ValueError, match="unknown prior kind"):
        fit_prior(X, y, FIELD_ORDER, "forest")


def test_load_rejects_unknown_kind(tmp_path):
    path = tmp_path / "weird.json"
    path.write_text(json.dumps({"kind": "mystery"}))
    with pytest.raises(ValueError, match="unknown prior kind"):
        load_model(path)
