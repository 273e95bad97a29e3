"""Acceptance checks: one test per shipping criterion.

Run with `pytest tests/test_acceptance.py -v` for a pass/fail line per
criterion. Every check is self-timed where a budget applies and uses
either a brute-force oracle, a hand-worked example, or a constructed
scenario whose expected outcome follows from how it was built.
"""

import json
import random
import time

import numpy as np

from clonefuse import corpus, fusion, metrics
from clonefuse.corpus import assign_project_splits, content_hash, greedy_diverse_subset
from clonefuse.lexical import cosine, jaccard, levenshtein_norm, tokenize
from clonefuse.syntax import SyntaxTree, tree_edit_distance

from conftest import read_jsonl, run_chain
from synth import make_synthetic_corpus
from test_lexical import brute_cosine, brute_levenshtein
from test_syntax import oracle_ted, random_nested


def _done(tag):
    print(f"PASS {tag}")


# 1. Lexical similarities agree with brute-force oracles on 500 random pairs.
def test_c01_similarity_oracles_500_pairs():
    start = time.monotonic()
    rng = random.Random(401)
    vocab = [f"tok{i}" for i in range(30)]
    for _ in range(500):
        a = tuple(rng.choice(vocab) for _ in range(rng.randint(0, 40)))
        b = tuple(rng.choice(vocab) for _ in range(rng.randint(0, 40)))
        sa, sb = tokenize(" ".join(a)), tokenize(" ".join(b))
        assert sa.tokens == a and sb.tokens == b
        assert abs(cosine(sa, sb) - brute_cosine(a, b)) < 1e-12
        longest = max(len(a), len(b))
        expected_lev = brute_levenshtein(a, b) / longest if longest else 0.0
        assert abs(levenshtein_norm(sa, sb) - expected_lev) < 1e-12
        inter = len(set(a) & set(b))
        union = len(set(a) | set(b))
        expected_j = inter / union if union else 1.0
        assert abs(jaccard(sa, sb) - expected_j) < 1e-12
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
    _done("c01 similarity oracles, 500 random pairs")


# 2. Tree edit distance equals an independent recursion and is a metric.
def test_c02_ted_oracle_and_axioms_200_trees():
    start = time.monotonic()
    rng = random.Random(402)
    trees = [random_nested(rng, 8) for _ in range(200)]
    arenas = [SyntaxTree.from_nested(t) for t in trees]
    for _ in range(200):
        i, j = rng.randrange(200), rng.randrange(200)
        d = tree_edit_distance(arenas[i], arenas[j])
        assert d == oracle_ted(trees[i], trees[j])
        assert d == tree_edit_distance(arenas[j], arenas[i])
        assert (d == 0) == (trees[i] == trees[j])
    for _ in range(40):
        i, j, k = (rng.randrange(200) for _ in range(3))
        dij = tree_edit_distance(arenas[i], arenas[j])
        djk = tree_edit_distance(arenas[j], arenas[k])
        dik = tree_edit_distance(arenas[i], arenas[k])
        assert dik <= dij + djk
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"took {elapsed:.1f}s"
    _done("c02 ted oracle equality + metric axioms, 200 trees")


# 3. Analytic gradients of the fusion head match finite differences.
def test_c03_fusion_gradient_check():
    start = time.monotonic()
    rng = np.random.default_rng(403)
    n, d, d_k, hidden = 4, 20, 6, 5
    params = fusion.init_params(d, d_k=d_k, hidden=hidden, seed=403)
    for key in params:
        params[key] = params[key] + 0.05 * rng.standard_normal(params[key].shape)
    H = rng.standard_normal((n, d))
    S = rng.dirichlet(np.ones(7), size=n)
    V = rng.standard_normal((n, 6))
    labels = np.array([0, 3, 5, 6])

    probs, cache = fusion.forward(params, H, S, V)
    grads = fusion.backward(params, cache, labels, smoothing=0.1)
    eps = 1e-6
    for key in fusion.PARAM_KEYS:
        flat = params[key].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up, _ = fusion.forward(params, H, S, V)
            lo_val = fusion.cross_entropy(up, labels, 0.1)
            flat[idx] = orig - eps
            dn, _ = fusion.forward(params, H, S, V)
            hi_val = fusion.cross_entropy(dn, labels, 0.1)
            flat[idx] = orig
            numeric = (lo_val - hi_val) / (2 * eps)
            analytic = grads[key].reshape(-1)[idx]
            if abs(numeric) > 1e-9 or abs(analytic) > 1e-9:
                rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic))
                assert rel < 1e-4, f"{key}[{idx}]: {analytic} vs {numeric}"
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"took {elapsed:.1f}s"
    _done("c03 full finite-difference gradient check")


# 4. Freshly initialised modulation is an exact identity map.
def test_c04_film_identity_at_init():
    rng = np.random.default_rng(404)
    params = fusion.init_params(24, d_k=8, hidden=6, seed=404)
    for _ in range(100):
        H = rng.standard_normal((3, 24))
        S = rng.dirichlet(np.ones(7), size=3)
        V = rng.standard_normal((3, 6))
        probs, cache = fusion.forward(params, H, S, V)
        assert np.array_equal(cache["M"], cache["H"])
        np.testing.assert_array_equal(probs, np.full((3, 7), 1.0 / 7.0))
    _done("c04 identity modulation at init, 100 random inputs")


# 5. The fusion head learns a separable toy problem.
def test_c05_fusion_toy_training():
    rng = np.random.default_rng(405)
    n, d = 240, 16
    labels = rng.integers(0, 3, size=n) * 3  # classes 0, 3, 6
    H = rng.standard_normal((n, d)) * 0.1
    for i, y in enumerate(labels):
        H[i, y // 3] += 2.5
    S = np.full((n, 7), 1.0 / 7.0)
    V = rng.standard_normal((n, 6)) * 0.1
    params = fusion.init_params(d, d_k=8, hidden=8, seed=405)
    config = fusion.TrainConfig(learning_rate=1e-2, epochs=30, batch_size=32,
                                warmup_steps=10, seed=405)
    result = fusion.train(params, H, S, V, labels, config)
    preds = fusion.predict_batch(result.params, H, S, V).argmax(axis=1)
    acc = float((preds == labels).mean())
    assert acc >= 0.95, f"toy accuracy {acc:.3f}"
    assert result.epoch_losses[-1] < result.epoch_losses[0]
    _done(f"c05 toy fusion training, accuracy {acc:.3f}")


# 6. Curation invariants on a 50-project corpus with binding caps.
def test_c06_curation_invariants():
    fragments, pairs = make_synthetic_corpus(
        n_projects=50, frags_per_project=14, pairs_per_project=120, seed=406)
    config = corpus.CurationConfig(seed=406, train_caps={0: 400, 6: 250},
                                   validation_target=30)
    kept_fragments, kept_pairs, report = corpus.curate(fragments, pairs, config)

    # the caps must actually bind: populations without caps exceed them
    _, uncapped, _ = corpus.curate(fragments, pairs, corpus.CurationConfig(
        seed=406, train_caps={}, validation_target=30))
    uncapped_train = {l: sum(1 for p in uncapped if p.split == "train" and p.label == l)
                      for l in (0, 6)}
    assert uncapped_train[0] > 400 and uncapped_train[6] > 250

    # fragments: dedup removed one duplicate per project, dropped the short one
    assert report.fragment_stats["duplicates"] == 50
    assert report.fragment_stats["too_short"] == 50
    hashes = [content_hash(f.source) for f in kept_fragments]
    assert len(set(hashes)) == len(hashes)
    assert all(len(f.source) >= 200 for f in kept_fragments)

    # splits: project-level, largest-remainder quotas for 50 at 70/10/20
    split_of = assign_project_splits(
        (f.project_id for f in kept_fragments), 406, (0.7, 0.1, 0.2))
    quota = {s: 0 for s in corpus.SPLITS}
    for s in split_of.values():
        quota[s] += 1
    assert quota == {"train": 35, "validation": 5, "test": 10}

    # isolation: both sides of every kept pair live in the pair's own split
    project_of = {f.fragment_id: f.project_id for f in kept_fragments}
    for p in kept_pairs:
        assert split_of[project_of[p.left]] == p.split
        assert split_of[project_of[p.right]] == p.split
    assert report.pair_stats["cross_split_dropped"] >= 1

    # caps bind exactly where populations exceed them
    train = [p for p in kept_pairs if p.split == "train"]
    by_label = {l: sum(1 for p in train if p.label == l) for l in range(7)}
    assert by_label[0] == 400
    assert by_label[6] == 250
    for label in (1, 2, 3, 4, 5):
        assert 0 < by_label[label] < 400

    # deterministic replay
    _, again, _ = corpus.curate(fragments, pairs, config)
    assert [p.pair_id for p in again] == [p.pair_id for p in kept_pairs]
    _done(f"c06 curation invariants, kept {len(kept_pairs)} pairs")


# 7. Greedy diversity selection reproduces the worked example.
def test_c07_diversity_worked_example():
    shared = set(range(18))
    a = shared | {100, 101}      # |A u B| = 20, |A n B| = 18 -> 0.9
    b = shared | {200, 201}
    c = {300 + i for i in range(18)} | {100, 200}
    picked = greedy_diverse_subset([a, b, c], budget=2)
    assert picked == [0, 2]
    assert greedy_diverse_subset([a, b, c], budget=2) == picked
    assert greedy_diverse_subset([a, b, c], budget=3) == [0, 1, 2]
    _done("c07 greedy diversity worked example")


# 8. Replacement-policy signs on a constructed 10k decision log: narrow
# replacement of the weakest class helps, wide replacement backfires when
# the second opinion systematically over-calls that class.
def test_c08_policy_sign_pattern():
    start = time.monotonic()
    rng = np.random.default_rng(42)
    n = 10000
    truths = rng.choice(7, size=n, p=[.25, .08, .08, .08, .08, .12, .31])
    prim_acc = np.array([.95, .95, .85, .85, .85, .5, .95])
    primary = np.empty(n, dtype=int)
    conf = np.empty(n)
    for i, t in enumerate(truths):
        if rng.random() < prim_acc[t]:
            primary[i] = t
            conf[i] = rng.uniform(.6, 1.0) if t in (0, 1, 6) else rng.uniform(.4, .9)
        else:
            primary[i] = 6 if t == 5 else (5 if t == 4 else (t + 1) % 7)
            conf[i] = rng.uniform(.3, .7)
    verdict = np.empty(n, dtype=int)
    for i, t in enumerate(truths):
        if t == 5:
            ok, dump = .95, 4
        elif t in (2, 3, 4):
            ok, dump = .45, 5  # unsure second opinion over-calls class 5
        else:
            ok = .8
            others = [c for c in range(7) if c != t]
            dump = others[rng.integers(6)]
        verdict[i] = t if rng.random() < ok else dump

    triggered = conf < 0.6
    narrow = primary.copy()
    mask = triggered & (primary == 5)
    narrow[mask] = verdict[mask]
    wide = primary.copy()
    mask = triggered & np.isin(primary, (2, 3, 4, 5))
    wide[mask] = verdict[mask]

    rows = metrics.compare_policies(
        truths.tolist(), primary.tolist(),
        {"narrow": narrow.tolist(), "wide": wide.tolist()})
    by_name = {r["policy"]: r for r in rows}
    assert by_name["narrow"]["delta_macro_f1"] > 0.001
    assert by_name["narrow"]["delta_macro_precision"] > 0.002
    assert by_name["wide"]["delta_macro_precision"] < -0.01
    assert by_name["wide"]["delta_macro_f1"] < -0.02
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
    _done("c08 policy sign pattern on 10k synthetic decisions")


# 9. Confidence bins separate accuracy strata around the 0.6 gate.
def test_c09_confidence_bin_inflection():
    rng = np.random.default_rng(409)
    n = 3000
    strata = rng.integers(0, 3, size=n)
    lows = np.array([0.2, 0.61, 0.81])
    highs = np.array([0.59, 0.79, 0.99])
    accs = np.array([0.45, 0.75, 0.95])
    confidences = rng.uniform(lows[strata], highs[strata])
    truths = rng.integers(0, 7, size=n)
    preds = truths.copy()
    wrong = rng.random(n) >= accs[strata]
    preds[wrong] = (truths[wrong] + 1 + rng.integers(0, 6, size=int(wrong.sum()))) % 7
    bins = metrics.confidence_bins(
        confidences.tolist(), truths.tolist(), preds.tolist(), (0.0, 0.6, 0.8, 1.0))
    counts = [b["count"] for b in bins]
    assert counts == [int((strata == k).sum()) for k in range(3)]
    a0, a1, a2 = (b["accuracy"] for b in bins)
    assert a0 + 0.15 < a1 < a2
    assert abs(a0 - 0.45) < 0.05 and abs(a1 - 0.75) < 0.05 and abs(a2 - 0.95) < 0.05
    _done(f"c09 bin accuracies {a0:.2f} < {a1:.2f} < {a2:.2f} around the 0.6 gate")


# 10. Headline metrics reproduce a hand-worked example exactly.
def test_c10_metrics_hand_oracle():
    truths = [0, 0, 1, 1]
    preds = [0, 1, 1, 1]
    cm = metrics.confusion_matrix(truths, preds)
    assert cm[0, 0] == 1 and cm[0, 1] == 1 and cm[1, 1] == 2
    p, r, f = metrics.per_class_prf(cm)
    assert p[0] == 1.0 and r[0] == 0.5 and abs(f[0] - 2 / 3) < 1e-12
    assert abs(p[1] - 2 / 3) < 1e-12 and r[1] == 1.0 and abs(f[1] - 4 / 5) < 1e-12
    s = metrics.summary(truths, preds)
    assert s["accuracy"] == 0.75
    assert abs(s["macro_f1"] - (2 / 3 + 4 / 5) / 7) < 1e-12
    assert abs(s["weighted_f1"] - (0.5 * 2 / 3 + 0.5 * 4 / 5)) < 1e-12
    _done("c10 metrics hand oracle")


# 11. The full offline pipeline is reproducible byte for byte.
def test_c11_end_to_end_replay(tmp_path):
    first = run_chain(tmp_path / "one")
    second = run_chain(tmp_path / "two")

    files_a = sorted(p.relative_to(first["root"])
                     for p in first["root"].rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(second["root"])
                     for p in second["root"].rglob("*") if p.is_file())
    assert files_a == files_b and files_a
    for rel in files_a:
        assert (first["root"] / rel).read_bytes() == (second["root"] / rel).read_bytes(), rel

    report = json.loads(first["report"].read_text())
    assert report["count"] == 21
    assert report["final"]["accuracy"] >= 0.85
    assert report["triggered"] >= 1
    assert report["fallbacks"] >= 1
    decisions = read_jsonl(first["decisions"])
    assert all(d["final"] == d["primary"] for d in decisions if not d["triggered"])
    _done(f"c11 end-to-end replay, {len(files_a)} artifacts byte-identical")
