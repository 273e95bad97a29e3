"""Stage orchestration between the on-disk caches and the model modules.

Each stage reads/writes JSON-lines caches keyed by pair_id, so stages can
be rerun independently and every artifact diffed across runs. Nothing in
here writes timestamps; reruns on identical inputs produce identical
bytes.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__, arbiter, corpus, fusion, lexical, metrics, prior, semantic, syntax


def _write_jsonl(path: Path, rows: Iterable[dict]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            count += 1
    return count


def read_jsonl(path: Path) -> List[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict, inputs: Dict[str, Path]) -> None:
    """Replay manifest: resolved config plus input digests, never timestamps."""
    payload = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {name: file_digest(Path(p)) for name, p in sorted(inputs.items())},
    }
    write_json(out_dir / "manifest.json", payload)


# ---------------------------------------------------------------- featurize


@dataclass
class FeaturizeResult:
    pairs: int
    parse_failures: int
    truncated_token_sequences: int


def featurize(
    fragments: Sequence[corpus.Fragment],
    pairs: Sequence[corpus.Pair],
    out_dir: Path,
    ted_node_cap: int = syntax.DEFAULT_TED_NODE_CAP,
    max_tokens: int = lexical.DEFAULT_MAX_TOKENS,
) -> FeaturizeResult:
    """Compute and cache the 18 lexical and 6 structural features per pair.

    The IDF table is fitted on fragments that appear in train-split pairs
    only (pairs without a split count as train), then applied everywhere.
    """
    source_of = {f.fragment_id: f.source for f in fragments}
    token_cache: Dict[str, lexical.TokenSequence] = {}
    tree_cache: Dict[str, Optional[syntax.SyntaxTree]] = {}

    def tokens(fid: str) -> lexical.TokenSequence:
        if fid not in token_cache:
            token_cache[fid] = lexical.tokenize(source_of[fid], max_tokens)
        return token_cache[fid]

    def tree(fid: str) -> Optional[syntax.SyntaxTree]:
        if fid not in tree_cache:
            try:
                tree_cache[fid] = syntax.parse(source_of[fid])
            except syntax.ParseError:
                tree_cache[fid] = None
        return tree_cache[fid]

    train_fragment_ids = sorted(
        {p.left for p in pairs if p.split in (None, "train")}
        | {p.right for p in pairs if p.split in (None, "train")}
    )
    idf = lexical.IdfTable().fit(tokens(fid) for fid in train_fragment_ids)

    lex_rows, struct_rows = [], []
    parse_failures = 0
    truncated = 0
    for p in pairs:
        ta, tb = tokens(p.left), tokens(p.right)
        truncated += int(ta.truncated) + int(tb.truncated)
        lex_rows.append({"pair_id": p.pair_id, "features": lexical.feature_dict(ta, tb, idf)})
        res = syntax.structural_vector(tree(p.left), tree(p.right), ted_node_cap)
        parse_failures += int(res.parse_failed)
        struct_rows.append({
            "pair_id": p.pair_id,
            "vector": [float(v) for v in res.vector],
            "parse_failed": res.parse_failed,
            "ted_approx": res.ted_approx,
        })

    _write_jsonl(out_dir / "lexical.jsonl", lex_rows)
    _write_jsonl(out_dir / "structural.jsonl", struct_rows)
    write_json(out_dir / "idf.json", idf.to_json())
    return FeaturizeResult(len(pairs), parse_failures, truncated)


def load_lexical_matrix(rows: Sequence[dict]) -> Tuple[List[str], np.ndarray]:
    ids = [r["pair_id"] for r in rows]
    X = np.array(
        [[r["features"][name] for name in lexical.FIELD_ORDER] for r in rows],
        dtype=np.float64,
    )
    return ids, X


# -------------------------------------------------------------------- prior


def train_prior(
    pairs: Sequence[corpus.Pair],
    lexical_rows: Sequence[dict],
    out_dir: Path,
    kind: str = "gbdt",
    config=None,
) -> dict:
    """Fit the prior on train-split pairs; cache probabilities for all pairs."""
    features_of = {r["pair_id"]: r["features"] for r in lexical_rows}
    train = [p for p in pairs if p.split == "train" and p.pair_id in features_of]
    if not train:
        raise ValueError("no train-split pairs with cached lexical features")
    X = np.array(
        [[features_of[p.pair_id][n] for n in lexical.FIELD_ORDER] for p in train]
    )
    y = np.array([p.label for p in train])
    model = prior.fit_prior(X, y, lexical.FIELD_ORDER, kind, config)
    prior.save_model(model, out_dir / "prior_model.json")

    scored = [p for p in pairs if p.pair_id in features_of]
    Xall = np.array(
        [[features_of[p.pair_id][n] for n in lexical.FIELD_ORDER] for p in scored]
    )
    probs = model.predict_proba(Xall)
    _write_jsonl(
        out_dir / "prior.jsonl",
        ({"pair_id": p.pair_id, "probs": [float(v) for v in row]}
         for p, row in zip(scored, probs)),
    )
    return {"kind": kind, "train_pairs": len(train), "scored_pairs": len(scored)}


# ------------------------------------------------------------------ bundles


@dataclass
class BundleSet:
    bundles: List[fusion.FeatureBundle]
    labels: np.ndarray
    skipped_missing_embedding: int

    def matrices(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        H = np.stack([b.semantic for b in self.bundles])
        S = np.stack([b.prior for b in self.bundles])
        V = np.stack([b.structural for b in self.bundles])
        return H, S, V


def build_bundles(
    pairs: Sequence[corpus.Pair],
    lexical_rows: Sequence[dict],
    structural_rows: Sequence[dict],
    prior_rows: Sequence[dict],
    store: semantic.EmbeddingStore,
) -> BundleSet:
    """Join the caches into model-ready bundles.

    Pairs missing an embedding are skipped and counted; pairs missing any
    cache row are an error, since that means stages ran on different pair
    sets.
    """
    lex = {r["pair_id"]: r["features"] for r in lexical_rows}
    struct = {r["pair_id"]: r["vector"] for r in structural_rows}
    pri = {r["pair_id"]: r["probs"] for r in prior_rows}
    bundles: List[fusion.FeatureBundle] = []
    labels: List[int] = []
    skipped = 0
    for p in pairs:
        if p.pair_id not in lex or p.pair_id not in struct or p.pair_id not in pri:
            raise ValueError(f"pair {p.pair_id} missing from a feature cache")
        if p.left not in store or p.right not in store:
            skipped += 1
            continue
        bundles.append(fusion.FeatureBundle(
            pair_id=p.pair_id,
            lexical=np.array([lex[p.pair_id][n] for n in lexical.FIELD_ORDER]),
            structural=np.array(struct[p.pair_id], dtype=np.float64),
            prior=np.array(pri[p.pair_id], dtype=np.float64),
            semantic=semantic.pair_input(store, p.left, p.right),
        ))
        labels.append(p.label)
    return BundleSet(bundles, np.array(labels, dtype=np.int64), skipped)


# ----------------------------------------------------------------- fusion


def train_fusion(
    bundle_set: BundleSet,
    out_dir: Path,
    train_config: fusion.TrainConfig,
    d_k: int = 64,
    hidden: int = 32,
    init_seed: int = 0,
    class_prior_init: bool = False,
) -> dict:
    H, S, V = bundle_set.matrices()
    labels = bundle_set.labels
    class_prior = None
    if class_prior_init:
        counts = np.bincount(labels, minlength=7).astype(np.float64)
        class_prior = counts / counts.sum()
    params = fusion.init_params(H.shape[1], d_k=d_k, hidden=hidden,
                                seed=init_seed, class_prior=class_prior)
    result = fusion.train(params, H, S, V, labels, train_config)
    fusion.save_checkpoint(out_dir / "fusion_checkpoint.json", result.params,
                           seed=train_config.seed, step=result.steps)
    write_json(out_dir / "training_log.json", {
        "epoch_losses": result.epoch_losses,
        "steps": result.steps,
        "train_pairs": len(labels),
        "skipped_missing_embedding": bundle_set.skipped_missing_embedding,
    })
    return {"steps": result.steps, "final_loss": result.epoch_losses[-1]}


def predict_to_file(
    bundle_set: BundleSet,
    params: fusion.Params,
    pairs: Sequence[corpus.Pair],
    out_path: Path,
) -> dict:
    H, S, V = bundle_set.matrices()
    probs = fusion.predict_batch(params, H, S, V)
    rows = []
    for bundle, p in zip(bundle_set.bundles, probs):
        dist = fusion.ProbabilityDistribution(p)
        row = {"pair_id": bundle.pair_id}
        row.update(dist.to_json())
        rows.append(row)
    _write_jsonl(out_path, rows)
    return {
        "predicted": len(rows),
        "skipped_missing_embedding": bundle_set.skipped_missing_embedding,
    }


# --------------------------------------------------------------- arbitrate


def arbitrate_pairs(
    pairs: Sequence[corpus.Pair],
    fragments: Sequence[corpus.Fragment],
    distribution_rows: Sequence[dict],
    config: arbiter.ArbiterConfig,
    arb: Optional[arbiter.Arbiter],
    out_path: Path,
    clock=None,
) -> dict:
    source_of = {f.fragment_id: f.source for f in fragments}
    pair_of = {p.pair_id: p for p in pairs}
    items = []
    for row in distribution_rows:
        pid = row["pair_id"]
        if pid not in pair_of:
            raise ValueError(f"distribution row for unknown pair {pid}")
        p = pair_of[pid]
        dist = fusion.ProbabilityDistribution(np.array(row["probabilities"]))
        prompt = arbiter.build_prompt(
            source_of[p.left], source_of[p.right], dist, config.max_fragment_chars
        )
        items.append((pid, dist, prompt))
    if clock is None:
        # Mock replays must not leak wall-clock latencies into the log.
        clock = (lambda: 0.0) if isinstance(arb, arbiter.MockArbiter) else time.monotonic
    records = arbiter.arbitrate_batch(items, config, arb, clock)
    arbiter.write_decision_log(out_path, records)
    triggered = sum(1 for r in records if r.triggered)
    fell_back = sum(1 for r in records if r.fallback_reason)
    return {"decisions": len(records), "triggered": triggered, "fallbacks": fell_back}


# ---------------------------------------------------------------- evaluate


def evaluate_decisions(
    decision_rows: Sequence[dict],
    truth_pairs: Sequence[corpus.Pair],
    bins: Sequence[float] = (0.0, 0.6, 0.8, 1.0),
) -> dict:
    """Assemble the evaluation report for a decision log against truths."""
    label_of = {p.pair_id: p.label for p in truth_pairs}
    missing = [r["pair_id"] for r in decision_rows if r["pair_id"] not in label_of]
    if missing:
        raise ValueError(f"decisions reference pairs without truths, e.g. {missing[0]}")
    rows = sorted(decision_rows, key=lambda r: r["pair_id"])
    truths = [label_of[r["pair_id"]] for r in rows]
    primary = [r["primary"] for r in rows]
    final = [r["final"] for r in rows]
    confidences = [r["confidence"] for r in rows]

    cm = metrics.confusion_matrix(truths, final)
    p, r_, f = metrics.per_class_prf(cm)
    report = {
        "count": len(rows),
        "triggered": sum(1 for r in rows if r["triggered"]),
        "fallbacks": sum(1 for r in rows if r.get("fallback_reason")),
        "primary": metrics.summary(truths, primary),
        "final": metrics.summary(truths, final),
        "per_class": [
            {"label": c, "precision": float(p[c]), "recall": float(r_[c]), "f1": float(f[c])}
            for c in range(7)
        ],
        "confusion": cm.tolist(),
        "confidence_bins": metrics.confidence_bins(confidences, truths, final, bins),
        "policy_comparison": metrics.compare_policies(truths, primary, {"arbitrated": final}),
    }
    for key in ("accuracy", "macro_f1", "macro_precision", "macro_recall",
                "weighted_f1", "weighted_precision", "weighted_recall"):
        report[f"delta_{key}"] = report["final"][key] - report["primary"][key]
    return report
