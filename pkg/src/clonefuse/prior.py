"""Class-prior models over the 18 lexical features.

Two interchangeable estimators, both written against numpy only so that
refitting on identical inputs reproduces the model file byte-for-byte:

  * gbdt: one-vs-rest gradient boosting with depth-limited regression
    trees, histogram (quantized) split search and Newton leaf values.
  * softmax: multinomial logistic regression, full-batch gradient descent
    from a zero init. Kept as the cheap baseline.

Scores from either model are turned into a 7-way distribution with a
softmax, so downstream consumers always see a simplex.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import NUM_CLASSES

_PROB_CLAMP = 1e-6


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ------------------------------------------------------------------- gbdt


@dataclass
class GbdtConfig:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    max_bins: int = 256
    min_samples_leaf: int = 1
    min_gain: float = 1e-12
    reg_lambda: float = 1.0


def _candidate_thresholds(column: np.ndarray, max_bins: int) -> np.ndarray:
    uniq = np.unique(column)
    if len(uniq) < 2:
        return np.empty(0)
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    if len(mids) <= max_bins - 1:
        return mids
    # quantile-select a subset of the midpoints, keeping extremes reachable
    take = np.linspace(0, len(mids) - 1, max_bins - 1).round().astype(int)
    return np.unique(mids[take])


class _TreeBuilder:
    """Histogram-based exact-greedy splitter on pre-binned columns."""

    def __init__(self, binned: np.ndarray, n_bins: np.ndarray, cfg: GbdtConfig) -> None:
        self.binned = binned
        self.n_bins = n_bins
        self.cfg = cfg

    def build(self, idx: np.ndarray, g: np.ndarray, h: np.ndarray, depth: int) -> dict:
        cfg = self.cfg
        G, H = g[idx].sum(), h[idx].sum()
        if depth >= cfg.max_depth or len(idx) < 2 * cfg.min_samples_leaf:
            return {"value": self._leaf(G, H)}
        parent = G * G / (H + cfg.reg_lambda)
        best = None  # (gain, feature, bin)
        for j in range(self.binned.shape[1]):
            nb = self.n_bins[j]
            if nb < 2:
                continue
            codes = self.binned[idx, j]
            hist_g = np.bincount(codes, weights=g[idx], minlength=nb)
            hist_h = np.bincount(codes, weights=h[idx], minlength=nb)
            hist_n = np.bincount(codes, minlength=nb)
            gl = np.cumsum(hist_g)[:-1]
            hl = np.cumsum(hist_h)[:-1]
            nl = np.cumsum(hist_n)[:-1]
            gr, hr, nr = G - gl, H - hl, len(idx) - nl
            ok = (nl >= cfg.min_samples_leaf) & (nr >= cfg.min_samples_leaf)
            if not ok.any():
                continue
            gain = np.where(
                ok,
                gl * gl / (hl + cfg.reg_lambda) + gr * gr / (hr + cfg.reg_lambda) - parent,
                -np.inf,
            )
            t = int(np.argmax(gain))  # first max wins: deterministic tie-break
            if gain[t] > cfg.min_gain and (best is None or gain[t] > best[0]):
                best = (float(gain[t]), j, t)
        if best is None:
            return {"value": self._leaf(G, H)}
        _, j, t = best
        mask = self.binned[idx, j] <= t
        return {
            "feature": j,
            "bin": t,
            "left": self.build(idx[mask], g, h, depth + 1),
            "right": self.build(idx[~mask], g, h, depth + 1),
        }

    def _leaf(self, G: float, H: float) -> float:
        return float(-G / (H + self.cfg.reg_lambda))


def _bin_to_threshold(node: dict, thresholds: List[np.ndarray]) -> dict:
    """Convert bin-indexed splits to raw-value thresholds for serialization."""
    if "value" in node:
        return {"value": node["value"]}
    return {
        "feature": node["feature"],
        "threshold": float(thresholds[node["feature"]][node["bin"]]),
        "left": _bin_to_threshold(node["left"], thresholds),
        "right": _bin_to_threshold(node["right"], thresholds),
    }


def _eval_tree(node: dict, X: np.ndarray, out: np.ndarray, idx: np.ndarray) -> None:
    if "value" in node:
        out[idx] += node["value"]
        return
    mask = X[idx, node["feature"]] <= node["threshold"]
    _eval_tree(node["left"], X, out, idx[mask])
    _eval_tree(node["right"], X, out, idx[~mask])


class GbdtModel:
    kind = "gbdt"

    def __init__(self, feature_order: Sequence[str], base_scores: np.ndarray,
                 trees: List[List[dict]], config: GbdtConfig) -> None:
        self.feature_order = list(feature_order)
        self.base_scores = base_scores
        self.trees = trees  # trees[c] = list of trees for class c
        self.config = config

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        scores = np.tile(self.base_scores, (X.shape[0], 1))
        lr = self.config.learning_rate
        all_idx = np.arange(X.shape[0])
        for c in range(NUM_CLASSES):
            acc = np.zeros(X.shape[0])
            for tree in self.trees[c]:
                _eval_tree(tree, X, acc, all_idx)
            scores[:, c] += lr * acc
        return scores

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.raw_scores(X))

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_order):
            raise ValueError(f"expected (n, {len(self.feature_order)}) features, got {X.shape}")
        return X

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "version": 1,
            "feature_order": self.feature_order,
            "config": self.config.__dict__,
            "base_scores": self.base_scores.tolist(),
            "trees": self.trees,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "GbdtModel":
        return cls(
            payload["feature_order"],
            np.array(payload["base_scores"], dtype=np.float64),
            payload["trees"],
            GbdtConfig(**payload["config"]),
        )


def fit_gbdt(
    X: np.ndarray,
    y: np.ndarray,
    feature_order: Sequence[str],
    config: GbdtConfig = GbdtConfig(),
) -> GbdtModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    thresholds = [_candidate_thresholds(X[:, j], config.max_bins) for j in range(X.shape[1])]
    n_bins = np.array([len(t) + 1 for t in thresholds])
    binned = np.empty(X.shape, dtype=np.int64)
    for j in range(X.shape[1]):
        binned[:, j] = np.searchsorted(thresholds[j], X[:, j], side="left")
    builder = _TreeBuilder(binned, n_bins, config)

    base = np.empty(NUM_CLASSES)
    trees: List[List[dict]] = [[] for _ in range(NUM_CLASSES)]
    all_idx = np.arange(n)
    for c in range(NUM_CLASSES):
        target = (y == c).astype(np.float64)
        p0 = min(max(target.mean() if n else 0.0, _PROB_CLAMP), 1 - _PROB_CLAMP)
        base[c] = math.log(p0 / (1 - p0))
        if not target.any() or target.all():
            continue  # constant class: the base score says it all
        F = np.full(n, base[c])
        for _ in range(config.n_rounds):
            p = 1.0 / (1.0 + np.exp(-F))
            g = p - target
            h = np.maximum(p * (1 - p), 1e-12)
            root = builder.build(all_idx, g, h, depth=0)
            tree = _bin_to_threshold(root, thresholds)
            delta = np.zeros(n)
            _eval_tree(tree, X, delta, all_idx)
            F += config.learning_rate * delta
            trees[c].append(tree)
    return GbdtModel(feature_order, base, trees, config)


# ---------------------------------------------------------------- softmax


@dataclass
class SoftmaxConfig:
    iterations: int = 300
    learning_rate: float = 0.5
    l2: float = 1e-3


class SoftmaxModel:
    kind = "softmax"

    def __init__(self, feature_order: Sequence[str], W: np.ndarray, b: np.ndarray,
                 mean: np.ndarray, scale: np.ndarray, config: SoftmaxConfig) -> None:
        self.feature_order = list(feature_order)
        self.W = W
        self.b = b
        self.mean = mean
        self.scale = scale
        self.config = config

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_order):
            raise ValueError(f"expected (n, {len(self.feature_order)}) features, got {X.shape}")
        Z = (X - self.mean) / self.scale
        return Z @ self.W.T + self.b

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.raw_scores(X))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "version": 1,
            "feature_order": self.feature_order,
            "config": self.config.__dict__,
            "W": self.W.tolist(),
            "b": self.b.tolist(),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "SoftmaxModel":
        return cls(
            payload["feature_order"],
            np.array(payload["W"], dtype=np.float64),
            np.array(payload["b"], dtype=np.float64),
            np.array(payload["mean"], dtype=np.float64),
            np.array(payload["scale"], dtype=np.float64),
            SoftmaxConfig(**payload["config"]),
        )


def fit_softmax(
    X: np.ndarray,
    y: np.ndarray,
    feature_order: Sequence[str],
    config: SoftmaxConfig = SoftmaxConfig(),
) -> SoftmaxModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale == 0, 1.0, scale)
    Z = (X - mean) / scale
    Y = np.zeros((n, NUM_CLASSES))
    Y[np.arange(n), y] = 1.0

    W = np.zeros((NUM_CLASSES, d))
    b = np.zeros(NUM_CLASSES)
    for _ in range(config.iterations):
        P = _softmax(Z @ W.T + b)
        err = (P - Y) / n
        W -= config.learning_rate * (err.T @ Z + config.l2 * W)
        b -= config.learning_rate * err.sum(axis=0)
    return SoftmaxModel(feature_order, W, b, mean, scale, config)


# -------------------------------------------------------------- persistence


def fit_prior(X, y, feature_order: Sequence[str], kind: str = "gbdt", config=None):
    if kind == "gbdt":
        return fit_gbdt(X, y, feature_order, config or GbdtConfig())
    if kind == "softmax":
        return fit_softmax(X, y, feature_order, config or SoftmaxConfig())
    raise ValueError(f"unknown prior kind {kind!r}")


def save_model(model, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_json(), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    kind = payload.get("kind")
    if kind == "gbdt":
        return GbdtModel.from_json(payload)
    if kind == "softmax":
        return SoftmaxModel.from_json(payload)
    raise ValueError(f"unknown prior kind {kind!r} in {path}")
