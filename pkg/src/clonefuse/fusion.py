"""Fusion head: prior-conditioned FiLM + structural cross-attention.

The semantic pair embedding h is first modulated feature-wise by (gamma,
beta) computed from the class-prior distribution:

    h_mod = (1 + gamma) * h + beta

with the projection's final layer zero-initialized, so at step zero the
modulation is exactly the identity. The six structural deltas are then
lifted into learned tokens (per-slot embedding scaled by the delta value
plus a positional vector); a single-head cross-attention reads from them
with h_mod as the query, and the residual sum is layer-normalized before
a linear classifier produces the 7-way distribution.

Everything is numpy float64 with hand-written gradients; training is
bit-reproducible given (inputs, seed, config).
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import NUM_CLASSES

N_STRUCT = 6  # structural delta slots
LN_EPS = 1e-5

PARAM_KEYS = (
    "film_w1", "film_b1", "film_w2", "film_b2",
    "tok_embed", "tok_pos",
    "attn_wq", "attn_wk", "attn_wv",
    "ln_gain", "ln_bias",
    "cls_w", "cls_b",
)

Params = Dict[str, np.ndarray]


@dataclass(frozen=True)
class FeatureBundle:
    """Everything the pipeline knows about one pair, model-ready."""

    pair_id: str
    lexical: np.ndarray      # (18,)
    structural: np.ndarray   # (6,)
    prior: np.ndarray        # (7,) simplex
    semantic: np.ndarray     # (2 * embedding_dim,)


@dataclass(frozen=True)
class ProbabilityDistribution:
    probs: np.ndarray

    @property
    def predicted(self) -> int:
        return int(self.probs.argmax())  # argmax takes the lowest index on ties

    @property
    def confidence(self) -> float:
        return float(self.probs.max())

    def top_k(self, k: int = 3) -> List[Tuple[int, float]]:
        order = sorted(range(len(self.probs)), key=lambda i: (-self.probs[i], i))
        return [(i, float(self.probs[i])) for i in order[:k]]

    def to_json(self) -> dict:
        return {
            "probabilities": [float(p) for p in self.probs],
            "prediction": self.predicted,
            "confidence": self.confidence,
            "top3": [[label, p] for label, p in self.top_k(3)],
        }


def init_params(
    semantic_dim: int,
    d_k: int = 64,
    hidden: int = 32,
    seed: int = 0,
    class_prior: Optional[np.ndarray] = None,
) -> Params:
    """Fresh parameter set.

    film_w2/film_b2 start at zero (exact identity modulation) and the
    classifier weight starts at zero, so the initial output distribution
    is uniform, or equal to `class_prior` when given (log-prior bias).
    """
    rng = np.random.default_rng(seed)
    d = semantic_dim

    def normal(shape, scale):
        return rng.normal(0.0, scale, shape)

    if class_prior is None:
        cls_b = np.zeros(NUM_CLASSES)
    else:
        prior = np.asarray(class_prior, dtype=np.float64)
        cls_b = np.log(np.clip(prior, 1e-12, None))
        cls_b = cls_b - cls_b.max()
    return {
        "film_w1": normal((hidden, NUM_CLASSES), 1.0 / math.sqrt(NUM_CLASSES)),
        "film_b1": np.zeros(hidden),
        "film_w2": np.zeros((2 * d, hidden)),
        "film_b2": np.zeros(2 * d),
        "tok_embed": normal((N_STRUCT, d_k), 0.1),
        "tok_pos": normal((N_STRUCT, d_k), 0.1),
        "attn_wq": normal((d_k, d), 1.0 / math.sqrt(d)),
        "attn_wk": normal((d_k, d_k), 1.0 / math.sqrt(d_k)),
        "attn_wv": normal((d, d_k), 1.0 / math.sqrt(d_k)),
        "ln_gain": np.ones(d),
        "ln_bias": np.zeros(d),
        "cls_w": np.zeros((NUM_CLASSES, d)),
        "cls_b": cls_b,
    }


# ----------------------------------------------------------------- forward


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: Params, H: np.ndarray, S: np.ndarray, V: np.ndarray) -> Tuple[np.ndarray, dict]:
    """Batched forward pass.

    H: (n, d) semantic pair embeddings; S: (n, 7) prior simplexes;
    V: (n, 6) structural deltas. Returns (probs (n, 7), cache).
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    d = H.shape[1]
    d_k = params["tok_embed"].shape[1]

    a1 = S @ params["film_w1"].T + params["film_b1"]
    z1 = np.tanh(a1)
    gb = z1 @ params["film_w2"].T + params["film_b2"]
    gamma, beta = gb[:, :d], gb[:, d:]
    M = (1.0 + gamma) * H + beta

    T = V[:, :, None] * params["tok_embed"][None, :, :] + params["tok_pos"][None, :, :]
    Q = M @ params["attn_wq"].T                      # (n, d_k)
    K = T @ params["attn_wk"].T                      # (n, 6, d_k)
    Vv = T @ params["attn_wv"].T                     # (n, 6, d)
    scores = np.einsum("nk,nik->ni", Q, K) / math.sqrt(d_k)
    w = _softmax_rows(scores)                        # (n, 6)
    ctx = np.einsum("ni,nid->nd", w, Vv)

    R = M + ctx
    mu = R.mean(axis=1, keepdims=True)
    var = R.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (R - mu) * inv
    F = params["ln_gain"] * xhat + params["ln_bias"]

    logits = F @ params["cls_w"].T + params["cls_b"]
    probs = _softmax_rows(logits)
    cache = {
        "H": H, "S": S, "V": V, "z1": z1, "gamma": gamma, "M": M, "T": T,
        "Q": Q, "K": K, "Vv": Vv, "w": w, "xhat": xhat, "inv": inv,
        "F": F, "probs": probs, "d_k": d_k,
    }
    return probs, cache


def cross_entropy(probs: np.ndarray, labels: np.ndarray, smoothing: float = 0.0) -> float:
    """Mean smoothed cross-entropy over a batch of distributions."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(labels)
    n, k = probs.shape
    q = np.full((n, k), smoothing / k)
    q[np.arange(n), labels] += 1.0 - smoothing
    return float(-(q * np.log(np.clip(probs, 1e-300, None))).sum(axis=1).mean())


def backward(params: Params, cache: dict, labels: np.ndarray, smoothing: float = 0.0) -> Params:
    """Gradients of mean smoothed cross-entropy w.r.t. every parameter."""
    probs = cache["probs"]
    n, k = probs.shape
    d = cache["H"].shape[1]
    q = np.full((n, k), smoothing / k)
    q[np.arange(n), np.atleast_1d(labels)] += 1.0 - smoothing
    dlogits = (probs - q) / n

    F, xhat, inv = cache["F"], cache["xhat"], cache["inv"]
    g = {}
    g["cls_w"] = dlogits.T @ F
    g["cls_b"] = dlogits.sum(axis=0)
    dF = dlogits @ params["cls_w"]

    g["ln_gain"] = (dF * xhat).sum(axis=0)
    g["ln_bias"] = dF.sum(axis=0)
    dxhat = dF * params["ln_gain"]
    dR = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))

    dM = dR.copy()
    dctx = dR
    w, Vv, Q, K, T = cache["w"], cache["Vv"], cache["Q"], cache["K"], cache["T"]
    dw = np.einsum("nd,nid->ni", dctx, Vv)
    dVv = w[:, :, None] * dctx[:, None, :]
    dscores = w * (dw - (w * dw).sum(axis=1, keepdims=True))
    scale = 1.0 / math.sqrt(cache["d_k"])
    dQ = np.einsum("ni,nik->nk", dscores, K) * scale
    dK = dscores[:, :, None] * Q[:, None, :] * scale

    g["attn_wq"] = dQ.T @ cache["M"]
    dM += dQ @ params["attn_wq"]
    g["attn_wk"] = np.einsum("nik,nij->kj", dK, T)
    g["attn_wv"] = np.einsum("nie,nij->ej", dVv, T)
    dT = np.einsum("nik,kj->nij", dK, params["attn_wk"]) \
        + np.einsum("nie,ej->nij", dVv, params["attn_wv"])
    g["tok_embed"] = np.einsum("nij,ni->ij", dT, cache["V"])
    g["tok_pos"] = dT.sum(axis=0)

    H = cache["H"]
    dgamma = dM * H
    dbeta = dM
    dgb = np.concatenate([dgamma, dbeta], axis=1)
    g["film_w2"] = dgb.T @ cache["z1"]
    g["film_b2"] = dgb.sum(axis=0)
    dz1 = dgb @ params["film_w2"]
    da1 = dz1 * (1.0 - cache["z1"] ** 2)
    g["film_w1"] = da1.T @ cache["S"]
    g["film_b1"] = da1.sum(axis=0)
    return g


# ------------------------------------------------------------------- adamw


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    warmup_steps: int = 80
    epochs: int = 5
    batch_size: int = 32
    label_smoothing: float = 0.1
    seed: int = 0


def lr_at(step: int, config: TrainConfig) -> float:
    """Linear warmup to the base rate, constant afterwards. step is 0-based."""
    if config.warmup_steps <= 0 or step >= config.warmup_steps:
        return config.learning_rate
    return config.learning_rate * (step + 1) / config.warmup_steps


def init_adamw_state(params: Params) -> dict:
    return {
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
        "step": 0,
    }


def adamw_step(params: Params, grads: Params, state: dict, config: TrainConfig) -> None:
    """One decoupled-weight-decay Adam update, in place."""
    state["step"] += 1
    t = state["step"]
    lr = lr_at(t - 1, config)
    b1, b2 = config.beta1, config.beta2
    for key in PARAM_KEYS:
        gk = grads[key]
        m = state["m"][key] = b1 * state["m"][key] + (1 - b1) * gk
        v = state["v"][key] = b2 * state["v"][key] + (1 - b2) * gk * gk
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        params[key] -= lr * (mhat / (np.sqrt(vhat) + config.eps)
                             + config.weight_decay * params[key])


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    params: Params
    epoch_losses: List[float]
    steps: int


def train(
    params: Params,
    H: np.ndarray,
    S: np.ndarray,
    V: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig = TrainConfig(),
) -> TrainResult:
    """Mini-batch AdamW training; deterministic for fixed inputs and seed."""
    params = {k: v.copy() for k, v in params.items()}
    state = init_adamw_state(params)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    rng = np.random.default_rng(config.seed)
    losses: List[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            probs, cache = forward(params, H[idx], S[idx], V[idx])
            batch_losses.append(cross_entropy(probs, labels[idx], config.label_smoothing))
            grads = backward(params, cache, labels[idx], config.label_smoothing)
            adamw_step(params, grads, state, config)
        losses.append(float(np.mean(batch_losses)))
    return TrainResult(params, losses, state["step"])


def predict_batch(params: Params, H: np.ndarray, S: np.ndarray, V: np.ndarray) -> np.ndarray:
    probs, _ = forward(params, H, S, V)
    return probs


def predict(params: Params, bundle: FeatureBundle) -> ProbabilityDistribution:
    probs, _ = forward(params, bundle.semantic[None, :], bundle.prior[None, :], bundle.structural[None, :])
    return ProbabilityDistribution(probs[0])


# -------------------------------------------------------------- checkpoints


def save_checkpoint(path: Path, params: Params, seed: int, step: int) -> None:
    """Timestamp-free JSON checkpoint; identical params give identical bytes."""
    payload = {
        "version": 1,
        "seed": seed,
        "step": step,
        "shapes": {k: list(params[k].shape) for k in PARAM_KEYS},
        "params": {
            k: base64.b64encode(np.ascontiguousarray(params[k], dtype="<f8").tobytes()).decode("ascii")
            for k in PARAM_KEYS
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path: Path) -> Tuple[Params, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version in {path}")
    params: Params = {}
    for key in PARAM_KEYS:
        raw = base64.b64decode(payload["params"][key])
        params[key] = np.frombuffer(raw, dtype="<f8").reshape(payload["shapes"][key]).copy()
    meta = {"seed": payload["seed"], "step": payload["step"]}
    return params, meta
