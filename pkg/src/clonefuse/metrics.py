"""Evaluation metrics for 7-way clone classification.

Conventions, pinned once here so every consumer agrees:
  * zero-division cases (no predictions or no support for a class) score 0
  * macro averages always divide by 7, present or not
  * weighted averages weight by true-class support
  * top-k ranking breaks probability ties toward the lower class index
"""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import NUM_CLASSES


def confusion_matrix(truths: Sequence[int], preds: Sequence[int]) -> np.ndarray:
    cm = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for t, p in zip(truths, preds):
        cm[t, p] += 1
    return cm


def per_class_prf(cm: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    tp = np.diag(cm).astype(np.float64)
    pred_totals = cm.sum(axis=0).astype(np.float64)
    true_totals = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, pred_totals, out=np.zeros(NUM_CLASSES), where=pred_totals > 0)
    recall = np.divide(tp, true_totals, out=np.zeros(NUM_CLASSES), where=true_totals > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(NUM_CLASSES), where=denom > 0)
    return precision, recall, f1


def accuracy(truths: Sequence[int], preds: Sequence[int]) -> float:
    truths = np.asarray(truths)
    if len(truths) == 0:
        return 0.0
    return float((truths == np.asarray(preds)).mean())


def macro_metrics(truths: Sequence[int], preds: Sequence[int]) -> Dict[str, float]:
    p, r, f = per_class_prf(confusion_matrix(truths, preds))
    return {
        "macro_precision": float(p.mean()),
        "macro_recall": float(r.mean()),
        "macro_f1": float(f.mean()),
    }


def weighted_metrics(truths: Sequence[int], preds: Sequence[int]) -> Dict[str, float]:
    cm = confusion_matrix(truths, preds)
    p, r, f = per_class_prf(cm)
    support = cm.sum(axis=1).astype(np.float64)
    total = support.sum()
    if total == 0:
        return {"weighted_precision": 0.0, "weighted_recall": 0.0, "weighted_f1": 0.0}
    w = support / total
    return {
        "weighted_precision": float((w * p).sum()),
        "weighted_recall": float((w * r).sum()),
        "weighted_f1": float((w * f).sum()),
    }


def summary(truths: Sequence[int], preds: Sequence[int]) -> Dict[str, float]:
    out = {"accuracy": accuracy(truths, preds), "count": len(list(truths))}
    out.update(macro_metrics(truths, preds))
    out.update(weighted_metrics(truths, preds))
    return out


# ----------------------------------------------------------- top-k coverage


def top_k_hits(truth: int, probs: Sequence[float], k: int) -> bool:
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    return truth in order[:k]


def top_k_coverage(truths: Sequence[int], prob_rows: Sequence[Sequence[float]], k: int = 3) -> float:
    truths = list(truths)
    if not truths:
        return 0.0
    hits = sum(top_k_hits(t, row, k) for t, row in zip(truths, prob_rows))
    return hits / len(truths)


# ------------------------------------------------------------ bootstrap CI


def bootstrap_ci(
    truths: Sequence[int],
    preds: Sequence[int],
    metric: Callable[[Sequence[int], Sequence[int]], float],
    n_resamples: int = 1000,
    seed: int = 0,
    percentiles: Tuple[float, float] = (2.5, 97.5),
) -> Tuple[float, float]:
    """Percentile bootstrap over paired (truth, prediction) resamples."""
    truths = np.asarray(truths)
    preds = np.asarray(preds)
    n = len(truths)
    rng = np.random.default_rng(seed)
    values = np.empty(n_resamples)
    for b in range(n_resamples):
        idx = rng.integers(0, n, n)
        values[b] = metric(truths[idx], preds[idx])
    lo, hi = np.percentile(values, percentiles)
    return float(lo), float(hi)


# --------------------------------------------------------- confidence bins


def confidence_bins(
    confidences: Sequence[float],
    truths: Sequence[int],
    preds: Sequence[int],
    edges: Sequence[float] = (0.0, 0.6, 0.8, 1.0),
) -> List[dict]:
    """Per-bin accuracy and macro-F1; the final bin includes its upper edge.

    Empty bins are reported with count 0 and zeroed metrics rather than
    omitted, so report layouts stay fixed.
    """
    edges = list(edges)
    out = []
    for b in range(len(edges) - 1):
        lo, hi = edges[b], edges[b + 1]
        last = b == len(edges) - 2
        idx = [
            i for i, c in enumerate(confidences)
            if (lo <= c < hi) or (last and c == hi)
        ]
        row = {"lo": lo, "hi": hi, "count": len(idx)}
        ts = [truths[i] for i in idx]
        ps = [preds[i] for i in idx]
        row["accuracy"] = accuracy(ts, ps)
        row["macro_f1"] = macro_metrics(ts, ps)["macro_f1"] if idx else 0.0
        out.append(row)
    return out


# ------------------------------------------------------- policy comparison


def compare_policies(
    truths: Sequence[int],
    base_preds: Sequence[int],
    policy_preds: Dict[str, Sequence[int]],
) -> List[dict]:
    """Side-by-side metric table: the base column plus one row per policy.

    Each policy row carries its absolute metrics and the deltas against
    the base predictions, which is what the replace-label experiments
    read off.
    """
    base = summary(truths, base_preds)
    rows = [dict(policy="base", **base,
                 **{f"delta_{k}": 0.0 for k in base if k != "count"})]
    for name in sorted(policy_preds):
        s = summary(truths, policy_preds[name])
        row = dict(policy=name, **s)
        for k, v in s.items():
            if k != "count":
                row[f"delta_{k}"] = v - base[k]
        rows.append(row)
    return rows
