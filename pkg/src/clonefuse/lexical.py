"""Token-level similarity features for code fragment pairs.

Everything in here is deterministic and allocation-light: fragments are
tokenized once, and the 18 pair features are pure functions of the two
token sequences (plus a fitted IDF table for the tf-idf channel).
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

import numpy as np

DEFAULT_MAX_TOKENS = 2000

# Order is part of the on-disk contract; downstream consumers index into
# the vector by this list, never by position literals.
FIELD_ORDER: Tuple[str, ...] = (
    "jaccard",
    "dice",
    "overlap",
    "cosine",
    "levenshtein_norm",
    "tfidf_cosine",
    "unique_left",
    "unique_right",
    "total_left",
    "total_right",
    "shared",
    "sim_mean",
    "sim_std",
    "sim_max",
    "sim_min",
    "token_ratio",
    "token_diff",
    "interaction",
)

_TOKEN_RE = re.compile(
    r"""
      (?P<comment>//[^\n]*|/\*.*?\*/)
    | (?P<string>"(?:\\.|[^"\\])*")
    | (?P<char>'(?:\\.|[^'\\])*')
    | (?P<number>0[xX][0-9a-fA-F]+[lL]?
        |\d+\.\d*(?:[eE][+-]?\d+)?[fFdD]?
        |\.\d+(?:[eE][+-]?\d+)?[fFdD]?
        |\d+(?:[eE][+-]?\d+)?[fFdDlL]?)
    | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
    | (?P<punct>\S)
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class TokenSequence:
    """A tokenized fragment. `truncated` marks sequences cut at the cap."""

    tokens: Tuple[str, ...]
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def token_set(self) -> frozenset:
        return frozenset(self.tokens)

    @property
    def counts(self) -> Counter:
        return Counter(self.tokens)


def tokenize(source: str, max_tokens: int = DEFAULT_MAX_TOKENS) -> TokenSequence:
    """Lex a code fragment into a flat token sequence.

    Comments are dropped, string/char literals stay single tokens, case is
    preserved. Sequences longer than `max_tokens` are truncated and flagged
    rather than rejected.
    """
    tokens: List[str] = []
    truncated = False
    for m in _TOKEN_RE.finditer(source):
        if m.lastgroup == "comment":
            continue
        if len(tokens) >= max_tokens:
            truncated = True
            break
        tokens.append(m.group())
    return TokenSequence(tuple(tokens), truncated)


def jaccard(a: TokenSequence, b: TokenSequence) -> float:
    sa, sb = a.token_set, b.token_set
    if not sa and not sb:
        return 1.0
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def dice(a: TokenSequence, b: TokenSequence) -> float:
    sa, sb = a.token_set, b.token_set
    if not sa and not sb:
        return 1.0
    if not sa or not sb:
        return 0.0
    return 2.0 * len(sa & sb) / (len(sa) + len(sb))


def overlap(a: TokenSequence, b: TokenSequence) -> float:
    """Overlap coefficient: intersection over the smaller set."""
    sa, sb = a.token_set, b.token_set
    if not sa and not sb:
        return 1.0
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / min(len(sa), len(sb))


def cosine(a: TokenSequence, b: TokenSequence) -> float:
    """Cosine over raw token counts (multiset, not set)."""
    ca, cb = a.counts, b.counts
    if not ca and not cb:
        return 1.0
    if not ca or not cb:
        return 0.0
    dot = sum(n * cb[t] for t, n in ca.items())
    na = math.sqrt(sum(n * n for n in ca.values()))
    nb = math.sqrt(sum(n * n for n in cb.values()))
    return dot / (na * nb)


def levenshtein_norm(a: TokenSequence, b: TokenSequence) -> float:
    """Token-level edit distance divided by the longer length.

    Two empty sequences are identical, hence 0.0; empty against non-empty
    is maximally distant, hence 1.0.
    """
    ta, tb = a.tokens, b.tokens
    if not ta and not tb:
        return 0.0
    if not ta or not tb:
        return 1.0
    if len(ta) < len(tb):
        ta, tb = tb, ta
    prev = list(range(len(tb) + 1))
    for i, x in enumerate(ta, start=1):
        cur = [i] + [0] * len(tb)
        for j, y in enumerate(tb, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (0 if x == y else 1),
            )
        prev = cur
    return prev[-1] / max(len(ta), len(tb))


class IdfTable:
    """Smoothed inverse document frequencies fitted on a fragment corpus.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1, so unseen tokens get the
    largest finite weight instead of a division error.
    """

    def __init__(self) -> None:
        self._df: Dict[str, int] = {}
        self._n_docs = 0
        self._fitted = False

    def fit(self, documents: Iterable[TokenSequence]) -> "IdfTable":
        df: Dict[str, int] = {}
        n = 0
        for doc in documents:
            n += 1
            for tok in doc.token_set:
                df[tok] = df.get(tok, 0) + 1
        self._df = df
        self._n_docs = n
        self._fitted = True
        return self

    @property
    def fitted(self) -> bool:
        return self._fitted

    @property
    def n_documents(self) -> int:
        return self._n_docs

    def weight(self, token: str) -> float:
        if not self._fitted:
            raise RuntimeError("IdfTable.weight() called before fit()")
        return math.log((1 + self._n_docs) / (1 + self._df.get(token, 0))) + 1.0

    def to_json(self) -> dict:
        return {"n_documents": self._n_docs, "df": dict(sorted(self._df.items()))}

    @classmethod
    def from_json(cls, payload: dict) -> "IdfTable":
        table = cls()
        table._df = dict(payload["df"])
        table._n_docs = int(payload["n_documents"])
        table._fitted = True
        return table


def tfidf_cosine(a: TokenSequence, b: TokenSequence, idf: IdfTable) -> float:
    if not idf.fitted:
        raise RuntimeError("tfidf_cosine requires a fitted IdfTable")
    ca, cb = a.counts, b.counts
    if not ca and not cb:
        return 1.0
    if not ca or not cb:
        return 0.0
    wa = {t: n * idf.weight(t) for t, n in ca.items()}
    wb = {t: n * idf.weight(t) for t, n in cb.items()}
    dot = sum(w * wb[t] for t, w in wa.items() if t in wb)
    na = math.sqrt(sum(w * w for w in wa.values()))
    nb = math.sqrt(sum(w * w for w in wb.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def feature_vector(a: TokenSequence, b: TokenSequence, idf: IdfTable) -> np.ndarray:
    """Assemble the 18-dim pair feature vector in FIELD_ORDER."""
    j = jaccard(a, b)
    d = dice(a, b)
    o = overlap(a, b)
    c = cosine(a, b)
    lev = levenshtein_norm(a, b)
    tc = tfidf_cosine(a, b, idf)

    sims = np.array([j, d, o, c, 1.0 - lev, tc], dtype=np.float64)
    total_l, total_r = float(len(a)), float(len(b))
    values = {
        "jaccard": j,
        "dice": d,
        "overlap": o,
        "cosine": c,
        "levenshtein_norm": lev,
        "tfidf_cosine": tc,
        "unique_left": float(len(a.token_set)),
        "unique_right": float(len(b.token_set)),
        "total_left": total_l,
        "total_right": total_r,
        "shared": float(len(a.token_set & b.token_set)),
        "sim_mean": float(sims.mean()),
        "sim_std": float(sims.std()),
        "sim_max": float(sims.max()),
        "sim_min": float(sims.min()),
        "token_ratio": 1.0 if max(total_l, total_r) == 0 else min(total_l, total_r) / max(total_l, total_r),
        "token_diff": abs(total_l - total_r),
        "interaction": c * (1.0 - lev),
    }
    return np.array([values[name] for name in FIELD_ORDER], dtype=np.float64)


def feature_dict(a: TokenSequence, b: TokenSequence, idf: IdfTable) -> Dict[str, float]:
    vec = feature_vector(a, b, idf)
    return {name: float(v) for name, v in zip(FIELD_ORDER, vec)}
