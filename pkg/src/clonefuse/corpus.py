"""Dataset curation: filtering, dedup, project-isolated splits, sampling.

The pipeline is four stages and every stage is a deterministic function of
its inputs plus an integer seed, so a curation run can be replayed
byte-for-byte from the manifest.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import lexical

SPLITS = ("train", "validation", "test")
DEFAULT_MIN_CHARS = 200
DEFAULT_RATIOS = (0.7, 0.1, 0.2)
DEFAULT_TRAIN_CAPS = {0: 40000, 6: 25000}
DEFAULT_VALIDATION_TARGET = 1428

_WS_RUN = re.compile(r"\s+")

# tokens that read as branching/looping when sizing pair complexity
_FLOW_TOKENS = frozenset(
    {"if", "else", "for", "while", "do", "switch", "case", "catch",
     "try", "return", "break", "continue", "throw", "?"}
)


@dataclass(frozen=True)
class Fragment:
    fragment_id: str
    project_id: str
    source: str


@dataclass(frozen=True)
class Pair:
    pair_id: str
    left: str
    right: str
    label: int
    split: Optional[str] = None


def content_hash(source: str) -> str:
    """Whitespace-insensitive fingerprint of a fragment.

    Lines are stripped, internal whitespace runs collapse to one space,
    blank lines vanish; the SHA-256 of the joined result is returned. Two
    fragments differing only in layout therefore hash identically.
    """
    lines = [_WS_RUN.sub(" ", line.strip()) for line in source.splitlines()]
    normalized = "\n".join(line for line in lines if line)
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()


# ------------------------------------------------------------ stage 1: dedup


@dataclass
class DedupResult:
    fragments: List[Fragment]
    id_map: Dict[str, str]  # every input id -> surviving canonical id
    too_short: int = 0
    duplicates: int = 0


def filter_and_dedup(fragments: Sequence[Fragment], min_chars: int = DEFAULT_MIN_CHARS) -> DedupResult:
    """Drop short fragments, then keep the first fragment per content hash.

    Order-stable and idempotent: feeding the output back through yields
    the same fragments again.
    """
    kept: List[Fragment] = []
    first_for_hash: Dict[str, str] = {}
    id_map: Dict[str, str] = {}
    too_short = duplicates = 0
    for frag in fragments:
        if len(frag.source) < min_chars:
            too_short += 1
            continue
        h = content_hash(frag.source)
        if h in first_for_hash:
            duplicates += 1
            id_map[frag.fragment_id] = first_for_hash[h]
            continue
        first_for_hash[h] = frag.fragment_id
        id_map[frag.fragment_id] = frag.fragment_id
        kept.append(frag)
    return DedupResult(kept, id_map, too_short, duplicates)


# ----------------------------------------------------------- stage 2: splits


def _project_sort_key(project_id: str, seed: int) -> str:
    return hashlib.sha256(f"{seed}:{project_id}".encode("utf-8")).hexdigest()


def largest_remainder_quotas(n: int, ratios: Sequence[float]) -> List[int]:
    """Integer quotas summing to n, proportional to ratios."""
    exact = [n * r for r in ratios]
    base = [math.floor(x) for x in exact]
    leftover = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def assign_project_splits(
    project_ids: Iterable[str],
    seed: int,
    ratios: Sequence[float] = DEFAULT_RATIOS,
) -> Dict[str, str]:
    """Deterministically place whole projects into train/validation/test.

    Projects are ranked by a keyed hash of (seed, project_id) and split
    quotas come from largest-remainder rounding, so realized fractions sit
    as close to the ratios as integer counts allow while assignment still
    reshuffles completely under a new seed.
    """
    unique = sorted(set(project_ids))
    ranked = sorted(unique, key=lambda p: (_project_sort_key(p, seed), p))
    quotas = largest_remainder_quotas(len(ranked), ratios)
    out: Dict[str, str] = {}
    start = 0
    for split, quota in zip(SPLITS, quotas):
        for p in ranked[start : start + quota]:
            out[p] = split
        start += quota
    return out


# ------------------------------------------------- pair remapping / splitting


@dataclass
class PairFilterStats:
    remapped: int = 0
    self_pairs_dropped: int = 0
    missing_fragment_dropped: int = 0
    duplicate_pairs_dropped: int = 0
    cross_split_dropped: int = 0


def remap_and_filter_pairs(
    pairs: Sequence[Pair],
    id_map: Dict[str, str],
) -> Tuple[List[Pair], PairFilterStats]:
    """Point pairs at canonical fragment ids and drop the degenerate ones.

    A pair whose endpoint was removed as a duplicate is remapped to the
    surviving fragment; if that collapses the pair onto itself, or an
    endpoint is gone entirely (length filter), the pair is dropped and
    counted. Duplicate pairs (same unordered endpoints) keep the first.
    """
    out: List[Pair] = []
    stats = PairFilterStats()
    seen: set = set()
    for pair in pairs:
        left = id_map.get(pair.left)
        right = id_map.get(pair.right)
        if left is None or right is None:
            stats.missing_fragment_dropped += 1
            continue
        if left != pair.left or right != pair.right:
            stats.remapped += 1
        if left == right:
            stats.self_pairs_dropped += 1
            continue
        key = (min(left, right), max(left, right))
        if key in seen:
            stats.duplicate_pairs_dropped += 1
            continue
        seen.add(key)
        out.append(Pair(pair.pair_id, left, right, pair.label, pair.split))
    return out, stats


def attach_splits(
    pairs: Sequence[Pair],
    fragments: Sequence[Fragment],
    split_of_project: Dict[str, str],
) -> Tuple[List[Pair], int]:
    """Give each pair its project split; cross-split pairs are dropped."""
    project_of = {f.fragment_id: f.project_id for f in fragments}
    out: List[Pair] = []
    dropped = 0
    for pair in pairs:
        sl = split_of_project.get(project_of.get(pair.left, ""))
        sr = split_of_project.get(project_of.get(pair.right, ""))
        if sl is None or sr is None or sl != sr:
            dropped += 1
            continue
        out.append(Pair(pair.pair_id, pair.left, pair.right, pair.label, sl))
    return out, dropped


# --------------------------------------------------------- stage 3: sampling


def sample_training_set(
    pairs: Sequence[Pair],
    caps: Dict[int, int],
    seed: int,
) -> List[Pair]:
    """Uniform without-replacement downsampling of over-represented labels.

    Labels without a cap (or under it) pass through untouched; sampled
    labels keep exactly min(population, cap) pairs. Input order is
    preserved in the output.
    """
    by_label: Dict[int, List[int]] = {}
    for i, p in enumerate(pairs):
        by_label.setdefault(p.label, []).append(i)
    keep = set(range(len(pairs)))
    for label, cap in sorted(caps.items()):
        idxs = by_label.get(label, [])
        if len(idxs) <= cap:
            continue
        rng = random.Random(f"{seed}:{label}")
        chosen = set(rng.sample(range(len(idxs)), cap))
        for pos, i in enumerate(idxs):
            if pos not in chosen:
                keep.discard(i)
    return [p for i, p in enumerate(pairs) if i in keep]


# ------------------------------------------------- stage 4: diversity select


def _pair_profile(pair: Pair, source_of: Dict[str, str]) -> Tuple[frozenset, int, int]:
    sl = source_of[pair.left]
    sr = source_of[pair.right]
    toks_l = lexical.tokenize(sl).tokens
    toks_r = lexical.tokenize(sr).tokens
    tokens = frozenset(toks_l) | frozenset(toks_r)
    complexity = sum(1 for t in toks_l if t in _FLOW_TOKENS) + sum(1 for t in toks_r if t in _FLOW_TOKENS)
    return tokens, len(sl) + len(sr), complexity


def _bin_index(value: float, edges: Sequence[float]) -> int:
    i = 0
    for e in edges:
        if value > e:
            i += 1
    return i


def _quantile_edges(values: Sequence[float], bins: int) -> List[float]:
    if bins <= 1 or not values:
        return []
    ordered = sorted(values)
    edges = []
    for k in range(1, bins):
        pos = k * (len(ordered) - 1) / bins
        lo = math.floor(pos)
        frac = pos - lo
        hi = min(lo + 1, len(ordered) - 1)
        edges.append(ordered[lo] * (1 - frac) + ordered[hi] * frac)
    return edges


def greedy_diverse_subset(token_sets: Sequence[frozenset], budget: int) -> List[int]:
    """Pick `budget` items minimizing pairwise token-set Jaccard, greedily.

    Starts from the first item, then repeatedly takes the candidate whose
    maximum Jaccard similarity to the already-selected set is smallest
    (ties resolve to the earliest input index). Deterministic by
    construction.
    """
    n = len(token_sets)
    if budget >= n:
        return list(range(n))
    if budget <= 0:
        return []

    def jac(a: frozenset, b: frozenset) -> float:
        if not a and not b:
            return 1.0
        if not a or not b:
            return 0.0
        return len(a & b) / len(a | b)

    selected = [0]
    best_sim = [jac(token_sets[0], token_sets[i]) for i in range(n)]
    chosen = [False] * n
    chosen[0] = True
    while len(selected) < budget:
        pick = -1
        pick_sim = math.inf
        for i in range(n):
            if not chosen[i] and best_sim[i] < pick_sim:
                pick, pick_sim = i, best_sim[i]
        selected.append(pick)
        chosen[pick] = True
        for i in range(n):
            if not chosen[i]:
                s = jac(token_sets[pick], token_sets[i])
                if s > best_sim[i]:
                    best_sim[i] = s
    return sorted(selected)


def diversity_select(
    pairs: Sequence[Pair],
    budget: int,
    fragments: Sequence[Fragment],
    bins: int = 4,
) -> List[Pair]:
    """Budgeted diverse subset, stratified over (length, complexity) bins.

    Pairs land in a bins x bins grid over combined source length and
    control-flow token count (equal-frequency cut points); each cell gets
    a largest-remainder share of the budget, capped at the cell size with
    leftovers respilled to cells that still have room. Inside a cell the
    greedy max-Jaccard-minimizing walk picks the survivors.
    """
    if budget >= len(pairs):
        return list(pairs)
    source_of = {f.fragment_id: f.source for f in fragments}
    profiles = [_pair_profile(p, source_of) for p in pairs]
    len_edges = _quantile_edges([pr[1] for pr in profiles], bins)
    cx_edges = _quantile_edges([pr[2] for pr in profiles], bins)

    cells: Dict[Tuple[int, int], List[int]] = {}
    for i, (_, length, cx) in enumerate(profiles):
        key = (_bin_index(length, len_edges), _bin_index(cx, cx_edges))
        cells.setdefault(key, []).append(i)

    keys = sorted(cells)
    sizes = [len(cells[k]) for k in keys]
    shares = largest_remainder_quotas(budget, [s / len(pairs) for s in sizes])
    # cap at cell size, then respill leftovers into cells with room
    leftover = 0
    for ci, k in enumerate(keys):
        if shares[ci] > sizes[ci]:
            leftover += shares[ci] - sizes[ci]
            shares[ci] = sizes[ci]
    while leftover > 0:
        room = [(sizes[ci] - shares[ci], ci) for ci in range(len(keys)) if sizes[ci] > shares[ci]]
        if not room:
            break
        room.sort(key=lambda t: (-t[0], t[1]))
        for _, ci in room:
            if leftover == 0:
                break
            shares[ci] += 1
            leftover -= 1

    keep: set = set()
    for ci, k in enumerate(keys):
        idxs = cells[k]
        local = greedy_diverse_subset([profiles[i][0] for i in idxs], shares[ci])
        keep.update(idxs[j] for j in local)
    return [p for i, p in enumerate(pairs) if i in keep]


# ----------------------------------------------------------------- pipeline


@dataclass
class CurationConfig:
    min_chars: int = DEFAULT_MIN_CHARS
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 13
    train_caps: Dict[int, int] = field(default_factory=lambda: dict(DEFAULT_TRAIN_CAPS))
    validation_target: int = DEFAULT_VALIDATION_TARGET
    diversity_bins: int = 4
    diversity_labels: Tuple[int, ...] = (6,)


@dataclass
class CurationReport:
    fragment_stats: dict
    pair_stats: dict
    split_label_counts: Dict[str, Dict[int, int]]

    def to_json(self) -> dict:
        return {
            "fragments": self.fragment_stats,
            "pairs": self.pair_stats,
            "split_label_counts": {
                s: {str(l): c for l, c in sorted(labels.items())}
                for s, labels in sorted(self.split_label_counts.items())
            },
        }


def curate(
    fragments: Sequence[Fragment],
    pairs: Sequence[Pair],
    config: CurationConfig = CurationConfig(),
) -> Tuple[List[Fragment], List[Pair], CurationReport]:
    dedup = filter_and_dedup(fragments, config.min_chars)
    clean_pairs, pstats = remap_and_filter_pairs(pairs, dedup.id_map)
    split_of = assign_project_splits((f.project_id for f in dedup.fragments), config.seed, config.ratios)
    split_pairs, cross = attach_splits(clean_pairs, dedup.fragments, split_of)
    pstats.cross_split_dropped = cross

    train = [p for p in split_pairs if p.split == "train"]
    val = [p for p in split_pairs if p.split == "validation"]
    test = [p for p in split_pairs if p.split == "test"]

    uniform_caps = {l: c for l, c in config.train_caps.items() if l not in config.diversity_labels}
    train = sample_training_set(train, uniform_caps, config.seed)
    for label in config.diversity_labels:
        cap = config.train_caps.get(label)
        if cap is None:
            continue
        tagged = [p for p in train if p.label == label]
        if len(tagged) <= cap:
            continue
        chosen = {p.pair_id for p in diversity_select(tagged, cap, dedup.fragments, config.diversity_bins)}
        train = [p for p in train if p.label != label or p.pair_id in chosen]

    val_caps = {label: config.validation_target for label in {p.label for p in val}}
    val = sample_training_set(val, val_caps, config.seed + 1)

    final = train + val + test
    counts: Dict[str, Dict[int, int]] = {s: {} for s in SPLITS}
    for p in final:
        counts[p.split][p.label] = counts[p.split].get(p.label, 0) + 1
    report = CurationReport(
        fragment_stats={
            "input": len(fragments),
            "too_short": dedup.too_short,
            "duplicates": dedup.duplicates,
            "kept": len(dedup.fragments),
        },
        pair_stats={
            "input": len(pairs),
            "remapped": pstats.remapped,
            "self_pairs_dropped": pstats.self_pairs_dropped,
            "missing_fragment_dropped": pstats.missing_fragment_dropped,
            "duplicate_pairs_dropped": pstats.duplicate_pairs_dropped,
            "cross_split_dropped": pstats.cross_split_dropped,
            "kept": len(final),
        },
        split_label_counts=counts,
    )
    return dedup.fragments, final, report


# ---------------------------------------------------------------------- io


def read_fragments(path: Path) -> List[Fragment]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            out.append(Fragment(row["fragment_id"], row["project_id"], row["source"]))
    return out


def write_fragments(path: Path, fragments: Iterable[Fragment]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in fragments:
            fh.write(json.dumps(
                {"fragment_id": f.fragment_id, "project_id": f.project_id, "source": f.source},
                ensure_ascii=False) + "\n")


def read_pairs(path: Path) -> List[Pair]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            out.append(Pair(row["pair_id"], row["left"], row["right"], int(row["label"]), row.get("split")))
    return out


def write_pairs(path: Path, pairs: Iterable[Pair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            row = {"pair_id": p.pair_id, "left": p.left, "right": p.right, "label": p.label}
            if p.split is not None:
                row["split"] = p.split
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
