"""Self-contained demo corpus for exercising the full pipeline offline.

Generates ~16 small "projects", each a family of Java methods derived from
one of three hand-written templates: an exact copy modulo comments and
whitespace, a systematic rename, and progressively heavier rewrites, plus
one unrelated method. Every family yields one labeled pair per class, so
all seven classes appear in every split. Identifiers carry a per-family
suffix so no two fragments normalize to the same content hash.

Also emits a binary embedding store (deterministic bag-of-token random
projection, so no model download is needed), a mock verdict file for
offline arbitration, and a config file wiring sensible small-run settings
for the command line.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from . import corpus, lexical, semantic

DEFAULT_FAMILIES = 16
DEFAULT_DIM = 16
DEFAULT_SEED = 33

# Pair kind -> class label. "alt" pairs the base with an unrelated method.
KIND_LABELS = {
    "alt": 0,
    "t1": 1,
    "t2": 2,
    "vst3": 3,
    "st3": 4,
    "mt3": 5,
    "wt3": 6,
}

_SUM_FORMS = {
    "base": """\
public int computeTotal(int[] values, int limit) {
    int total = 0;
    for (int idx = 0; idx < values.length; idx++) {
        int probe = values[idx];
        if (probe > limit) {
            total += probe;
        } else {
            total -= 1;
        }
    }
    return total;
}""",
    "t1": """\
public int computeTotal(int[] values, int limit) {
    // running tally over the raw readings
    int total = 0;
    for (int idx = 0; idx < values.length; idx++) {
        int probe = values[idx];  // current reading
        if (probe > limit) {
            total += probe;
        } else {
            total -= 1;  // undercount penalty
        }
    }
    return total;
}""",
    "t2": """\
public int tallyRows(int[] rows, int cutoff) {
    int acc = 0;
    for (int cursor = 0; cursor < rows.length; cursor++) {
        int sample = rows[cursor];
        if (sample > cutoff) {
            acc += sample;
        } else {
            acc -= 2;
        }
    }
    return acc;
}""",
    "vst3": """\
public int computeTotal(int[] values, int limit) {
    if (values == null) {
        return 0;
    }
    int total = 0;
    for (int idx = 0; idx < values.length; idx++) {
        int probe = values[idx];
        if (probe > limit) {
            total += probe;
        } else {
            total -= 1;
        }
    }
    return total;
}""",
    "st3": """\
public int computeTotal(int[] values, int limit) {
    if (values == null || values.length == 0) {
        return 0;
    }
    int total = 0;
    int penalty = limit / 4;
    for (int idx = 0; idx < values.length; idx++) {
        int probe = values[idx];
        if (probe > limit) {
            total += probe - penalty;
        } else {
            total -= penalty;
        }
    }
    return total;
}""",
    "mt3": """\
public int computeTotal(int[] values, int limit) {
    int total = 0;
    int idx = 0;
    while (idx < values.length) {
        total += values[idx] > limit ? values[idx] : -1;
        idx++;
    }
    return total;
}""",
    "wt3": """\
public int computeTotal(int[] values, int limit) {
    int gains = 0;
    int misses = 0;
    for (int probe : values) {
        if (probe > limit) {
            gains += probe;
        } else {
            misses++;
        }
    }
    return gains - misses;
}""",
}

_FIND_FORMS = {
    "base": """\
public int findSlot(String[] entries, String target) {
    int found = -1;
    for (int pos = 0; pos < entries.length; pos++) {
        if (entries[pos].equals(target)) {
            found = pos;
            break;
        }
    }
    return found;
}""",
    "t1": """\
public int findSlot(String[] entries, String target) {
    int found = -1;
    // scan left to right, first hit wins
    for (int pos = 0; pos < entries.length; pos++) {
        if (entries[pos].equals(target)) {
            found = pos;
            break;  // stop at the first match
        }
    }
    return found;
}""",
    "t2": """\
public int locateKey(String[] bucket, String needle) {
    int hit = -1;
    for (int scan = 0; scan < bucket.length; scan++) {
        if (bucket[scan].equals(needle)) {
            hit = scan;
            break;
        }
    }
    return hit;
}""",
    "vst3": """\
public int findSlot(String[] entries, String target) {
    int found = -1;
    for (int pos = 0; pos < entries.length; pos++) {
        if (entries[pos] != null && entries[pos].equals(target)) {
            found = pos;
            break;
        }
    }
    return found;
}""",
    "st3": """\
public int findSlot(String[] entries, String target) {
    if (entries == null) {
        return -1;
    }
    int found = -1;
    for (int pos = entries.length - 1; pos >= 0; pos--) {
        if (target.equals(entries[pos])) {
            found = pos;
        }
    }
    return found;
}""",
    "mt3": """\
public int findSlot(String[] entries, String target) {
    int pos = 0;
    while (pos < entries.length) {
        if (entries[pos].equals(target)) {
            return pos;
        }
        pos++;
    }
    return -1;
}""",
    "wt3": """\
public int findSlot(String[] entries, String target) {
    java.util.List<String> view = java.util.Arrays.asList(entries);
    int found = view.indexOf(target);
    if (found < 0) {
        found = -1;
    }
    return found;
}""",
}

_JOIN_FORMS = {
    "base": """\
public String renderList(String[] items, String sep) {
    StringBuilder out = new StringBuilder();
    for (int k = 0; k < items.length; k++) {
        if (k > 0) {
            out.append(sep);
        }
        out.append(items[k]);
    }
    return out.toString();
}""",
    "t1": """\
public String renderList(String[] items, String sep) {
    StringBuilder out = new StringBuilder();
    // separator goes between elements, never at the front
    for (int k = 0; k < items.length; k++) {
        if (k > 0) {
            out.append(sep);
        }
        out.append(items[k]);
    }
    return out.toString();
}""",
    "t2": """\
public String joinParts(String[] parts, String glue) {
    StringBuilder buf = new StringBuilder();
    for (int n = 0; n < parts.length; n++) {
        if (n > 0) {
            buf.append(glue);
        }
        buf.append(parts[n]);
    }
    return buf.toString();
}""",
    "vst3": """\
public String renderList(String[] items, String sep) {
    StringBuilder out = new StringBuilder();
    for (int k = 0; k < items.length; k++) {
        if (k > 0) {
            out.append(sep);
        }
        out.append(items[k] == null ? "" : items[k]);
    }
    return out.toString();
}""",
    "st3": """\
public String renderList(String[] items, String sep) {
    StringBuilder out = new StringBuilder();
    out.append("[");
    for (int k = 0; k < items.length; k++) {
        if (k > 0) {
            out.append(sep);
        }
        out.append(items[k].trim());
    }
    out.append("]");
    return out.toString();
}""",
    "mt3": """\
public String renderList(String[] items, String sep) {
    StringBuilder out = new StringBuilder();
    boolean first = true;
    int k = 0;
    while (k < items.length) {
        if (!first) {
            out.append(sep);
        }
        out.append(items[k]);
        first = false;
        k++;
    }
    return out.toString();
}""",
    "wt3": """\
public String renderList(String[] items, String sep) {
    String out = "";
    for (String piece : items) {
        if (out.length() > 0) {
            out = out + sep;
        }
        out = out + piece;
    }
    return out;
}""",
}

# Renameable identifiers per template; family index is appended to each so
# fragments never collide across families after normalization.
_TEMPLATES: List[Tuple[Dict[str, str], Tuple[str, ...]]] = [
    (_SUM_FORMS, ("computeTotal", "values", "limit", "total", "idx", "probe",
                  "tallyRows", "rows", "cutoff", "acc", "cursor", "sample",
                  "penalty", "gains", "misses")),
    (_FIND_FORMS, ("findSlot", "entries", "target", "found", "pos",
                   "locateKey", "bucket", "needle", "hit", "scan", "view")),
    (_JOIN_FORMS, ("renderList", "items", "sep", "out", "k",
                   "joinParts", "parts", "glue", "buf", "n", "first", "piece")),
]

_TEMPLATE_TAGS = ("total", "find", "join")

# These pairs have no mock verdict on purpose, so a full offline run
# exercises the fail-closed fallback path too (p11 lands in the test
# split under the bundled settings).
HELD_OUT_VERDICTS = ("p00_mt3", "p11_mt3")


def _rename(source: str, names: Tuple[str, ...], family: int) -> str:
    for name in names:
        source = re.sub(rf"\b{name}\b", f"{name}{family}", source)
    return source


def _fragment_source(family: int, form: str, template_index: int) -> str:
    forms, names = _TEMPLATES[template_index]
    tag = _TEMPLATE_TAGS[template_index]
    header = f"/** Family {family:02d} {tag} helper, variant {form}. */\n"
    return header + _rename(forms[form], names, family)


def build_family(family: int) -> Tuple[List[corpus.Fragment], List[corpus.Pair]]:
    """One project: seven template forms, one unrelated method, seven pairs."""
    t = family % len(_TEMPLATES)
    project = f"proj{family:02d}"
    fragments = []
    for form in ("base", "t1", "t2", "vst3", "st3", "mt3", "wt3"):
        fragments.append(corpus.Fragment(
            fragment_id=f"frag{family:02d}_{form}",
            project_id=project,
            source=_fragment_source(family, form, t),
        ))
    fragments.append(corpus.Fragment(
        fragment_id=f"frag{family:02d}_alt",
        project_id=project,
        source=_fragment_source(family, "base", (t + 1) % len(_TEMPLATES)),
    ))
    pairs = [
        corpus.Pair(
            pair_id=f"p{family:02d}_{kind}",
            left=f"frag{family:02d}_base",
            right=f"frag{family:02d}_{kind}",
            label=label,
        )
        for kind, label in sorted(KIND_LABELS.items())
    ]
    return fragments, pairs


def _token_vector(token: str, dim: int) -> np.ndarray:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    return rng.standard_normal(dim)


def embed_source(source: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Deterministic stand-in embedding: mean of per-token random projections."""
    seq = lexical.tokenize(source)
    if not seq.tokens:
        return np.zeros(dim, dtype=np.float32)
    acc = np.zeros(dim, dtype=np.float64)
    for token, count in seq.counts.items():
        acc += count * _token_vector(token, dim)
    acc /= len(seq.tokens)
    norm = float(np.linalg.norm(acc))
    if norm > 0:
        acc /= norm
    return acc.astype(np.float32)


def _verdict_for(label: int) -> dict:
    probs = [0.02] * 7
    probs[label] = 0.88
    return {
        "mode": "guided",
        "thought": "compared the two fragments token by token and by control flow",
        "prediction": label,
        "confidence": 0.88,
        "explanation": "replayed fixture verdict agreeing with the pair label",
        "probabilities": probs,
    }


_CONFIG_TEXT = """\
# Small-run settings for the bundled demo corpus.
seed = 33
min_chars = 200
validation_target = 1
cap_label0 = 8
cap_label6 = 8
kind = gbdt
epochs = 30
learning_rate = 0.003
warmup_steps = 10
batch_size = 32
mode = labels2345
threshold = 0.91
"""


def write_fixture(out_dir: Path, n_families: int = DEFAULT_FAMILIES,
                  dim: int = DEFAULT_DIM) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fragments: List[corpus.Fragment] = []
    pairs: List[corpus.Pair] = []
    for family in range(n_families):
        frags, fam_pairs = build_family(family)
        fragments.extend(frags)
        pairs.extend(fam_pairs)

    for f in fragments:
        if len(f.source) < 210:
            raise AssertionError(f"fixture fragment {f.fragment_id} too short")

    corpus.write_fragments(out_dir / "fragments.jsonl", fragments)
    corpus.write_pairs(out_dir / "pairs.jsonl", pairs)
    semantic.write_store(
        out_dir / "embeddings.tfem",
        dimension=dim,
        pooling="mean",
        records=[(f.fragment_id, embed_source(f.source, dim)) for f in fragments],
    )
    verdicts = {
        p.pair_id: _verdict_for(p.label)
        for p in pairs
        if p.pair_id not in HELD_OUT_VERDICTS
    }
    with open(out_dir / "verdicts.json", "w", encoding="utf-8") as fh:
        json.dump(verdicts, fh, sort_keys=True, indent=2)
        fh.write("\n")
    (out_dir / "run.cfg").write_text(_CONFIG_TEXT, encoding="utf-8")
    return {
        "families": n_families,
        "fragments": len(fragments),
        "pairs": len(pairs),
        "embedding_dim": dim,
        "verdicts": len(verdicts),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m clonefuse.fixture",
        description="write the bundled demo corpus to a directory",
    )
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--families", type=int, default=DEFAULT_FAMILIES)
    parser.add_argument("--dim", type=int, default=DEFAULT_DIM)
    args = parser.parse_args(argv)
    summary = write_fixture(args.out_dir, args.families, args.dim)
    json.dump(summary, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
