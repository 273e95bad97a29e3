"""Command line for the clone-pair pipeline.

Subcommands mirror the pipeline stages; each stage writes its artifacts
plus a replay manifest (resolved settings and input digests, never
timestamps) so any output can be reproduced byte for byte.

Settings resolve as: command-line flag, then `--config` file entry, then
built-in default. Config files are flat `key = value` lines with `#`
comments; keys are the long option names with underscores.

Exit codes: 0 success, 1 pipeline failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, Optional

from . import arbiter, corpus, fusion, pipeline, prior, semantic


class UsageError(Exception):
    pass


def load_config(path: Path) -> Dict[str, str]:
    values: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str):
    return tuple(float(part) for part in text.split(","))


def _parse_ints(text: str):
    return tuple(int(part) for part in text.split(","))


# Option name -> (cast, default). Shared across subcommands so config files
# can carry settings for several stages at once; each command picks the
# keys it understands.
_SETTINGS = {
    "seed": (int, 13),
    "min_chars": (int, corpus.DEFAULT_MIN_CHARS),
    "ratios": (_parse_floats, corpus.DEFAULT_RATIOS),
    "validation_target": (int, corpus.DEFAULT_VALIDATION_TARGET),
    "cap_label0": (int, corpus.DEFAULT_TRAIN_CAPS[0]),
    "cap_label6": (int, corpus.DEFAULT_TRAIN_CAPS[6]),
    "diversity_bins": (int, 4),
    "ted_node_cap": (int, 1500),
    "max_tokens": (int, 2000),
    "dimension": (int, None),
    "kind": (str, "gbdt"),
    "rounds": (int, 100),
    "iterations": (int, 300),
    "learning_rate": (float, None),
    "max_depth": (int, 3),
    "l2": (float, 1e-3),
    "epochs": (int, 5),
    "batch_size": (int, 32),
    "warmup_steps": (int, 80),
    "label_smoothing": (float, 0.1),
    "d_k": (int, 64),
    "hidden": (int, 32),
    "class_prior_init": (_parse_bool, False),
    "split": (str, None),
    "mode": (str, "off"),
    "threshold": (float, 0.6),
    "skip_labels": (_parse_ints, (0, 1, 6)),
    "endpoint": (str, ""),
    "model": (str, ""),
    "api_key_env": (str, "CLONEFUSE_API_KEY"),
    "max_fragment_chars": (int, 4000),
    "concurrency": (int, 4),
    "max_retries": (int, 2),
    "bins": (_parse_floats, (0.0, 0.6, 0.8, 1.0)),
}


def resolve(args: argparse.Namespace, names) -> Dict[str, object]:
    """Merge flags over config-file entries over defaults for `names`."""
    config_values: Dict[str, str] = {}
    if getattr(args, "config", None):
        config_values = load_config(args.config)
        unknown = set(config_values) - set(_SETTINGS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out: Dict[str, object] = {}
    for name in names:
        cast, default = _SETTINGS[name]
        flag = getattr(args, name, None)
        if flag is not None:
            out[name] = flag
        elif name in config_values:
            try:
                out[name] = cast(config_values[name])
            except ValueError as exc:
                raise UsageError(f"config key {name}: {exc}")
        else:
            out[name] = default
    return out


def _manifest_config(settings: Dict[str, object]) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(settings.items())}


# ------------------------------------------------------------- subcommands


def cmd_curate(args) -> dict:
    s = resolve(args, ("seed", "min_chars", "ratios", "validation_target",
                       "cap_label0", "cap_label6", "diversity_bins"))
    fragments = corpus.read_fragments(args.fragments)
    pairs = corpus.read_pairs(args.pairs)
    config = corpus.CurationConfig(
        min_chars=s["min_chars"],
        ratios=s["ratios"],
        seed=s["seed"],
        train_caps={0: s["cap_label0"], 6: s["cap_label6"]},
        validation_target=s["validation_target"],
        diversity_bins=s["diversity_bins"],
    )
    kept_fragments, kept_pairs, report = corpus.curate(fragments, pairs, config)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    corpus.write_fragments(out / "fragments.jsonl", kept_fragments)
    corpus.write_pairs(out / "pairs.jsonl", kept_pairs)
    pipeline.write_json(out / "curation_report.json", report.to_json())
    pipeline.write_manifest(out, "curate", _manifest_config(s),
                            {"fragments": args.fragments, "pairs": args.pairs})
    return report.pair_stats


def cmd_featurize(args) -> dict:
    s = resolve(args, ("ted_node_cap", "max_tokens"))
    fragments = corpus.read_fragments(args.fragments)
    pairs = corpus.read_pairs(args.pairs)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    result = pipeline.featurize(fragments, pairs, out,
                                ted_node_cap=s["ted_node_cap"],
                                max_tokens=s["max_tokens"])
    summary = {
        "pairs": result.pairs,
        "parse_failures": result.parse_failures,
        "truncated_token_sequences": result.truncated_token_sequences,
    }
    pipeline.write_json(out / "featurize_report.json", summary)
    pipeline.write_manifest(out, "featurize", _manifest_config(s),
                            {"fragments": args.fragments, "pairs": args.pairs})
    return summary


def cmd_import_embeddings(args) -> dict:
    s = resolve(args, ("dimension",))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with semantic.EmbeddingStore(args.store, expected_dimension=s["dimension"]) as store:
        summary = {
            "count": len(store.ids),
            "dimension": store.dimension,
            "pooling": store.pooling,
            "content_digest": store.content_digest(),
            "store_sha256": pipeline.file_digest(args.store),
        }
    pipeline.write_json(args.out, summary)
    return summary


def cmd_train_prior(args) -> dict:
    s = resolve(args, ("kind", "rounds", "iterations", "learning_rate",
                       "max_depth", "l2"))
    if s["kind"] == "gbdt":
        lr = 0.1 if s["learning_rate"] is None else s["learning_rate"]
        model_config = prior.GbdtConfig(n_rounds=s["rounds"], learning_rate=lr,
                                        max_depth=s["max_depth"])
    elif s["kind"] == "softmax":
        lr = 0.5 if s["learning_rate"] is None else s["learning_rate"]
        model_config = prior.SoftmaxConfig(iterations=s["iterations"],
                                           learning_rate=lr, l2=s["l2"])
    else:
        raise UsageError(f"unknown prior kind {s['kind']!r}")
    pairs = corpus.read_pairs(args.pairs)
    lexical_rows = pipeline.read_jsonl(args.lexical)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    summary = pipeline.train_prior(pairs, lexical_rows, out, s["kind"], model_config)
    pipeline.write_manifest(out, "train-prior", _manifest_config(s),
                            {"pairs": args.pairs, "lexical": args.lexical})
    return summary


def _load_bundles(args, split: Optional[str]):
    pairs = corpus.read_pairs(args.pairs)
    if split:
        pairs = [p for p in pairs if p.split == split]
        if not pairs:
            raise UsageError(f"no pairs in split {split!r}")
    lexical_rows = pipeline.read_jsonl(args.lexical)
    structural_rows = pipeline.read_jsonl(args.structural)
    prior_rows = pipeline.read_jsonl(args.prior)
    with semantic.EmbeddingStore(args.store) as store:
        bundles = pipeline.build_bundles(pairs, lexical_rows, structural_rows,
                                         prior_rows, store)
    return pairs, bundles


def cmd_train_fusion(args) -> dict:
    s = resolve(args, ("epochs", "batch_size", "learning_rate", "warmup_steps",
                       "label_smoothing", "seed", "d_k", "hidden",
                       "class_prior_init", "split"))
    split = s["split"] or "train"
    pairs, bundles = _load_bundles(args, split)
    if not bundles.bundles:
        raise UsageError(f"no usable pairs in split {split!r}")
    lr = 1e-4 if s["learning_rate"] is None else s["learning_rate"]
    train_config = fusion.TrainConfig(
        learning_rate=lr,
        warmup_steps=s["warmup_steps"],
        epochs=s["epochs"],
        batch_size=s["batch_size"],
        label_smoothing=s["label_smoothing"],
        seed=s["seed"],
    )
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    summary = pipeline.train_fusion(
        bundles, out, train_config,
        d_k=s["d_k"], hidden=s["hidden"], init_seed=s["seed"],
        class_prior_init=s["class_prior_init"],
    )
    pipeline.write_manifest(out, "train-fusion", _manifest_config(s), {
        "pairs": args.pairs, "lexical": args.lexical,
        "structural": args.structural, "prior": args.prior,
        "store": args.store,
    })
    return summary


def cmd_predict(args) -> dict:
    s = resolve(args, ("split",))
    pairs, bundles = _load_bundles(args, s["split"])
    params, _meta = fusion.load_checkpoint(args.checkpoint)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    summary = pipeline.predict_to_file(bundles, params, pairs, args.out)
    pipeline.write_json(
        Path(str(args.out) + ".manifest.json"),
        {
            "command": "predict",
            "version": pipeline.__version__,
            "config": _manifest_config(s),
            "inputs": {
                name: pipeline.file_digest(path)
                for name, path in sorted({
                    "pairs": args.pairs, "lexical": args.lexical,
                    "structural": args.structural, "prior": args.prior,
                    "store": args.store, "checkpoint": args.checkpoint,
                }.items())
            },
        },
    )
    return summary


def cmd_arbitrate(args) -> dict:
    s = resolve(args, ("mode", "threshold", "skip_labels", "endpoint", "model",
                       "api_key_env", "max_fragment_chars", "concurrency",
                       "max_retries"))
    config = arbiter.ArbiterConfig(
        mode=s["mode"],
        threshold=s["threshold"],
        skip_labels=s["skip_labels"],
        endpoint=s["endpoint"],
        model=s["model"],
        api_key_env=s["api_key_env"],
        max_retries=s["max_retries"],
        concurrency=s["concurrency"],
        max_fragment_chars=s["max_fragment_chars"],
    )
    arb: Optional[arbiter.Arbiter] = None
    if args.mock_verdicts:
        arb = arbiter.MockArbiter(args.mock_verdicts)
    elif config.endpoint:
        arb = arbiter.HttpArbiter(config)
    pairs = corpus.read_pairs(args.pairs)
    fragments = corpus.read_fragments(args.fragments)
    distribution_rows = pipeline.read_jsonl(args.distributions)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    summary = pipeline.arbitrate_pairs(pairs, fragments, distribution_rows,
                                       config, arb, args.out)
    inputs = {"pairs": args.pairs, "fragments": args.fragments,
              "distributions": args.distributions}
    if args.mock_verdicts:
        inputs["mock_verdicts"] = args.mock_verdicts
    pipeline.write_json(
        Path(str(args.out) + ".manifest.json"),
        {
            "command": "arbitrate",
            "version": pipeline.__version__,
            "config": _manifest_config(s),
            "inputs": {k: pipeline.file_digest(v) for k, v in sorted(inputs.items())},
        },
    )
    return summary


def cmd_evaluate(args) -> dict:
    s = resolve(args, ("bins",))
    decision_rows = arbiter.read_decision_log(args.decisions)
    truths = corpus.read_pairs(args.truths)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    report = pipeline.evaluate_decisions(decision_rows, truths, s["bins"])
    report["inputs"] = {
        "decisions": pipeline.file_digest(args.decisions),
        "truths": pipeline.file_digest(args.truths),
    }
    report["version"] = pipeline.__version__
    pipeline.write_json(args.out, report)
    return {
        "count": report["count"],
        "primary_macro_f1": report["primary"]["macro_f1"],
        "final_macro_f1": report["final"]["macro_f1"],
    }


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clonefuse",
        description="clone-pair classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **paths):
        p = sub.add_parser(name)
        p.set_defaults(fn=fn)
        p.add_argument("--config", type=Path, default=None)
        for arg, required in paths.items():
            p.add_argument(f"--{arg.replace('_', '-')}", type=Path,
                           required=required, dest=arg)
        return p

    p = add("curate", cmd_curate, fragments=True, pairs=True, out_dir=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-chars", type=int, dest="min_chars")
    p.add_argument("--ratios", type=_parse_floats)
    p.add_argument("--validation-target", type=int, dest="validation_target")
    p.add_argument("--cap-label0", type=int, dest="cap_label0")
    p.add_argument("--cap-label6", type=int, dest="cap_label6")
    p.add_argument("--diversity-bins", type=int, dest="diversity_bins")

    p = add("featurize", cmd_featurize, fragments=True, pairs=True, out_dir=True)
    p.add_argument("--ted-node-cap", type=int, dest="ted_node_cap")
    p.add_argument("--max-tokens", type=int, dest="max_tokens")

    p = add("import-embeddings", cmd_import_embeddings, store=True, out=True)
    p.add_argument("--dimension", type=int)

    p = add("train-prior", cmd_train_prior, pairs=True, lexical=True, out_dir=True)
    p.add_argument("--kind", choices=("gbdt", "softmax"))
    p.add_argument("--rounds", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--l2", type=float)

    p = add("train-fusion", cmd_train_fusion, pairs=True, lexical=True,
            structural=True, prior=True, store=True, out_dir=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--warmup-steps", type=int, dest="warmup_steps")
    p.add_argument("--label-smoothing", type=float, dest="label_smoothing")
    p.add_argument("--seed", type=int)
    p.add_argument("--d-k", type=int, dest="d_k")
    p.add_argument("--hidden", type=int)
    p.add_argument("--class-prior-init", action="store_const", const=True,
                   default=None, dest="class_prior_init")
    p.add_argument("--split")

    p = add("predict", cmd_predict, pairs=True, lexical=True, structural=True,
            prior=True, store=True, checkpoint=True, out=True)
    p.add_argument("--split")

    p = add("arbitrate", cmd_arbitrate, pairs=True, fragments=True,
            distributions=True, out=True)
    p.add_argument("--mode", choices=arbiter.MODES)
    p.add_argument("--threshold", type=float)
    p.add_argument("--skip-labels", type=_parse_ints, dest="skip_labels")
    p.add_argument("--mock-verdicts", type=Path, dest="mock_verdicts")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--api-key-env", dest="api_key_env")
    p.add_argument("--max-fragment-chars", type=int, dest="max_fragment_chars")
    p.add_argument("--concurrency", type=int)
    p.add_argument("--max-retries", type=int, dest="max_retries")

    p = add("evaluate", cmd_evaluate, decisions=True, truths=True, out=True)
    p.add_argument("--bins", type=_parse_floats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = args.fn(args)
    except UsageError as exc:
        print(f"clonefuse {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pipeline failures: bad inputs, formats, IO
        print(f"clonefuse {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    json.dump(summary, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
