"""Train the whole stack in-process on the bundled corpus and predict.

Mirrors what the CLI stages do, but stays inside Python so each
intermediate object can be inspected. Run:
python3 demos/04_training_and_prediction.py
"""

import tempfile
from pathlib import Path

from clonefuse import LABEL_NAMES, corpus, fusion, pipeline, prior, semantic
from clonefuse.fixture import write_fixture


def main() -> None:
    work = Path(tempfile.mkdtemp(prefix="training_demo_"))
    write_fixture(work / "fixture")
    fragments = corpus.read_fragments(work / "fixture" / "fragments.jsonl")
    pairs = corpus.read_pairs(work / "fixture" / "pairs.jsonl")
    _, kept, _ = corpus.curate(fragments, pairs, corpus.CurationConfig(
        seed=33, train_caps={0: 8, 6: 8}, validation_target=1))

    # lexical + structural caches
    features = work / "features"
    features.mkdir()
    result = pipeline.featurize(fragments, kept, features)
    print(f"featurized {result.pairs} pairs, {result.parse_failures} parse failures")
    lexical_rows = pipeline.read_jsonl(features / "lexical.jsonl")
    structural_rows = pipeline.read_jsonl(features / "structural.jsonl")

    # stage one: gradient-boosted prior over the 18 lexical features
    summary = pipeline.train_prior(kept, lexical_rows, features,
                                   "gbdt", prior.GbdtConfig(n_rounds=100))
    prior_rows = pipeline.read_jsonl(features / "prior.jsonl")
    print(f"prior trained on {summary['train_pairs']} pairs, "
          f"scored {summary['scored_pairs']}")

    # stage two: fuse prior + structure + embeddings
    with semantic.EmbeddingStore(work / "fixture" / "embeddings.tfem") as store:
        train_set = pipeline.build_bundles(
            [p for p in kept if p.split == "train"],
            lexical_rows, structural_rows, prior_rows, store)
        test_set = pipeline.build_bundles(
            [p for p in kept if p.split == "test"],
            lexical_rows, structural_rows, prior_rows, store)

    config = fusion.TrainConfig(learning_rate=3e-3, epochs=30,
                                warmup_steps=10, seed=33)
    H, S, V = train_set.matrices()
    counts = [int((train_set.labels == c).sum()) for c in range(7)]
    params = fusion.init_params(H.shape[1], seed=33,
                                class_prior=[c / sum(counts) for c in counts])
    trained = fusion.train(params, H, S, V, train_set.labels, config)
    print(f"fusion: {trained.steps} steps, "
          f"loss {trained.epoch_losses[0]:.3f} -> {trained.epoch_losses[-1]:.3f}")

    print()
    print("test-split predictions:")
    hits = 0
    for bundle, label in zip(test_set.bundles, test_set.labels):
        dist = fusion.predict(trained.params, bundle)
        mark = "ok " if dist.predicted == label else "MISS"
        hits += dist.predicted == label
        top = ", ".join(f"{LABEL_NAMES[i]}:{p:.2f}" for i, p in dist.top_k(2))
        print(f"  {mark} {bundle.pair_id:<12} true={LABEL_NAMES[label]:<9} {top}")
    print(f"{hits}/{len(test_set.bundles)} correct")


if __name__ == "__main__":
    main()
