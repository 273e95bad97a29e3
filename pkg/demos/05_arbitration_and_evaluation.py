"""Escalate unsure calls to a scripted reviewer and score both policies.

The classifier here is faked with hand-built distributions so the script
stays focused on the decision path: gate, prompt, verdict, fallback, and
the final report. Run:
python3 demos/05_arbitration_and_evaluation.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from clonefuse import LABEL_NAMES, arbiter, corpus, fusion, pipeline
from clonefuse.fixture import write_fixture


def fake_distribution(predicted: int, confidence: float) -> fusion.ProbabilityDistribution:
    probs = np.full(7, (1.0 - confidence) / 6.0)
    probs[predicted] = confidence
    return fusion.ProbabilityDistribution(probs)


def main() -> None:
    work = Path(tempfile.mkdtemp(prefix="arbitration_demo_"))
    write_fixture(work / "fixture")
    fragments = {f.fragment_id: f for f in corpus.read_fragments(work / "fixture" / "fragments.jsonl")}
    pairs = [p for p in corpus.read_pairs(work / "fixture" / "pairs.jsonl")
             if p.pair_id.split("_")[0] in ("p00", "p01", "p02", "p03")]
    config = arbiter.ArbiterConfig(mode="labels2345", threshold=0.6)

    # Pretend the classifier nails everything except the mt3/st3 pairs,
    # where it answers st3 at low confidence. Only those cross the gate:
    # skip-listed or confident predictions never reach the reviewer.
    dists = {}
    for pair in pairs:
        if pair.label in (4, 5):
            dists[pair.pair_id] = fake_distribution(4, 0.52)
        else:
            dists[pair.pair_id] = fake_distribution(pair.label, 0.90)
    for pair_id in ("p00_t1", "p00_st3", "p00_mt3"):
        d = dists[pair_id]
        print(f"{pair_id}: predicted {LABEL_NAMES[d.predicted]} at {d.confidence:.2f}, "
              f"triggers -> {arbiter.should_trigger(d, config)}")

    # What the reviewer actually sees for one escalated pair.
    pair = next(p for p in pairs if p.pair_id == "p01_mt3")
    prompt = arbiter.build_prompt(
        fragments[pair.left].source, fragments[pair.right].source,
        dist=dists[pair.pair_id], max_fragment_chars=400)
    head, tail = prompt.splitlines()[:12], prompt.splitlines()[-8:]
    print("\n--- prompt preview " + "-" * 40)
    print("\n".join(head))
    print(f"  ... [{len(prompt.splitlines()) - len(head) - len(tail)} lines elided]")
    print("\n".join(tail))

    # Scripted verdicts stand in for a live endpoint. p00_mt3 is missing
    # from the script on purpose, so its decision falls back to the primary.
    mock = arbiter.MockArbiter(work / "fixture" / "verdicts.json")
    items = [(p.pair_id, dists[p.pair_id],
              arbiter.build_prompt(fragments[p.left].source, fragments[p.right].source,
                                   dist=dists[p.pair_id]))
             for p in pairs]
    records = arbiter.arbitrate_batch(items, config, mock, clock=lambda: 0.0)

    print("\n--- decisions " + "-" * 45)
    for rec in records:
        if not rec.triggered:
            continue
        outcome = (f"verdict {LABEL_NAMES[rec.verdict.prediction]}" if rec.verdict
                   else f"fallback ({rec.fallback_reason})")
        print(f"{rec.pair_id}: primary {LABEL_NAMES[rec.primary]} "
              f"@ {rec.confidence:.2f} -> {outcome}, final {LABEL_NAMES[rec.final]}")

    report = pipeline.evaluate_decisions([r.to_json() for r in records], pairs)
    print("\n--- report " + "-" * 48)
    print(f"pairs {report['count']}, triggered {report['triggered']}, "
          f"fallbacks {report['fallbacks']}")
    print(f"primary accuracy {report['primary']['accuracy']:.3f} -> "
          f"final {report['final']['accuracy']:.3f}")
    for row in report["policy_comparison"]:
        print(f"policy {row['policy']}: accuracy {row['accuracy']:.3f}, "
              f"macro_f1 {row['macro_f1']:.3f}")
    print(json.dumps(report["confidence_bins"], indent=2))


if __name__ == "__main__":
    main()
