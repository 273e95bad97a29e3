import json
import subprocess
import sys
from pathlib import Path

import pytest


def run_cli(*argv, expect=0):
    """Run the installed CLI in a subprocess; return (exit code, stdout, stderr)."""
    proc = subprocess.run(
        [sys.executable, "-m", "clonefuse.cli", *map(str, argv)],
        capture_output=True, text=True,
    )
    if expect is not None:
        assert proc.returncode == expect, (
            f"exit {proc.returncode}, expected {expect}\n"
            f"stdout: {proc.stdout}\nstderr: {proc.stderr}"
        )
    return proc.returncode, proc.stdout, proc.stderr


def run_chain(root: Path) -> dict:
    """Generate the bundled demo corpus and push it through every stage."""
    fixture = root / "fixture"
    curated = root / "curated"
    features = root / "features"
    prior_dir = root / "prior"
    fusion_dir = root / "fusion"
    subprocess.run(
        [sys.executable, "-m", "clonefuse.fixture", str(fixture)],
        check=True, capture_output=True,
    )
    cfg = fixture / "run.cfg"
    run_cli("curate", "--config", cfg,
            "--fragments", fixture / "fragments.jsonl",
            "--pairs", fixture / "pairs.jsonl", "--out-dir", curated)
    run_cli("featurize", "--fragments", curated / "fragments.jsonl",
            "--pairs", curated / "pairs.jsonl", "--out-dir", features)
    run_cli("import-embeddings", "--store", fixture / "embeddings.tfem",
            "--out", root / "embeddings_summary.json")
    run_cli("train-prior", "--config", cfg, "--pairs", curated / "pairs.jsonl",
            "--lexical", features / "lexical.jsonl", "--out-dir", prior_dir)
    run_cli("train-fusion", "--config", cfg, "--pairs", curated / "pairs.jsonl",
            "--lexical", features / "lexical.jsonl",
            "--structural", features / "structural.jsonl",
            "--prior", prior_dir / "prior.jsonl",
            "--store", fixture / "embeddings.tfem",
            "--out-dir", fusion_dir, "--class-prior-init")
    run_cli("predict", "--pairs", curated / "pairs.jsonl",
            "--lexical", features / "lexical.jsonl",
            "--structural", features / "structural.jsonl",
            "--prior", prior_dir / "prior.jsonl",
            "--store", fixture / "embeddings.tfem",
            "--checkpoint", fusion_dir / "fusion_checkpoint.json",
            "--out", root / "test_distributions.jsonl", "--split", "test")
    run_cli("arbitrate", "--config", cfg, "--pairs", curated / "pairs.jsonl",
            "--fragments", curated / "fragments.jsonl",
            "--distributions", root / "test_distributions.jsonl",
            "--out", root / "decisions.jsonl",
            "--mock-verdicts", fixture / "verdicts.json")
    run_cli("evaluate", "--decisions", root / "decisions.jsonl",
            "--truths", curated / "pairs.jsonl", "--out", root / "report.json")
    return {
        "root": root, "fixture": fixture, "curated": curated,
        "features": features, "prior": prior_dir, "fusion": fusion_dir,
        "distributions": root / "test_distributions.jsonl",
        "decisions": root / "decisions.jsonl",
        "report": root / "report.json",
    }


@pytest.fixture(scope="session")
def chain(tmp_path_factory):
    return run_chain(tmp_path_factory.mktemp("chain"))


def read_jsonl(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
