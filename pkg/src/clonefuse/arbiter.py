"""Confidence-gated LLM arbitration.

When the fusion head is unsure, the pair can be escalated to a language
model that returns a strict-JSON verdict. Everything here is built to
fail closed: any transport error, malformed reply, or schema violation
after the retry budget makes the decision fall back to the primary
prediction, with the reason recorded in the decision log.
"""

from __future__ import annotations

import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from . import NUM_CLASSES
from .fusion import ProbabilityDistribution

MODES = ("off", "all_low_confidence", "label5_only", "labels2345")

LABEL_GLOSSARY = (
    (0, "not a clone pair"),
    (1, "identical up to whitespace and comments"),
    (2, "identical up to identifier names and literal values"),
    (3, "very similar with small statement-level edits (similarity 90-100%)"),
    (4, "similar with moderate statement-level edits (similarity 70-90%)"),
    (5, "same functionality with substantial rewrites (similarity 50-70%)"),
    (6, "same functionality but textually dissimilar (similarity below 50%)"),
)


class ArbiterError(RuntimeError):
    """Arbitration failed; callers fall back to the primary prediction."""


@dataclass
class ArbiterConfig:
    mode: str = "off"
    threshold: float = 0.6
    skip_labels: Tuple[int, ...] = (0, 1, 6)
    endpoint: str = ""
    model: str = ""
    api_key_env: str = "CLONEFUSE_API_KEY"
    max_retries: int = 2           # extra attempts after the first
    concurrency: int = 4
    rate_per_second: float = 2.0
    bucket_capacity: int = 4
    timeout_s: float = 30.0
    max_fragment_chars: int = 4000

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown arbitration mode {self.mode!r}")


# ------------------------------------------------------------------ gating


def should_trigger(dist: ProbabilityDistribution, config: ArbiterConfig) -> bool:
    """Escalate only low-confidence calls on labels the arbiter can help with."""
    if config.mode == "off":
        return False
    if dist.confidence >= config.threshold:
        return False
    label = dist.predicted
    if label in config.skip_labels:
        return False
    if config.mode == "label5_only":
        return label == 5
    if config.mode == "labels2345":
        return label in (2, 3, 4, 5)
    return True  # all_low_confidence


# ------------------------------------------------------------------ prompt


def _clip(source: str, limit: int) -> str:
    if len(source) <= limit:
        return source
    return source[:limit] + "\n... [truncated]"


def build_prompt(
    left_source: str,
    right_source: str,
    dist: Optional[ProbabilityDistribution] = None,
    max_fragment_chars: int = 4000,
) -> str:
    """Compose the arbitration request.

    When `dist` is provided the classifier's top-3 candidates are shown
    (guided review); otherwise the model judges from the code alone.
    """
    lines = [
        "You are reviewing a pair of Java methods for code cloning.",
        "Classify the pair into exactly one category:",
    ]
    for label, meaning in LABEL_GLOSSARY:
        lines.append(f"  {label}: {meaning}")
    lines += [
        "",
        "Fragment A:",
        "```java",
        _clip(left_source, max_fragment_chars),
        "```",
        "Fragment B:",
        "```java",
        _clip(right_source, max_fragment_chars),
        "```",
    ]
    if dist is not None:
        lines.append("")
        lines.append("A classifier ranked these candidates (label: probability):")
        for label, p in dist.top_k(3):
            lines.append(f"  {label}: {p:.3f}")
        mode = "guided"
    else:
        mode = "independent"
    lines += [
        "",
        "Respond with a single JSON object and nothing else, using exactly",
        "these keys:",
        f'  "mode": "{mode}"',
        '  "thought": short reasoning (string)',
        '  "prediction": the chosen category (integer 0-6)',
        '  "confidence": your confidence in that category (number in [0,1])',
        '  "explanation": one-sentence justification (string)',
        '  "probabilities": list of 7 numbers summing to 1, one per category',
    ]
    return "\n".join(lines)


REPAIR_INSTRUCTION = (
    "Your previous reply was not valid. Return only the JSON object with keys "
    "mode, thought, prediction, confidence, explanation, probabilities; no "
    "prose, no code fences."
)


# ----------------------------------------------------------------- verdicts


@dataclass(frozen=True)
class Verdict:
    mode: str
    thought: str
    prediction: int
    confidence: float
    explanation: str
    probabilities: Tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "thought": self.thought,
            "prediction": self.prediction,
            "confidence": self.confidence,
            "explanation": self.explanation,
            "probabilities": list(self.probabilities),
        }


def extract_json_object(text: str) -> dict:
    """First balanced top-level JSON object in `text`, string-aware."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        return json.loads(text[start : i + 1])
                    except json.JSONDecodeError:
                        break
        start = text.find("{", start + 1)
    raise ArbiterError("no JSON object found in reply")


def validate_verdict(payload: dict) -> Verdict:
    for key in ("mode", "thought", "prediction", "confidence", "explanation", "probabilities"):
        if key not in payload:
            raise ArbiterError(f"verdict missing key {key!r}")
    pred = payload["prediction"]
    if not isinstance(pred, int) or isinstance(pred, bool) or not 0 <= pred < NUM_CLASSES:
        raise ArbiterError(f"prediction must be an integer in 0..6, got {pred!r}")
    conf = payload["confidence"]
    if not isinstance(conf, (int, float)) or isinstance(conf, bool) or not 0.0 <= conf <= 1.0:
        raise ArbiterError(f"confidence must be in [0, 1], got {conf!r}")
    probs = payload["probabilities"]
    if (not isinstance(probs, list) or len(probs) != NUM_CLASSES
            or any(not isinstance(p, (int, float)) or isinstance(p, bool) for p in probs)):
        raise ArbiterError("probabilities must be a list of 7 numbers")
    if any(p < 0 for p in probs):
        raise ArbiterError("probabilities must be non-negative")
    if abs(sum(probs) - 1.0) > 1e-3:
        raise ArbiterError(f"probabilities sum to {sum(probs):.6f}, expected 1 within 1e-3")
    if not isinstance(payload["mode"], str) or not isinstance(payload["thought"], str) \
            or not isinstance(payload["explanation"], str):
        raise ArbiterError("mode, thought and explanation must be strings")
    return Verdict(
        mode=payload["mode"],
        thought=payload["thought"],
        prediction=pred,
        confidence=float(conf),
        explanation=payload["explanation"],
        probabilities=tuple(float(p) for p in probs),
    )


# --------------------------------------------------------------- rate limit


class TokenBucket:
    """Simple thread-safe token bucket; clock/sleep injectable for tests."""

    def __init__(
        self,
        rate_per_second: float,
        capacity: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.rate = rate_per_second
        self.capacity = capacity
        self.tokens = float(capacity)
        self.updated = clock()
        self.clock = clock
        self.sleep = sleep
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleep(wait)


# ----------------------------------------------------------------- clients


class Arbiter:
    """Interface: arbitrate(pair_id, prompt) -> Verdict, or raise ArbiterError."""

    def arbitrate(self, pair_id: str, prompt: str) -> Verdict:
        raise NotImplementedError


class HttpArbiter(Arbiter):
    """Chat-completion client with retries, rate limiting and a bounded pool.

    The credential is resolved from the environment variable named by the
    config at request time; it never appears in configs or logs.
    """

    def __init__(
        self,
        config: ArbiterConfig,
        post_fn: Optional[Callable[[str, dict, dict, float], Tuple[int, str]]] = None,
        bucket: Optional[TokenBucket] = None,
    ) -> None:
        self.config = config
        self._post = post_fn or self._requests_post
        self.bucket = bucket or TokenBucket(config.rate_per_second, config.bucket_capacity)
        self._sem = threading.Semaphore(config.concurrency)

    @staticmethod
    def _requests_post(url: str, headers: dict, payload: dict, timeout: float) -> Tuple[int, str]:
        import requests

        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
        return resp.status_code, resp.text

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise ArbiterError(
                f"credential environment variable {self.config.api_key_env} is not set"
            )
        return key

    def arbitrate(self, pair_id: str, prompt: str) -> Verdict:
        headers = {
            "Authorization": f"Bearer {self._api_key()}",
            "Content-Type": "application/json",
        }
        messages = [{"role": "user", "content": prompt}]
        last_error: Optional[Exception] = None
        with self._sem:
            for attempt in range(self.config.max_retries + 1):
                self.bucket.acquire()
                payload = {
                    "model": self.config.model,
                    "messages": messages,
                    "temperature": 0,
                }
                try:
                    status, text = self._post(
                        self.config.endpoint, headers, payload, self.config.timeout_s
                    )
                    if status != 200:
                        raise ArbiterError(f"endpoint returned HTTP {status}")
                    body = json.loads(text)
                    content = body["choices"][0]["message"]["content"]
                    return validate_verdict(extract_json_object(content))
                except (ArbiterError, KeyError, IndexError, TypeError, ValueError) as exc:
                    last_error = exc
                    if attempt < self.config.max_retries:
                        messages = messages + [{"role": "user", "content": REPAIR_INSTRUCTION}]
        raise ArbiterError(f"{pair_id}: arbitration failed after retries: {last_error}")


class MockArbiter(Arbiter):
    """File-backed arbiter for offline runs: {pair_id: verdict object}."""

    def __init__(self, path: Path) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        self.verdicts: Dict[str, Verdict] = {
            pid: validate_verdict(v) for pid, v in raw.items()
        }

    def arbitrate(self, pair_id: str, prompt: str) -> Verdict:
        if pair_id not in self.verdicts:
            raise ArbiterError(f"{pair_id}: no scripted verdict")
        return self.verdicts[pair_id]


# ---------------------------------------------------------------- decisions


@dataclass
class DecisionRecord:
    pair_id: str
    primary: int
    confidence: float
    triggered: bool
    final: int
    fallback_reason: Optional[str] = None
    latency_ms: float = 0.0
    verdict: Optional[Verdict] = None

    def to_json(self) -> dict:
        row = {
            "pair_id": self.pair_id,
            "primary": self.primary,
            "confidence": self.confidence,
            "triggered": self.triggered,
            "final": self.final,
            "fallback_reason": self.fallback_reason,
            "latency_ms": self.latency_ms,
        }
        if self.verdict is not None:
            row["verdict"] = self.verdict.to_json()
        return row


def decide(
    pair_id: str,
    dist: ProbabilityDistribution,
    config: ArbiterConfig,
    arbiter: Optional[Arbiter],
    prompt: Optional[str] = None,
    clock: Callable[[], float] = time.monotonic,
) -> DecisionRecord:
    """Run the gate and (maybe) the arbiter for one pair.

    The final label is the verdict's prediction when arbitration succeeds
    and the primary prediction in every other case.
    """
    primary = dist.predicted
    record = DecisionRecord(
        pair_id=pair_id,
        primary=primary,
        confidence=dist.confidence,
        triggered=False,
        final=primary,
    )
    if not should_trigger(dist, config):
        return record
    record.triggered = True
    if arbiter is None:
        record.fallback_reason = "no arbiter configured"
        return record
    start = clock()
    try:
        verdict = arbiter.arbitrate(pair_id, prompt or "")
        record.latency_ms = (clock() - start) * 1000.0
        record.verdict = verdict
        record.final = verdict.prediction
    except ArbiterError as exc:
        record.latency_ms = (clock() - start) * 1000.0
        record.fallback_reason = str(exc)
    return record


def arbitrate_batch(
    items: Sequence[Tuple[str, ProbabilityDistribution, str]],
    config: ArbiterConfig,
    arbiter: Optional[Arbiter],
    clock: Callable[[], float] = time.monotonic,
) -> List[DecisionRecord]:
    """Decide a batch of (pair_id, distribution, prompt), bounded concurrency.

    Output is sorted by pair_id so logs are stable regardless of worker
    interleaving. Pass a constant clock for replayable offline runs where
    latencies would otherwise make logs differ byte-for-byte.
    """
    workers = max(1, min(config.concurrency, 4))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(
            lambda it: decide(it[0], it[1], config, arbiter, it[2], clock), items
        ))
    return sorted(records, key=lambda r: r.pair_id)


def write_decision_log(path: Path, records: Iterable[DecisionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def read_decision_log(path: Path) -> List[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out
