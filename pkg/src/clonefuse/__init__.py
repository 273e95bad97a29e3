"""clonefuse: seven-class code clone classification.

Lexical, syntactic, and semantic evidence are fused by a small attention
head; low-confidence calls can be escalated to an LLM arbiter.
"""

__version__ = "0.1.0"

LABEL_NAMES = (
    "non_clone",
    "t1",
    "t2",
    "vst3",
    "st3",
    "mt3",
    "wt3_t4",
)

NUM_CLASSES = len(LABEL_NAMES)
