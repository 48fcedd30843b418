"""Conversation-pair datasets: JSONL ingestion and synthetic toy tasks."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np

from .errors import ParseError

CLASSES = ("YES", "NO", "IRRELEVANT", "MORE")


@dataclass(frozen=True)
class Example:
    source: str
    target: str
    gold_class: Optional[str] = None

    def to_dict(self):
        d = {"source": self.source, "target": self.target}
        if self.gold_class is not None:
            d["gold_class"] = self.gold_class
        return d


def load_jsonl(path) -> List[Example]:
    """Read one ``{"source", "target"[, "gold_class"]}`` record per line."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(rec, dict):
                raise ParseError("record is not an object", lineno)
            for key in ("source", "target"):
                if key not in rec:
                    raise ParseError(f"missing field '{key}'", lineno)
                if not isinstance(rec[key], str):
                    raise ParseError(f"field '{key}' is not a string", lineno)
            gold = rec.get("gold_class")
            if gold is not None:
                gold = str(gold).upper()
                if gold not in CLASSES:
                    raise ParseError(f"unknown gold_class '{rec['gold_class']}'", lineno)
            examples.append(Example(rec["source"], rec["target"], gold))
    return examples


def save_jsonl(examples: Iterable[Example], path):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")


def _digit_sequences(n, max_len, vocab_digits, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        length = int(rng.integers(1, max_len + 1))
        yield [str(d) for d in rng.integers(0, vocab_digits, size=length)]


def gen_copy(n: int, max_len: int = 8, vocab_digits: int = 10, seed: int = 0) -> List[Example]:
    """Random digit strings of length 1..max_len whose target equals the source."""
    return [Example(" ".join(s), " ".join(s)) for s in _digit_sequences(n, max_len, vocab_digits, seed)]


def gen_reverse(n: int, max_len: int = 8, vocab_digits: int = 10, seed: int = 0) -> List[Example]:
    return [Example(" ".join(s), " ".join(reversed(s)))
            for s in _digit_sequences(n, max_len, vocab_digits, seed)]


XOR_TEMPLATES = ("a b", "b a")


def gen_xor_template(n: int, seed: int = 0) -> List[Example]:
    """Constant source "choose"; the target is "a b" or "b a" with equal odds.

    Each output position on its own is a fair coin, so only a decoder that
    conditions later choices on earlier ones produces a valid template
    reliably.
    """
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, 2, size=n)
    return [Example("choose", XOR_TEMPLATES[int(k)]) for k in picks]


TASKS = {
    "copy": gen_copy,
    "reverse": gen_reverse,
    "xor": gen_xor_template,
}
