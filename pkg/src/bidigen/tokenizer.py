"""Whitespace tokenizer, vocabulary and model-input construction.

The model input for a (source, response) pair is::

    [CLS] source tokens [SEP] slot_1 ... slot_n

where every output slot starts out as the placeholder token ``[P]``.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, LengthError, VocabularyError

PAD, CLS, SEP, PLACEHOLDER, UNK = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("[PAD]", "[CLS]", "[SEP]", "[P]", "[UNK]")
NUM_SPECIAL = len(SPECIAL_TOKENS)


def tokenize(text: str) -> list[str]:
    return text.lower().split()


class Vocabulary:
    """Bijection between token strings and integer ids.

    The first five ids are reserved for ``[PAD] [CLS] [SEP] [P] [UNK]``.
    Instances are immutable once built.
    """

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:NUM_SPECIAL]) != SPECIAL_TOKENS:
            raise VocabularyError(f"vocabulary must start with {SPECIAL_TOKENS}")
        if len(set(tokens)) != len(tokens):
            raise VocabularyError("duplicate tokens in vocabulary")
        self._itos = tuple(tokens)
        self._stoi = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self._itos)

    def __contains__(self, token):
        return token in self._stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def __repr__(self):
        return f"Vocabulary(size={len(self)})"

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._itos

    def id_of(self, token: str) -> int:
        return self._stoi.get(token, UNK)

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self._itos):
            raise VocabularyError(f"id {idx} outside vocabulary of size {len(self)}")
        return self._itos[idx]

    def encode(self, text: str) -> list[int]:
        return [self.id_of(t) for t in tokenize(text)]

    def save(self, path):
        Path(path).write_text("\n".join(self._itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def build_vocab(corpus: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Assign ids to every whitespace token seen at least ``min_count`` times.

    Ids after the reserved block are ordered by descending count, ties by the
    token string, so the result does not depend on corpus order.
    """
    counts = Counter()
    lines = 0
    for text in corpus:
        lines += 1
        counts.update(tokenize(text))
    if lines == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    kept = [t for t, c in counts.items() if c >= min_count and t not in SPECIAL_TOKENS]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(list(SPECIAL_TOKENS) + kept)


@dataclass(frozen=True)
class ModelInput:
    ids: tuple[int, ...]
    input_len: int
    output_len: int

    @property
    def key_mask(self) -> np.ndarray:
        return np.asarray(self.ids) != PAD

    @property
    def output_slice(self) -> slice:
        return slice(self.input_len, self.input_len + self.output_len)

    def __len__(self):
        return len(self.ids)


def encode_pair(vocab: Vocabulary, source: str, target_slots: int, max_seq_len: int = 512) -> ModelInput:
    """Build ``[CLS] source [SEP] [P]*target_slots``, left-truncating the source."""
    if target_slots < 1:
        raise LengthError("target_slots must be at least 1")
    # CLS, SEP and one spare position are reserved
    budget = max_seq_len - target_slots - 3
    if budget < 0:
        raise LengthError(
            f"{target_slots} output slots do not fit max_seq_len={max_seq_len}")
    src = vocab.encode(source)
    if len(src) > budget:
        src = src[len(src) - budget:]
    ids = (CLS, *src, SEP) + (PLACEHOLDER,) * target_slots
    return ModelInput(ids=ids, input_len=len(src) + 2, output_len=target_slots)


def decode(vocab: Vocabulary, ids: Iterable[int]) -> str:
    """Join the tokens of an output segment, stopping before the first [SEP]."""
    out = []
    for i in ids:
        i = int(i)
        if i == SEP:
            break
        out.append(vocab.token_of(i))
    return " ".join(out)
