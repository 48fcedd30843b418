"""Corpus BLEU and the Yes/No/Irrelevant/More response classification."""
from __future__ import annotations

import enum
import json
import math
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from .errors import DataError, UsageError


def ngrams(tokens: Sequence[str], n: int):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]], n: int = 4) -> float:
    """Corpus-level BLEU-n as a percentage, without smoothing.

    Clipped k-gram matches and candidate k-gram totals are pooled over the
    corpus for k = 1..n; the score is the geometric mean of the pooled
    precisions times the brevity penalty ``exp(1 - r/c)`` (1 when c > r),
    with c and r the summed candidate and reference lengths.  Any zero
    precision gives 0.
    """
    if len(candidates) != len(references):
        raise DataError("candidates and references differ in length")
    if not candidates:
        raise DataError("BLEU of an empty corpus is undefined")
    if not 1 <= n <= 4:
        raise UsageError("n must be between 1 and 4")
    matches = [0] * n
    totals = [0] * n
    c_len = r_len = 0
    for cand, ref in zip(candidates, references):
        cand, ref = list(cand), list(ref)
        c_len += len(cand)
        r_len += len(ref)
        for k in range(1, n + 1):
            cc, rc = ngrams(cand, k), ngrams(ref, k)
            matches[k - 1] += sum(min(cnt, rc[g]) for g, cnt in cc.items())
            totals[k - 1] += max(len(cand) - k + 1, 0)
    if min(matches) == 0:
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / n
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    return 100.0 * bp * math.exp(log_p)


class ResponseClass(str, enum.Enum):
    YES = "YES"
    NO = "NO"
    IRRELEVANT = "IRRELEVANT"
    MORE = "MORE"


_STRIP = str.maketrans("", "", string.punctuation)


def classify_response(text: str) -> ResponseClass:
    """Final answers are exactly yes/no/irrelevant; anything else asks for more."""
    norm = " ".join(text.lower().translate(_STRIP).split())
    if norm in ("yes", "no", "irrelevant"):
        return ResponseClass(norm.upper())
    return ResponseClass.MORE


def accuracies(pred: Sequence, gold: Sequence):
    """Micro accuracy and macro accuracy (mean per-class recall), in percent."""
    if len(pred) != len(gold):
        raise DataError("prediction and gold lists differ in length")
    if not gold:
        raise DataError("no examples to score")
    pred = [ResponseClass(p) for p in pred]
    gold = [ResponseClass(g) for g in gold]
    micro = 100.0 * sum(p == g for p, g in zip(pred, gold)) / len(gold)
    recalls = []
    for cls in ResponseClass:
        idx = [i for i, g in enumerate(gold) if g is cls]
        if idx:
            recalls.append(sum(pred[i] is cls for i in idx) / len(idx))
    return micro, 100.0 * sum(recalls) / len(recalls)


@dataclass
class EvalReport:
    bleu: Dict[int, Optional[float]] = field(default_factory=lambda: {k: None for k in range(1, 5)})
    micro_acc: Optional[float] = None
    macro_acc: Optional[float] = None
    class_counts: Dict[str, int] = field(default_factory=dict)
    bleu_pool_size: int = 0
    exact_match: Optional[float] = None
    num_examples: int = 0

    @property
    def bleu4(self):
        return self.bleu[4]

    def to_dict(self):
        return {
            "num_examples": self.num_examples,
            **{f"bleu_{k}": v for k, v in self.bleu.items()},
            "bleu_pool_size": self.bleu_pool_size,
            "micro_acc": self.micro_acc,
            "macro_acc": self.macro_acc,
            "class_counts": self.class_counts,
            "exact_match": self.exact_match,
        }

    def to_text(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    CSV_COLUMNS = ("bleu_1", "bleu_2", "bleu_3", "bleu_4", "micro_acc", "macro_acc", "exact_match")

    def csv_row(self):
        d = self.to_dict()
        return ",".join("" if d[c] is None else f"{d[c]:.4f}" for c in self.CSV_COLUMNS)


def score(predictions: Sequence[str], examples) -> EvalReport:
    """Build an :class:`EvalReport` from generated texts.

    Examples with a gold class are classified; their BLEU pool holds the
    pairs where both gold and prediction are clarification questions.
    Examples without a gold class are free-form and always enter the pool.
    """
    if not examples:
        raise DataError("empty evaluation set")
    report = EvalReport(num_examples=len(examples))
    pred_cls, gold_cls, cands, refs = [], [], [], []
    for text, ex in zip(predictions, examples):
        pc = classify_response(text)
        if ex.gold_class is None:
            cands.append(text.split())
            refs.append(ex.target.lower().split())
            continue
        gc = ResponseClass(ex.gold_class)
        pred_cls.append(pc)
        gold_cls.append(gc)
        if gc is ResponseClass.MORE and pc is ResponseClass.MORE:
            cands.append(text.split())
            refs.append(ex.target.lower().split())
    if gold_cls:
        report.micro_acc, report.macro_acc = accuracies(pred_cls, gold_cls)
        report.class_counts = {c.value: sum(g is c for g in gold_cls) for c in ResponseClass}
    if cands:
        report.bleu = {k: bleu(cands, refs, k) for k in range(1, 5)}
    report.bleu_pool_size = len(cands)
    hits = sum(" ".join(t.split()) == " ".join(ex.target.lower().split())
               for t, ex in zip(predictions, examples))
    report.exact_match = 100.0 * hits / len(examples)
    return report


def evaluate(model, vocab, dev_set, strategy="left_to_right", max_gen_len: int = 50):
    """Generate for every example and score the results."""
    from .decoding import generate

    if not dev_set:
        raise DataError("empty evaluation set")
    preds = [generate(model, vocab, ex.source, strategy, max_gen_len, keep_attention=False)[0]
             for ex in dev_set]
    return score(preds, dev_set)
