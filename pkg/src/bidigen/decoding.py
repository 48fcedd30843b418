"""Iterative uncovering of an all-placeholder output segment.

Generation starts from ``[CLS] source [SEP] [P] ... [P]``.  Each strategy
picks which placeholder to uncover next; the uncovered token is always the
argmax of that slot's distribution, and the encoder is re-run after every
uncovering so the remaining slots see the new token.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import tensor as T
from .model import AttentionRecord, EncoderModel
from .tokenizer import SEP, Vocabulary, decode, encode_pair


class GenerationStrategy(str, enum.Enum):
    ONE_STEP_GREEDY = "one_step_greedy"
    HIGHEST_PROBABILITY = "highest_probability"
    LOWEST_ENTROPY = "lowest_entropy"
    LEFT_TO_RIGHT = "left_to_right"
    NO_LOOK_AHEAD = "no_look_ahead"


SEQUENTIAL = (GenerationStrategy.LEFT_TO_RIGHT, GenerationStrategy.NO_LOOK_AHEAD)


def entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


@dataclass
class TraceStep:
    index: int
    position: int
    token_id: int
    distribution: np.ndarray
    # attention of the uncovering position: (layers, heads, seq_len)
    attention_rows: np.ndarray
    key_mask: np.ndarray
    pass_index: int = 0
    attention: Optional[AttentionRecord] = None

    @property
    def entropy(self):
        return entropy(self.distribution)

    @property
    def max_prob(self):
        return float(self.distribution.max())


@dataclass
class GenerationTrace:
    source: str
    strategy: GenerationStrategy
    input_ids: Tuple[int, ...]
    input_len: int
    output_len: int
    steps: List[TraceStep] = field(default_factory=list)
    final_output_ids: Tuple[int, ...] = ()

    @property
    def seq_len(self):
        return len(self.input_ids)

    def slot(self, step: TraceStep) -> int:
        return step.position - self.input_len

    def final_ids(self) -> Tuple[int, ...]:
        return tuple(self.input_ids[:self.input_len]) + tuple(self.final_output_ids)


def _distribution(logits_row):
    z = logits_row.astype(np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _run(model, ids, key_mask):
    with T.no_grad():
        logits, attn = model.forward_batch(np.asarray(ids)[None, :], key_mask[None, :])
    return logits.data[0], AttentionRecord(attn[0])


def generate(model: EncoderModel, vocab: Vocabulary, source: str,
             strategy=GenerationStrategy.LEFT_TO_RIGHT, max_gen_len: int = 50,
             keep_attention: bool = True):
    """Generate a response to ``source``.

    Returns ``(text, trace)``.  The text is the output segment cut before
    its first [SEP].  ``keep_attention=False`` drops the full per-step
    attention tensors from the trace (the uncovering rows are kept).
    """
    strategy = GenerationStrategy(strategy)
    inp = encode_pair(vocab, source, max_gen_len, model.config.max_seq_len)
    ids = np.array(inp.ids, dtype=np.int64)
    out_start, out_end = inp.input_len, inp.input_len + inp.output_len
    trace = GenerationTrace(source=source, strategy=strategy, input_ids=inp.ids,
                            input_len=inp.input_len, output_len=inp.output_len)
    remaining = list(range(out_start, out_end))
    full_mask = np.ones(len(ids), dtype=bool)

    def record(pos, dist, attn, mask, pass_index):
        tok = int(np.argmax(dist))
        trace.steps.append(TraceStep(
            index=len(trace.steps), position=pos, token_id=tok, distribution=dist,
            attention_rows=attn.weights[:, :, pos, :].copy(), key_mask=mask.copy(),
            pass_index=pass_index, attention=attn if keep_attention else None))
        return tok

    if strategy is GenerationStrategy.ONE_STEP_GREEDY:
        logits, attn = _run(model, ids, full_mask)
        chosen = {}
        for pos in remaining:
            chosen[pos] = record(pos, _distribution(logits[pos]), attn, full_mask, 0)
        for pos, tok in chosen.items():
            ids[pos] = tok
    else:
        n_pass = 0
        while remaining:
            mask = full_mask
            if strategy is GenerationStrategy.NO_LOOK_AHEAD:
                mask = full_mask.copy()
                mask[remaining[0] + 1:out_end] = False
            logits, attn = _run(model, ids, mask)
            if strategy in SEQUENTIAL:
                pos = remaining[0]
                dist = _distribution(logits[pos])
            else:
                dists = [_distribution(logits[p]) for p in remaining]
                if strategy is GenerationStrategy.HIGHEST_PROBABILITY:
                    k = int(np.argmax([d.max() for d in dists]))
                else:
                    k = int(np.argmin([entropy(d) for d in dists]))
                pos, dist = remaining[k], dists[k]
            tok = record(pos, dist, attn, mask, n_pass)
            ids[pos] = tok
            remaining.remove(pos)
            n_pass += 1
            if termination(strategy, trace):
                break

    trace.final_output_ids = tuple(int(i) for i in ids[out_start:out_end])
    return decode(vocab, trace.final_output_ids), trace


def termination(strategy, trace: GenerationTrace) -> bool:
    """Whether generation under ``strategy`` is finished after ``trace.steps``."""
    strategy = GenerationStrategy(strategy)
    if len(trace.steps) >= trace.output_len:
        return True
    if strategy is GenerationStrategy.ONE_STEP_GREEDY:
        return bool(trace.steps)
    if strategy in SEQUENTIAL:
        return bool(trace.steps) and trace.steps[-1].token_id == SEP
    return False


# ----------------------------------------------------------------------------
# trace files
# ----------------------------------------------------------------------------

def save_trace(trace: GenerationTrace, path, vocab: Optional[Vocabulary] = None):
    """Write a trace as JSON lines: one header record, then one record per step.

    Each step record carries the uncovering position's attention row for
    every layer and head, so the file alone supports attention analysis.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({
            "record": "header",
            "source": trace.source,
            "strategy": trace.strategy.value,
            "input_ids": list(trace.input_ids),
            "input_len": trace.input_len,
            "output_len": trace.output_len,
            "final_output_ids": list(trace.final_output_ids),
        }) + "\n")
        for s in trace.steps:
            rec = {
                "record": "step",
                "step": s.index,
                "position": s.position,
                "token_id": s.token_id,
                "token": vocab.token_of(s.token_id) if vocab is not None else None,
                "entropy": s.entropy,
                "max_prob": s.max_prob,
                "pass": s.pass_index,
                "key_mask": [bool(b) for b in s.key_mask],
                "distribution": s.distribution.tolist(),
                "attention": s.attention_rows.tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def load_trace(path) -> GenerationTrace:
    """Read a trace written by :func:`save_trace` (without full attention tensors)."""
    with open(path, encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    head = records[0]
    trace = GenerationTrace(source=head["source"], strategy=GenerationStrategy(head["strategy"]),
                            input_ids=tuple(head["input_ids"]), input_len=head["input_len"],
                            output_len=head["output_len"],
                            final_output_ids=tuple(head["final_output_ids"]))
    for rec in records[1:]:
        rows = np.asarray(rec["attention"], dtype=np.float64)
        dist = np.asarray(rec["distribution"], dtype=np.float64)
        trace.steps.append(TraceStep(index=rec["step"], position=rec["position"],
                                     token_id=rec["token_id"], distribution=dist,
                                     attention_rows=rows,
                                     key_mask=np.asarray(rec["key_mask"], dtype=bool),
                                     pass_index=rec["pass"]))
    return trace
