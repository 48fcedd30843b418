"""Minibatches, the placeholder training objective, Adam with warmup, the loop."""
from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import tensor as T
from .checkpoint import save_checkpoint
from .errors import CheckpointError, DataError
from .model import EncoderModel
from .placeholder import PlaceholderPolicy, apply_mask, sample_mask
from .tokenizer import PAD, PLACEHOLDER, SEP, Vocabulary, encode_pair

log = logging.getLogger(__name__)


class LossScope(str, enum.Enum):
    ALL_OUTPUT = "all_output"
    PLACEHOLDER_ONLY = "placeholder_only"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 15
    epochs: int = 20
    peak_lr: float = 1e-4
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss_scope: LossScope = LossScope.ALL_OUTPUT
    max_gen_len: int = 50
    seed: int = 0
    max_steps: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "loss_scope", LossScope(self.loss_scope))
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0 or self.max_gen_len < 1:
            raise ValueError("epochs must be >= 0 and max_gen_len >= 1")

    def to_dict(self):
        d = asdict(self)
        d["loss_scope"] = self.loss_scope.value
        return d


@dataclass
class Batch:
    """PAD-aligned model inputs with gold labels.

    ``labels`` holds the gold id at every supervised output position and -1
    elsewhere; ``replaced`` marks output positions shown as placeholders.
    """

    ids: np.ndarray
    labels: np.ndarray
    replaced: np.ndarray
    input_lens: np.ndarray

    @property
    def key_mask(self):
        return self.ids != PAD

    def __len__(self):
        return self.ids.shape[0]


def target_ids(vocab: Vocabulary, text: str, max_gen_len: int) -> List[int]:
    """Gold output ids: the response followed by the closing [SEP]."""
    return (vocab.encode(text) + [SEP])[:max_gen_len]


def make_batch(vocab: Vocabulary, examples, policy: PlaceholderPolicy, rng: np.random.Generator,
               max_gen_len: int, max_seq_len: int, masks: Optional[Sequence[np.ndarray]] = None) -> Batch:
    """Encode examples with freshly sampled replacement masks.

    Output slots past the closing [SEP] stay placeholders and carry no
    label, so every training input has ``max_gen_len`` output slots, as at
    inference.
    """
    if not examples:
        raise DataError("empty batch")
    rows, labels, replaced, input_lens = [], [], [], []
    for i, ex in enumerate(examples):
        inp = encode_pair(vocab, ex.source, max_gen_len, max_seq_len)
        y = np.asarray(target_ids(vocab, ex.target, max_gen_len))
        mask = sample_mask(policy, len(y), rng) if masks is None else np.asarray(masks[i], bool)
        out = np.full(max_gen_len, PLACEHOLDER)
        out[:len(y)] = apply_mask(y, mask)
        ids = np.concatenate([np.asarray(inp.ids[:inp.input_len]), out])
        lab = np.full(len(ids), -1)
        lab[inp.input_len:inp.input_len + len(y)] = y
        rep = np.zeros(len(ids), dtype=bool)
        rep[inp.input_len:inp.input_len + len(y)] = mask
        rows.append(ids)
        labels.append(lab)
        replaced.append(rep)
        input_lens.append(inp.input_len)
    width = max(len(r) for r in rows)

    def pad(arrs, value, dtype):
        out = np.full((len(arrs), width), value, dtype=dtype)
        for j, a in enumerate(arrs):
            out[j, :len(a)] = a
        return out

    return Batch(ids=pad(rows, PAD, np.int64), labels=pad(labels, -1, np.int64),
                 replaced=pad(replaced, False, bool), input_lens=np.asarray(input_lens))


def loss_weights(batch: Batch, loss_scope) -> np.ndarray:
    w = batch.labels >= 0
    if LossScope(loss_scope) is LossScope.PLACEHOLDER_ONLY:
        w = w & batch.replaced
    return w


def batch_loss(model: EncoderModel, batch: Batch, loss_scope=LossScope.ALL_OUTPUT,
               rng: Optional[np.random.Generator] = None):
    """Sum of per-position cross entropy over each example, averaged over the batch."""
    logits, _ = model.forward_batch(batch.ids, batch.key_mask, rng=rng)
    w = loss_weights(batch, loss_scope)
    ce = T.cross_entropy(logits, np.maximum(batch.labels, 0), w)
    return ce * (1.0 / len(batch))


def teacher_forced_accuracy(model: EncoderModel, batch: Batch) -> float:
    """Argmax accuracy at placeholder positions with gold tokens everywhere else."""
    with T.no_grad():
        logits, _ = model.forward_batch(batch.ids, batch.key_mask)
    w = loss_weights(batch, LossScope.PLACEHOLDER_ONLY)
    pred = logits.data.argmax(-1)
    return float((pred[w] == batch.labels[w]).mean()) if w.any() else float("nan")


# ----------------------------------------------------------------------------
# optimizer
# ----------------------------------------------------------------------------

def warmup_steps(total_steps: int, warmup_fraction: float) -> int:
    return max(1, math.ceil(warmup_fraction * total_steps))


def learning_rate(step: int, total_steps: int, peak_lr: float, warmup_fraction: float) -> float:
    """Linear warmup from 0 to ``peak_lr``, then constant."""
    w = warmup_steps(total_steps, warmup_fraction)
    if step <= w:
        return peak_lr * step / w
    return peak_lr


class Adam:
    """Adam with decoupled weight decay.

    Biases and layer-norm parameters are not decayed.  Gradients are cleared
    after every step.
    """

    def __init__(self, model: EncoderModel, config: TrainConfig):
        self.model = model
        self.config = config
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in model.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in model.params.items()}

    def step(self, step_index: int, total_steps: int) -> float:
        c = self.config
        lr = learning_rate(step_index, total_steps, c.peak_lr, c.warmup_fraction)
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for name, p in self.model.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m, v = self.m[name], self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            if lr == 0.0:
                continue
            update = (m / bc1) / (np.sqrt(v / bc2) + c.eps)
            if c.weight_decay and self.model.decays(name):
                update = update + c.weight_decay * p.data
            p.data -= (lr * update).astype(p.data.dtype, copy=False)
        self.model.zero_grad()
        return lr


def adam_step(optimizer: Adam, step_index: int, total_steps: int) -> float:
    return optimizer.step(step_index, total_steps)


# ----------------------------------------------------------------------------
# loop
# ----------------------------------------------------------------------------

METRIC_COLUMNS = ("epoch", "step", "train_loss", "dev_bleu4", "dev_micro_acc")


@dataclass
class TrainResult:
    model: EncoderModel
    metrics: List[dict] = field(default_factory=list)
    best_checkpoint: Optional[Path] = None
    steps: int = 0


def _fmt(x):
    return "" if x is None else f"{x:.6f}"


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([r["epoch"], r["step"], _fmt(r["train_loss"]), _fmt(r["dev_bleu4"]),
                    _fmt(r["dev_micro_acc"])])
    return buf.getvalue()


def total_training_steps(n_examples: int, config: TrainConfig) -> int:
    total = config.epochs * math.ceil(n_examples / config.batch_size)
    if config.max_steps is not None:
        total = min(total, config.max_steps)
    return total


def train(model: EncoderModel, dataset, vocab: Vocabulary, policy: PlaceholderPolicy,
          config: TrainConfig, checkpoint_dir=None, dev_set=None,
          dev_strategy="left_to_right") -> TrainResult:
    """Train ``model`` in place.

    Masks are resampled every epoch from the policy's own seeded stream.
    With ``checkpoint_dir`` set, each epoch writes ``epoch_NNN.ckpt``,
    ``metrics.csv`` is rewritten after every epoch, and ``best.ckpt`` tracks
    the highest dev BLEU-4 (the latest epoch when no dev score exists).
    """
    from .evaluation import evaluate

    if not dataset:
        raise DataError("training set is empty")
    ckpt_dir = None
    if checkpoint_dir is not None:
        ckpt_dir = Path(checkpoint_dir)
        try:
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            (ckpt_dir / "metrics.csv").write_text(metrics_csv([]))
        except OSError as exc:
            raise CheckpointError(f"cannot write to {ckpt_dir}: {exc}") from exc

    result = TrainResult(model=model)
    total = total_training_steps(len(dataset), config)
    if total == 0:
        return result
    order_rng = np.random.default_rng(config.seed)
    dropout_rng = np.random.default_rng(config.seed + 1)
    mask_rng = policy.generator()
    opt = Adam(model, config)
    step = 0
    best_score = None
    max_seq_len = model.config.max_seq_len

    for epoch in range(1, config.epochs + 1):
        perm = order_rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(dataset), config.batch_size):
            if step >= total:
                break
            batch = make_batch(vocab, [dataset[i] for i in perm[start:start + config.batch_size]],
                               policy, mask_rng, config.max_gen_len, max_seq_len)
            loss = batch_loss(model, batch, config.loss_scope, rng=dropout_rng)
            loss.backward()
            step += 1
            opt.step(step, total)
            losses.append(loss.item())
        row = {"epoch": epoch, "step": step, "train_loss": float(np.mean(losses)),
               "dev_bleu4": None, "dev_micro_acc": None}
        if dev_set:
            report = evaluate(model, vocab, dev_set, dev_strategy, config.max_gen_len)
            row["dev_bleu4"] = report.bleu4
            row["dev_micro_acc"] = report.micro_acc
        result.metrics.append(row)
        log.info("epoch %d step %d loss %.4f dev_bleu4 %s", epoch, step, row["train_loss"],
                 _fmt(row["dev_bleu4"]))
        if ckpt_dir is not None:
            meta = {"epoch": epoch, "step": step, "max_gen_len": config.max_gen_len}
            save_checkpoint(ckpt_dir / f"epoch_{epoch:03d}.ckpt", model, vocab, meta)
            score = row["dev_bleu4"] if row["dev_bleu4"] is not None else -math.inf
            if best_score is None or score > best_score or score == -math.inf:
                best_score = score
                result.best_checkpoint = save_checkpoint(ckpt_dir / "best.ckpt", model, vocab, meta)
            (ckpt_dir / "metrics.csv").write_text(metrics_csv(result.metrics))
        if step >= total:
            break
    result.steps = step
    return result
