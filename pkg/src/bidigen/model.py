"""Post-norm transformer encoder with a language-model classification head."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

from . import tensor as T
from .errors import LengthError, ShapeError, VocabularyError
from .tensor import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    max_seq_len: int = 128
    num_layers: int = 2
    num_heads: int = 4
    hidden_dim: int = 128
    ffn_dim: int = 256
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.hidden_dim % self.num_heads:
            raise ValueError("hidden_dim must be divisible by num_heads")
        if self.max_seq_len < 2:
            raise ValueError("max_seq_len must be at least 2")
        if self.vocab_size < 5:
            raise ValueError("vocab_size must be at least 5")
        if min(self.num_layers, self.num_heads, self.ffn_dim) < 1:
            raise ValueError("num_layers, num_heads and ffn_dim must be positive")
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise ValueError("dropout_rate must lie in [0, 1]")

    @property
    def head_dim(self):
        return self.hidden_dim // self.num_heads

    def to_dict(self):
        return asdict(self)


@dataclass
class AttentionRecord:
    """Attention probabilities of one sequence.

    ``weights[l, h, q, k]`` is the attention that query ``q`` pays to key
    ``k`` in head ``h`` of layer ``l``.
    """

    weights: np.ndarray

    @property
    def num_layers(self):
        return self.weights.shape[0]

    @property
    def num_heads(self):
        return self.weights.shape[1]

    def layer(self, index=-1):
        return self.weights[index]


def _is_no_decay(name):
    return name.endswith(".bias") or name.endswith(".gamma") or name.endswith(".beta")


class EncoderModel:
    """Learnable parameters plus the forward computation.

    Weights are drawn from N(0, 0.02); biases and layer-norm shifts start at
    zero and layer-norm scales at one.
    """

    def __init__(self, config: EncoderConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        c = config
        D, F, V = c.hidden_dim, c.ffn_dim, c.vocab_size
        shapes = {
            "tok_emb": (V, D),
            "pos_emb": (c.max_seq_len, D),
            "emb_ln.gamma": (D,),
            "emb_ln.beta": (D,),
        }
        for i in range(c.num_layers):
            p = f"layers.{i}."
            shapes.update({
                p + "attn.qkv.weight": (D, 3 * D),
                p + "attn.qkv.bias": (3 * D,),
                p + "attn.out.weight": (D, D),
                p + "attn.out.bias": (D,),
                p + "attn_ln.gamma": (D,),
                p + "attn_ln.beta": (D,),
                p + "ffn.in.weight": (D, F),
                p + "ffn.in.bias": (F,),
                p + "ffn.out.weight": (F, D),
                p + "ffn.out.bias": (D,),
                p + "ffn_ln.gamma": (D,),
                p + "ffn_ln.beta": (D,),
            })
        shapes["head.weight"] = (D, V)
        shapes["head.bias"] = (V,)

        self.params: Dict[str, Tensor] = {}
        for name, shape in shapes.items():
            if name.endswith(".gamma"):
                data = np.ones(shape)
            elif _is_no_decay(name):
                data = np.zeros(shape)
            else:
                data = rng.normal(0.0, 0.02, size=shape)
            self.params[name] = Tensor(data.astype(self.dtype), requires_grad=True, name=name)

    # ------------------------------------------------------------------
    def named_parameters(self):
        return list(self.params.items())

    def num_parameters(self):
        return sum(p.data.size for p in self.params.values())

    def decays(self, name):
        return not _is_no_decay(name)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        missing = set(self.params) ^ set(state)
        if missing:
            raise ShapeError(f"parameter names differ: {sorted(missing)}")
        for k, arr in state.items():
            arr = np.asarray(arr)
            if arr.shape != self.params[k].shape:
                raise ShapeError(f"{k}: expected {self.params[k].shape}, got {arr.shape}")
            self.params[k].data = arr.astype(self.dtype).copy()

    def copy(self):
        clone = EncoderModel.__new__(EncoderModel)
        clone.config = self.config
        clone.dtype = self.dtype
        clone.params = {k: Tensor(v.data.copy(), requires_grad=True, name=k)
                        for k, v in self.params.items()}
        return clone

    # ------------------------------------------------------------------
    def check_inputs(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.shape[-1] > self.config.max_seq_len:
            raise LengthError(
                f"sequence length {ids.shape[-1]} exceeds max_seq_len {self.config.max_seq_len}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            raise VocabularyError(f"token id outside [0, {self.config.vocab_size})")
        return ids

    def forward_batch(self, ids, key_mask, rng: Optional[np.random.Generator] = None):
        """Run the encoder over a ``(B, L)`` batch.

        Returns logits as a ``(B, L, V)`` Tensor and the attention
        probabilities as an array of shape ``(B, layers, heads, L, L)``.
        Dropout is active only when ``rng`` is given.
        """
        ids = self.check_inputs(ids)
        key_mask = np.asarray(key_mask, dtype=bool)
        if key_mask.shape != ids.shape:
            raise ShapeError("key_mask and token ids differ in shape")
        c, P = self.config, self.params
        B, L = ids.shape
        H, dh, D = c.num_heads, c.head_dim, c.hidden_dim
        rate = c.dropout_rate if rng is not None else 0.0
        scale = 1.0 / math.sqrt(dh)
        att_mask = key_mask[:, None, None, :]
        attn_maps = []

        x = T.take_rows(P["tok_emb"], ids) + T.take_rows(P["pos_emb"], np.arange(L))
        x = T.layer_norm(x, P["emb_ln.gamma"], P["emb_ln.beta"])
        x = T.dropout(x, rate, rng)
        for i in range(c.num_layers):
            p = f"layers.{i}."
            qkv = x @ P[p + "attn.qkv.weight"] + P[p + "attn.qkv.bias"]
            qkv = qkv.reshape(B, L, 3, H, dh).transpose(2, 0, 3, 1, 4)
            q, k, v = _split3(qkv)
            scores = (q @ k.transpose(0, 1, 3, 2)) * scale
            probs = T.softmax(scores, axis=-1, mask=att_mask)
            attn_maps.append(probs.data)
            ctx = T.dropout(probs, rate, rng) @ v
            ctx = ctx.transpose(0, 2, 1, 3).reshape(B, L, D)
            h = ctx @ P[p + "attn.out.weight"] + P[p + "attn.out.bias"]
            x = T.layer_norm(x + T.dropout(h, rate, rng), P[p + "attn_ln.gamma"], P[p + "attn_ln.beta"])
            f = T.gelu(x @ P[p + "ffn.in.weight"] + P[p + "ffn.in.bias"])
            f = f @ P[p + "ffn.out.weight"] + P[p + "ffn.out.bias"]
            x = T.layer_norm(x + T.dropout(f, rate, rng), P[p + "ffn_ln.gamma"], P[p + "ffn_ln.beta"])
        logits = x @ P["head.weight"] + P["head.bias"]
        return logits, np.stack(attn_maps, axis=1)


def _split3(qkv):
    """Split the leading axis of size 3 into three Tensors."""
    out = []
    for j in range(3):
        def backward(g, j=j):
            full = np.zeros_like(qkv.data)
            full[j] = g
            return (full,)
        out.append(T._make(qkv.data[j], (qkv,), backward))
    return out


def forward(model: EncoderModel, token_ids, key_mask=None):
    """Single-sequence forward pass with dropout disabled.

    Returns ``(logits, attention)`` where ``logits`` is a ``(L, V)`` Tensor.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError("forward expects a 1-D id sequence")
    mask = np.ones(len(ids), dtype=bool) if key_mask is None else np.asarray(key_mask, dtype=bool)
    if mask.shape != ids.shape:
        raise ShapeError("key_mask and token ids differ in length")
    logits, attn = model.forward_batch(ids[None, :], mask[None, :])
    return T.reshape(logits, logits.shape[1:]), AttentionRecord(attn[0])


def cross_entropy(logits_row, target_id: int) -> float:
    """``-log softmax(logits_row)[target_id]`` for one position."""
    row = logits_row.data if isinstance(logits_row, Tensor) else np.asarray(logits_row, dtype=float)
    if not 0 <= target_id < row.shape[-1]:
        raise VocabularyError(f"target id {target_id} outside [0, {row.shape[-1]})")
    return float(-T.log_softmax_np(row.astype(np.float64))[target_id])
