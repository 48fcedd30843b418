"""Independent oracles shared by the tests."""
import math

import numpy as np

from bidigen.model import EncoderConfig, EncoderModel


def tiny_model(seed=0, dtype=np.float64, vocab_size=12, max_seq_len=5, hidden=8, heads=2,
               layers=1, ffn=16, scale=None):
    cfg = EncoderConfig(vocab_size=vocab_size, max_seq_len=max_seq_len, num_layers=layers,
                        num_heads=heads, hidden_dim=hidden, ffn_dim=ffn, dropout_rate=0.0)
    m = EncoderModel(cfg, seed=seed, dtype=dtype)
    if scale is not None:
        rng = np.random.default_rng(seed + 1000)
        for p in m.params.values():
            p.data = p.data + rng.normal(0.0, scale, p.shape).astype(dtype)
    return m


def finite_difference_grads(loss_fn, params, eps=1e-3):
    """Central differences of a scalar ``loss_fn()`` w.r.t. every entry of ``params``."""
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p.data)
        flat, gflat = p.data.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn()
            flat[i] = orig - eps
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps)
        grads[name] = g
    return grads


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``; the floor absorbs exact zeros."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def brute_force_bleu(candidates, references, n):
    """Corpus BLEU-n by explicit enumeration of every k-gram window."""
    num = [0] * n
    den = [0] * n
    c_len = sum(len(c) for c in candidates)
    r_len = sum(len(r) for r in references)
    for cand, ref in zip(candidates, references):
        for k in range(1, n + 1):
            cand_grams = [tuple(cand[i:i + k]) for i in range(len(cand) - k + 1)]
            ref_grams = [tuple(ref[i:i + k]) for i in range(len(ref) - k + 1)]
            den[k - 1] += len(cand_grams)
            for g in set(cand_grams):
                c = sum(1 for x in cand_grams if x == g)
                r = sum(1 for x in ref_grams if x == g)
                num[k - 1] += min(c, r)
    if any(x == 0 for x in num):
        return 0.0
    geo = math.exp(sum(math.log(a / b) for a, b in zip(num, den)) / n)
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return 100.0 * bp * geo


def naive_softmax(z):
    e = [math.exp(v - max(z)) for v in z]
    s = sum(e)
    return [v / s for v in e]


def tensor_relative_error(analytic, numeric):
    """Norm-wise ``||a - n|| / max(||a||, ||n||)`` for one parameter tensor."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    return 0.0 if denom == 0 else float(np.linalg.norm(analytic - numeric) / denom)
