"""Versioned binary checkpoint format.

Layout (all integers little-endian)::

    8 bytes   magic b"BDGNCKPT"
    uint32    format version
    uint32    header length N
    N bytes   UTF-8 JSON header: {"config": {...}, "vocab": [...] | null,
              "num_params": int, "meta": {...}}
    then, per parameter:
    uint16    name length, name bytes (UTF-8)
    uint8     ndim, ndim x uint32 extents
    float32   prod(extents) raw IEEE-754 values, row-major

Files are written to a temporary sibling and renamed into place, so a
crash never leaves a truncated checkpoint behind.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import EncoderConfig, EncoderModel
from .tokenizer import Vocabulary

MAGIC = b"BDGNCKPT"
FORMAT_VERSION = 1


def save_checkpoint(path, model: EncoderModel, vocab: Vocabulary | None = None, meta: dict | None = None):
    path = Path(path)
    header = {
        "config": model.config.to_dict(),
        "vocab": list(vocab.tokens) if vocab is not None else None,
        "num_params": len(model.params),
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(blob)), blob]
    for name, p in model.params.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<B", p.data.ndim) + struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        chunks.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint to {path.parent}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            for c in chunks:
                fh.write(c)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, dtype=np.float32):
    """Return ``(model, vocab_or_None, meta)``."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(buf, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    header = json.loads(r.take(hlen).decode("utf-8"))
    config = EncoderConfig(**header["config"])
    state = {}
    for _ in range(header["num_params"]):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        count = int(np.prod(shape, dtype=np.int64))
        state[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
    if r.pos != len(buf):
        raise CheckpointError(f"{path}: trailing bytes after last parameter")
    model = EncoderModel(config, dtype=dtype)
    model.load_state_dict(state)
    vocab = Vocabulary(header["vocab"]) if header.get("vocab") is not None else None
    return model, vocab, header.get("meta", {})
