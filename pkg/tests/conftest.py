import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bidigen.checkpoint import save_checkpoint  # noqa: E402
from bidigen.data import gen_copy  # noqa: E402
from bidigen.model import EncoderConfig, EncoderModel  # noqa: E402
from bidigen.placeholder import PlaceholderPolicy  # noqa: E402
from bidigen.tokenizer import build_vocab  # noqa: E402
from bidigen.training import TrainConfig, train  # noqa: E402

ACCEPTANCE_LINES = []

COPY_MAX_LEN = 8
COPY_GEN_LEN = COPY_MAX_LEN + 2


class CopyRun:
    def __init__(self, model, vocab, cpu_seconds, checkpoint, train_set, config):
        self.model = model
        self.vocab = vocab
        self.cpu_seconds = cpu_seconds
        self.checkpoint = checkpoint
        self.train_set = train_set
        self.config = config


@pytest.fixture(scope="session")
def copy_run(tmp_path_factory):
    """The default desk model trained on the copy task (shared by several tests)."""
    start = time.process_time()
    train_set = gen_copy(20000, COPY_MAX_LEN, 10, seed=11)
    vocab = build_vocab(t for ex in train_set for t in (ex.source, ex.target))
    model = EncoderModel(EncoderConfig(vocab_size=len(vocab)), seed=0)
    tc = TrainConfig(batch_size=32, epochs=10, peak_lr=1e-3, max_gen_len=COPY_GEN_LEN,
                     max_steps=1500, seed=0)
    train(model, train_set, vocab, PlaceholderPolicy(kind="gaussian", mu=0.5, sigma=0.6), tc)
    cpu = time.process_time() - start
    path = tmp_path_factory.mktemp("copy") / "copy.ckpt"
    save_checkpoint(path, model, vocab, {"max_gen_len": COPY_GEN_LEN})
    return CopyRun(model, vocab, cpu, path, train_set, tc)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
