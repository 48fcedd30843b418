"""Bidirectional sequence generation with placeholder tokens.

A transformer encoder reads ``[CLS] x [SEP] [P] ... [P]`` and uncovers the
placeholder slots one by one, so every prediction can attend to the
already-produced prefix and to the slots still to come.
"""
from .analysis import aggregate, decompose, export_heatmap
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Example, gen_copy, gen_reverse, gen_xor_template, load_jsonl, save_jsonl
from .decoding import GenerationStrategy, GenerationTrace, generate, termination
from .evaluation import accuracies, bleu, classify_response, evaluate
from .model import AttentionRecord, EncoderConfig, EncoderModel, cross_entropy, forward
from .placeholder import PlaceholderPolicy, PolicyKind, apply_mask, sample_mask
from .tensor import Tensor, no_grad
from .tokenizer import Vocabulary, build_vocab, decode, encode_pair
from .training import Adam, LossScope, TrainConfig, batch_loss, make_batch, train

__version__ = "0.1.0"
