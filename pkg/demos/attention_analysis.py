"""
Where does the uncovering position look?
========================================

Split each left-to-right step's attention into the input segment, the
produced prefix and the remaining placeholders, average over heads, and
draw one generation as a heat map.
"""

from pathlib import Path

from bidigen import (EncoderConfig, EncoderModel, PlaceholderPolicy, TrainConfig, build_vocab,
                     generate, train)
from bidigen.analysis import analyze_traces, export_heatmap
from bidigen.data import gen_reverse

train_set = gen_reverse(8000, max_len=6, seed=0)
vocab = build_vocab(t for ex in train_set for t in (ex.source, ex.target))
model = EncoderModel(EncoderConfig(vocab_size=len(vocab), max_seq_len=32, hidden_dim=64,
                                   ffn_dim=128), seed=0)
train(model, train_set, vocab, PlaceholderPolicy(),
      TrainConfig(batch_size=32, peak_lr=1e-3, max_gen_len=10, max_steps=1000))

# 50 generations, last layer
sources = [ex.source for ex in gen_reverse(50, max_len=6, seed=2)]
traces = [generate(model, vocab, s, "left_to_right", 10, keep_attention=False)[1] for s in sources]
report = analyze_traces(traces)
print(report.to_text("reverse"))
print(report.per_head_csv())

# a bar above 50 on alpha_bar3 means the output attends to the future more than the past
out = Path("demo_output")
csv_path, svg_path = export_heatmap(traces[0], head_index=0, out_path=out / "heatmap", vocab=vocab)
print("heat map:", csv_path, svg_path)
print(csv_path.read_text())
