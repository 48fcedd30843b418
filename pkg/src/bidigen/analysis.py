"""Where does an uncovering position look?

For a left-to-right trace, the attention row of the position being
uncovered at step t splits into three parts:

1. the conditioning segment ``[CLS] x [SEP]``,
2. the produced prefix including the current position,
3. the placeholders still to be uncovered.

``a1 + a2 + a3 == 1`` per row.  Averaging per head over steps and
datapoints gives ``alpha_h^k``; averaging heads gives ``alpha^k``.  The
renormalised pair ``alpha_bar^2, alpha_bar^3`` compares past against future
within the output segment only.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .decoding import SEQUENTIAL, GenerationTrace
from .errors import DataError, RangeError, UsageError


@dataclass(frozen=True)
class SplitRow:
    datapoint: int
    step: int  # 1-based generation time step
    head: int
    a1: float
    a2: float
    a3: float


def _check_layer(trace, layer):
    n_layers = trace.steps[0].attention_rows.shape[0] if trace.steps else 0
    if trace.steps and not -n_layers <= layer < n_layers:
        raise RangeError(f"layer {layer} out of range for {n_layers} layers")


def decompose(trace: GenerationTrace, input_len: Optional[int] = None, layer: int = -1,
              datapoint: int = 0) -> List[SplitRow]:
    """Split the uncovering position's attention at every step, for every head."""
    if trace.strategy not in SEQUENTIAL:
        raise UsageError(f"attention split needs a left-to-right trace, got {trace.strategy.value}")
    _check_layer(trace, layer)
    start = trace.input_len if input_len is None else input_len
    end = trace.input_len + trace.output_len
    rows = []
    for t, step in enumerate(trace.steps, start=1):
        pos = step.position
        att = step.attention_rows[layer]
        for h in range(att.shape[0]):
            r = att[h]
            rows.append(SplitRow(datapoint, t, h,
                                 float(r[:start].sum()),
                                 float(r[start:pos + 1].sum()),
                                 float(r[pos + 1:end].sum())))
    return rows


@dataclass
class AttentionReport:
    per_head: np.ndarray  # (H, 3): alpha_h^1..3
    num_datapoints: int
    num_rows: int

    @property
    def num_heads(self):
        return self.per_head.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return self.per_head.mean(axis=0)

    @property
    def alpha_std(self) -> np.ndarray:
        return self.per_head.std(axis=0)

    @property
    def per_head_bar(self) -> np.ndarray:
        """(H, 2) renormalised past/future split per head; NaN where undefined."""
        out_mass = self.per_head[:, 1] + self.per_head[:, 2]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(out_mass[:, None] > 0, self.per_head[:, 1:] / out_mass[:, None], np.nan)

    @property
    def alpha_bar(self) -> Optional[np.ndarray]:
        a = self.alpha
        s = a[1] + a[2]
        if s <= 0:
            return None
        return np.array([a[1] / s, a[2] / s])

    @property
    def alpha_bar_std(self) -> np.ndarray:
        return np.nanstd(self.per_head_bar, axis=0)

    def to_text(self, label: str = "data") -> str:
        """The alpha / alpha-bar table, percentages to one decimal."""
        a, sd = 100 * self.alpha, 100 * self.alpha_std
        lines = [
            f"# datapoints={self.num_datapoints} heads={self.num_heads} rows={self.num_rows}",
            f"{'dataset':<12}{'alpha1':>16}{'alpha2':>16}{'alpha3':>16}",
            f"{label:<12}" + "".join(f"{f'{m:.1f}+-{s:.1f}':>16}" for m, s in zip(a, sd)),
            "",
            f"{'dataset':<12}{'':>16}{'alpha_bar2':>16}{'alpha_bar3':>16}",
        ]
        bar = self.alpha_bar
        if bar is None:
            lines.append(f"{label:<12}{'-':>16}{'undefined':>16}{'undefined':>16}")
        else:
            bsd = 100 * self.alpha_bar_std
            lines.append(f"{label:<12}{'-':>16}"
                         + "".join(f"{f'{100 * m:.1f}+-{s:.1f}':>16}" for m, s in zip(bar, bsd)))
        return "\n".join(lines) + "\n"

    def per_head_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["head", "alpha1", "alpha2", "alpha3", "alpha_bar2", "alpha_bar3"])
        for h, (row, bar) in enumerate(zip(self.per_head, self.per_head_bar)):
            w.writerow([h] + [f"{100 * v:.1f}" for v in row] + ["" if np.isnan(v) else f"{100 * v:.1f}" for v in bar])
        return buf.getvalue()


def aggregate(rows: Iterable[SplitRow]) -> AttentionReport:
    """Average rows per head: over the steps of each datapoint, then over datapoints."""
    rows = list(rows)
    if not rows:
        raise DataError("no attention rows to aggregate")
    heads = sorted({r.head for r in rows})
    sums: Dict[tuple, np.ndarray] = {}
    counts: Dict[tuple, int] = {}
    for r in rows:
        key = (r.head, r.datapoint)
        sums[key] = sums.get(key, 0.0) + np.array([r.a1, r.a2, r.a3])
        counts[key] = counts.get(key, 0) + 1
    points = sorted({d for _, d in sums})
    per_head = np.zeros((len(heads), 3))
    for i, h in enumerate(heads):
        means = [sums[(h, d)] / counts[(h, d)] for d in points if (h, d) in sums]
        per_head[i] = np.mean(means, axis=0)
    return AttentionReport(per_head=per_head, num_datapoints=len(points), num_rows=len(rows))


# ----------------------------------------------------------------------------
# heat maps
# ----------------------------------------------------------------------------

def heatmap_matrix(trace: GenerationTrace, head_index: int, layer: int = -1):
    """Attention from each step's uncovering position onto the uncovered output slots.

    Returns ``(matrix, slots)``: row t is step t, columns are the uncovered
    output slots in left-to-right order.  Entries are raw attention weights
    (no renormalisation over the output segment).
    """
    if not trace.steps:
        raise DataError("trace has no steps")
    n_heads = trace.steps[0].attention_rows.shape[1]
    if not 0 <= head_index < n_heads:
        raise RangeError(f"head {head_index} out of range for {n_heads} heads")
    _check_layer(trace, layer)
    slots = sorted(s.position - trace.input_len for s in trace.steps)
    cols = [trace.input_len + j for j in slots]
    m = np.array([[s.attention_rows[layer, head_index, c] for c in cols] for s in trace.steps])
    return m, slots


def _labels(trace, vocab, slots):
    def tok(i):
        return vocab.token_of(i) if vocab is not None else str(i)
    rows = [tok(s.token_id) for s in trace.steps]
    cols = [tok(trace.final_output_ids[j]) for j in slots]
    return rows, cols


def heatmap_csv(matrix, row_labels, col_labels) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step/position"] + [f"{j}:{c}" for j, c in enumerate(col_labels)])
    for t, (label, row) in enumerate(zip(row_labels, matrix)):
        w.writerow([f"{t}:{label}"] + [repr(float(v)) for v in row])
    return buf.getvalue()


def heatmap_svg(matrix, row_labels, col_labels, cell: int = 28, title: str = "") -> str:
    """Standalone SVG grid; darker blue means more attention."""
    n_rows, n_cols = matrix.shape
    left = 12 + 8 * max((len(s) for s in row_labels), default=1)
    top = 30 + 8 * max((len(s) for s in col_labels), default=1)
    width, height = left + n_cols * cell + 10, top + n_rows * cell + 10
    vmax = float(matrix.max()) if matrix.size and matrix.max() > 0 else 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="monospace" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="4" y="14">{escape(title)}</text>')
    for j, label in enumerate(col_labels):
        x, y = left + j * cell + cell // 2 + 4, top - 6
        out.append(f'<text x="{x}" y="{y}" transform="rotate(-90 {x} {y})">{escape(label)}</text>')
    for t, label in enumerate(row_labels):
        out.append(f'<text x="{left - 6}" y="{top + t * cell + cell // 2 + 4}" '
                   f'text-anchor="end">{escape(label)}</text>')
        for j in range(n_cols):
            v = float(matrix[t, j])
            s = v / vmax
            r, g, b = (int(round(255 - (255 - c) * s)) for c in (8, 48, 107))
            out.append(f'<rect x="{left + j * cell}" y="{top + t * cell}" width="{cell}" '
                       f'height="{cell}" fill="rgb({r},{g},{b})" stroke="#ccc">'
                       f'<title>{v:.4f}</title></rect>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_heatmap(trace: GenerationTrace, head_index: int, out_path, vocab=None, layer: int = -1):
    """Write ``<out>.csv`` and ``<out>.svg``; returns both paths."""
    m, slots = heatmap_matrix(trace, head_index, layer)
    rows, cols = _labels(trace, vocab, slots)
    base = Path(out_path)
    if base.suffix in (".csv", ".svg"):
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path, svg_path = base.with_suffix(".csv"), base.with_suffix(".svg")
    csv_path.write_text(heatmap_csv(m, rows, cols), encoding="utf-8")
    svg_path.write_text(heatmap_svg(m, rows, cols, title=f"layer {layer} head {head_index}"),
                        encoding="utf-8")
    return csv_path, svg_path


def analyze_traces(traces: Sequence[GenerationTrace], layer: int = -1) -> AttentionReport:
    rows = []
    for d, tr in enumerate(traces):
        rows.extend(decompose(tr, layer=layer, datapoint=d))
    return aggregate(rows)
