"""Report rendering: attention heatmaps, delimited tables, and figures.

The heatmap is a single self-contained HTML file. Each token gets a red
background scaled to 100 * weight / (document maximum weight) and each
sentence a leading blue marker scaled the same way against the sentence
weights, so the strongest token and sentence of every document render at
full intensity. Tables are plain CSV; figures are matplotlib PNGs written
next to them.
"""

from __future__ import annotations

import csv
import html
from dataclasses import dataclass
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .errors import DomainError  # noqa: E402
from .evaluation import (ErrorRow, ReliabilityRow, VerificationResult,  # noqa: E402
                         WeightedAttention)

_PAGE = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>authorship verification heatmap</title>
</head>
<body style="font-family: Georgia, serif; max-width: 60em; margin: 2em auto;">
{header}
{documents}
</body>
</html>
"""


@dataclass
class HeatmapDocument:
    """One document's attention data plus a display title."""

    attention: WeightedAttention
    sentence_weights: np.ndarray
    title: str


def _token_span(token: str, intensity: float, weight: float) -> str:
    alpha = intensity / 100.0
    return (f'<span class="tok" data-intensity="{intensity:.1f}" title="{weight:.6f}" '
            f'style="background-color:rgba(255,64,64,{alpha:.4f});padding:0 1px;">'
            f"{html.escape(token)}</span>")


def _sentence_marker(intensity: float) -> str:
    alpha = intensity / 100.0
    return (f'<span class="sent" data-intensity="{intensity:.1f}" '
            f'style="background-color:rgba(64,64,255,{alpha:.4f});">'
            "&nbsp;&nbsp;&nbsp;</span>")


def _render_document(doc: HeatmapDocument) -> str:
    if not doc.attention.entries:
        raise DomainError("render_heatmap on an empty document")
    max_weight = max(e.weight for e in doc.attention.entries)
    max_sentence = float(doc.sentence_weights.max())
    rows: dict[int, list[str]] = {}
    for e in doc.attention.entries:
        intensity = 100.0 * e.weight / max_weight if max_weight > 0 else 0.0
        rows.setdefault(e.row, []).append(_token_span(e.token, intensity, e.weight))
    lines = []
    for k in sorted(rows):
        s_int = (100.0 * float(doc.sentence_weights[k]) / max_sentence
                 if max_sentence > 0 else 0.0)
        lines.append("<div>" + _sentence_marker(s_int) + " " + " ".join(rows[k]) + "</div>")
    title = f"<h3>{html.escape(doc.title)}</h3>" if doc.title else ""
    return (f'<div class="doc" style="margin-bottom:1.5em;line-height:1.7;">'
            f"{title}\n" + "\n".join(lines) + "\n</div>")


def render_heatmap(doc1: HeatmapDocument, doc2: HeatmapDocument,
                   result: VerificationResult) -> str:
    """Self-contained HTML for a verified pair; byte-deterministic."""
    header = (
        '<div class="summary" style="border:1px solid #999;padding:0.6em;margin-bottom:1em;">'
        f"distance {result.distance:.6f}, "
        f"thresholds [{result.tau_s:.6f}, {result.tau_d:.6f}], "
        f"decision {result.decision}, reliability {result.reliability}</div>")
    documents = "\n".join([_render_document(doc1), _render_document(doc2)])
    return _PAGE.format(header=header, documents=documents)


# ---------------------------------------------------------------------------
# delimited tables


def _fmt(value) -> str:
    return "" if value is None else f"{value:.6f}"


def write_error_table_csv(path: str, rows: Sequence[ErrorRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "instances", "errors", "error_rate"])
        for row in rows:
            writer.writerow([row.label, row.instances, row.errors, _fmt(row.error_rate)])


def write_reliability_csv(path: str, rows: Sequence[ReliabilityRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "instances", "retained", "retained_fraction",
                         "errors", "error_rate"])
        for row in rows:
            writer.writerow([row.label, row.total, row.retained,
                             _fmt(row.retained_fraction), row.errors, _fmt(row.error_rate)])


def write_history_csv(path: str, history: Sequence[dict]) -> None:
    if not history:
        raise DomainError("empty training history")
    columns = ["epoch", "train_loss", "dev_error_overall",
               "dev_error_a1c1", "dev_error_a1c0", "dev_error_a0c1", "dev_error_a0c0"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in history:
            writer.writerow([row["epoch"]] + [f"{row[c]:.6f}" for c in columns[1:]])


def write_tally_csv(path: str, tally: Sequence[tuple[str, int]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["token", "count"])
        writer.writerows(tally)


def write_tau_csv(path: str, taus: Sequence[float], p_values: Sequence[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_index", "tau", "p_value"])
        for i, (t, p) in enumerate(zip(taus, p_values)):
            writer.writerow([i, f"{t:.6f}", f"{p:.6g}"])


def write_tau_histogram_csv(path: str, taus: Sequence[float], bins: int = 20) -> None:
    counts, edges = np.histogram(np.asarray(taus), bins=bins, range=(-1.0, 1.0))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, n in zip(edges[:-1], edges[1:], counts):
            writer.writerow([f"{lo:.4f}", f"{hi:.4f}", int(n)])


def write_features_csv(path: str, doc_ids: Sequence[str], author_ids: Sequence[str],
                       features: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "author_id"]
                        + [f"f{i}" for i in range(features.shape[1])])
        for doc_id, author_id, row in zip(doc_ids, author_ids, features):
            writer.writerow([doc_id, author_id] + [f"{v:.10g}" for v in row])


# ---------------------------------------------------------------------------
# figures


def save_error_figure(path: str, rows: Sequence[ErrorRow], title: str = "verification error") -> None:
    labels = [r.label for r in rows]
    rates = [100.0 * (r.error_rate or 0.0) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(labels, rates, color="#b03030")
    ax.set_ylabel("error rate (%)")
    ax.set_title(title)
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_distance_figure(path: str, distances: Sequence[float], tau_s: float,
                         tau_d: float) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.hist(distances, bins=40, color="#555588")
    ax.axvline(tau_s, color="green", linestyle="--", label="lower threshold")
    ax.axvline(tau_d, color="red", linestyle="--", label="upper threshold")
    ax.axvline((tau_s + tau_d) / 2, color="black", linestyle=":", label="decision midpoint")
    ax.set_xlabel("pair distance")
    ax.set_ylabel("pairs")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_tally_figure(path: str, tally: Sequence[tuple[str, int]], top: int = 20) -> None:
    shown = list(tally[:top])[::-1]
    fig, ax = plt.subplots(figsize=(6, max(3.0, 0.28 * len(shown))))
    ax.barh([t for t, _ in shown], [c for _, c in shown], color="#8888bb")
    ax.set_xlabel("documents ranking the token in their top 5")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_tau_histogram_figure(path: str, taus: Sequence[float]) -> None:
    arr = np.asarray(taus, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(arr, bins=20, range=(-1.0, 1.0), color="#338855")
    ax.set_xlabel("rank correlation of weighted attentions")
    ax.set_ylabel("documents")
    if arr.size:
        ax.set_title(f"mean {arr.mean():.3f} +/- {arr.std():.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
