"""Verification decisions, error tables, rank correlation, and attention stats.

A distance below the midpoint of the two thresholds means SAME author,
otherwise DIFFERENT; distances outside the open threshold band carry HIGH
reliability. Error tables stratify by the (a, c) label tuple. Weighted
attention multiplies word and sentence weights into one per-token score,
comparable across runs via tie-corrected Kendall rank correlation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .corpus import LABELS, PairRecord
from .errors import DomainError
from .model import AttentionMap, ModelParameters, distance, encode_document
from .textprep import EncodedDocument

SAME = "SAME"
DIFFERENT = "DIFFERENT"
HIGH = "HIGH"
LOW = "LOW"


@dataclass(frozen=True)
class VerificationResult:
    distance: float
    decision: str
    reliability: str
    tau_s: float
    tau_d: float


def classify_distance(d: float, tau_s: float, tau_d: float) -> VerificationResult:
    """Decide SAME/DIFFERENT at the threshold midpoint; ties go to DIFFERENT.

    Reliability is HIGH exactly when d <= tau_s or d >= tau_d.
    """
    if not tau_s < tau_d:
        raise DomainError(f"need tau_s < tau_d, got {tau_s} >= {tau_d}")
    if d < 0:
        raise DomainError(f"negative distance {d}")
    decision = SAME if d < (tau_s + tau_d) / 2.0 else DIFFERENT
    reliability = HIGH if (d <= tau_s or d >= tau_d) else LOW
    return VerificationResult(d, decision, reliability, tau_s, tau_d)


def classify(y1, y2, tau_s: float, tau_d: float) -> VerificationResult:
    """Verification decision for two feature vectors."""
    t1 = y1 if isinstance(y1, ad.Tensor) else ad.Tensor(y1)
    t2 = y2 if isinstance(y2, ad.Tensor) else ad.Tensor(y2)
    with ad.no_grad():
        d = float(distance(t1, t2).data)
    return classify_distance(d, tau_s, tau_d)


def _label_name(label) -> str:
    return f"a={label[0]},c={label[1]}"


@dataclass
class ErrorRow:
    label: str
    instances: int
    errors: int

    @property
    def error_rate(self) -> float | None:
        return self.errors / self.instances if self.instances else None


def error_table(results: Sequence[tuple[VerificationResult, PairRecord]]) -> list[ErrorRow]:
    """Error counts per label tuple plus an overall row.

    A result is an error when the decision disagrees with the pair's
    same-author flag.
    """
    if not results:
        raise DomainError("error_table on an empty result set")
    rows = {label: ErrorRow(_label_name(label), 0, 0) for label in LABELS}
    overall = ErrorRow("overall", 0, 0)
    for result, pair in results:
        wrong = int((result.decision == SAME) != (pair.a == 1))
        row = rows[(pair.a, pair.c)]
        row.instances += 1
        row.errors += wrong
        overall.instances += 1
        overall.errors += wrong
    return [overall] + [rows[label] for label in LABELS]


@dataclass
class FoldStats:
    label: str
    mean_error_rate: float
    std_error_rate: float


def error_table_folds(tables: Sequence[Sequence[ErrorRow]]) -> list[FoldStats]:
    """Mean and standard deviation of error rates across fold tables."""
    if not tables:
        raise DomainError("no fold tables")
    stats = []
    for i, row in enumerate(tables[0]):
        rates = [t[i].error_rate for t in tables if t[i].error_rate is not None]
        if not rates:
            stats.append(FoldStats(row.label, float("nan"), float("nan")))
            continue
        stats.append(FoldStats(row.label, float(np.mean(rates)), float(np.std(rates))))
    return stats


@dataclass
class ReliabilityRow:
    label: str
    total: int
    retained: int
    errors: int

    @property
    def retained_fraction(self) -> float | None:
        return self.retained / self.total if self.total else None

    @property
    def error_rate(self) -> float | None:
        # None flags an empty row: no HIGH-reliability instances to rate.
        return self.errors / self.retained if self.retained else None


def high_reliability_table(results: Sequence[tuple[VerificationResult, PairRecord]]
                           ) -> list[ReliabilityRow]:
    """Error rate and retained fraction restricted to HIGH-reliability decisions."""
    if not results:
        raise DomainError("high_reliability_table on an empty result set")
    rows = {label: ReliabilityRow(_label_name(label), 0, 0, 0) for label in LABELS}
    overall = ReliabilityRow("overall", 0, 0, 0)
    for result, pair in results:
        row = rows[(pair.a, pair.c)]
        row.total += 1
        overall.total += 1
        if result.reliability != HIGH:
            continue
        wrong = int((result.decision == SAME) != (pair.a == 1))
        row.retained += 1
        row.errors += wrong
        overall.retained += 1
        overall.errors += wrong
    return [overall] + [rows[label] for label in LABELS]


@dataclass(frozen=True)
class AttendedToken:
    row: int
    slot: int
    token: str
    weight: float


@dataclass
class WeightedAttention:
    """Overall per-token attention: word weight times sentence weight.

    Covers every real (non-pad) slot, so the weights sum to 1.
    """

    entries: list[AttendedToken]

    def total(self) -> float:
        return sum(e.weight for e in self.entries)


def weighted_attention(att: AttentionMap, doc: EncodedDocument) -> WeightedAttention:
    """Combine word and sentence attention into per-token weights."""
    entries = []
    for k, row_weights in enumerate(att.word_weights):
        s_weight = float(att.sentence_weights[k])
        for j, w_weight in enumerate(row_weights):
            entries.append(AttendedToken(k, j, doc.raw_tokens[k][j],
                                         float(w_weight) * s_weight))
    return WeightedAttention(entries)


def top_token_tally(docs: Sequence[WeightedAttention], top_n: int = 5) -> list[tuple[str, int]]:
    """Tally surface forms of each document's top-n tokens by weight.

    Weight ties break toward the earlier position. The tally is sorted by
    descending count, then token.
    """
    if not docs:
        raise DomainError("top_token_tally needs at least one document")
    counts: Counter[str] = Counter()
    for wa in docs:
        ranked = sorted(wa.entries, key=lambda e: (-e.weight, e.row, e.slot))
        for entry in ranked[:top_n]:
            counts[entry.token] += 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Tie-corrected Kendall rank correlation with a normal-approximation p-value.

    Counts concordant and discordant pairs directly (O(n^2), fine at the
    list lengths attention comparisons produce). The variance used for the
    p-value carries the standard tie adjustments.
    """
    n = len(x)
    if n != len(y):
        raise DomainError(f"length mismatch: {n} vs {len(y)}")
    if n < 2:
        raise DomainError("kendall_tau needs at least two observations")
    if len(set(x)) < 2 or len(set(y)) < 2:
        raise DomainError("kendall_tau undefined for a constant input list")

    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[i] > x[j]) - (x[i] < x[j])
            dy = (y[i] > y[j]) - (y[i] < y[j])
            if dx == 0 or dy == 0:
                continue
            if dx == dy:
                concordant += 1
            else:
                discordant += 1

    def tie_sizes(values) -> list[int]:
        return [t for t in Counter(values).values() if t > 1]

    tx, ty = tie_sizes(x), tie_sizes(y)
    n0 = n * (n - 1) // 2
    n1 = sum(t * (t - 1) // 2 for t in tx)
    n2 = sum(t * (t - 1) // 2 for t in ty)
    tau = (concordant - discordant) / math.sqrt((n0 - n1) * (n0 - n2))

    v0 = n * (n - 1) * (2 * n + 5)
    vt = sum(t * (t - 1) * (2 * t + 5) for t in tx)
    vu = sum(t * (t - 1) * (2 * t + 5) for t in ty)
    v1 = (sum(t * (t - 1) for t in tx) * sum(t * (t - 1) for t in ty)
          / (2.0 * n * (n - 1)))
    v2 = 0.0
    if n > 2:
        v2 = (sum(t * (t - 1) * (t - 2) for t in tx)
              * sum(t * (t - 1) * (t - 2) for t in ty)
              / (9.0 * n * (n - 1) * (n - 2)))
    variance = (v0 - vt - vu) / 18.0 + v1 + v2
    if variance <= 0:
        return tau, 1.0
    z = (concordant - discordant) / math.sqrt(variance)
    p_value = math.erfc(abs(z) / math.sqrt(2.0))
    return tau, p_value


def document_features(docs: Sequence[EncodedDocument], params: ModelParameters) -> np.ndarray:
    """Feature matrix (one row per document) from forward passes only."""
    rows = []
    with ad.no_grad():
        for doc in docs:
            rows.append(encode_document(doc, params).y.data.copy())
    return np.stack(rows) if rows else np.zeros((0, params.config.feature_dim))
