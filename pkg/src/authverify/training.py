"""Double-threshold contrastive objective and the training loop.

Same-author pairs are pushed below the lower distance threshold and
different-author pairs above the higher one with squared hinges, so pairs
already on the right side contribute nothing. Each epoch draws a fresh
balanced pair sample, and optimization is Adam after global-norm gradient
clipping. Runs are fully deterministic in the configured seed.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward
from .corpus import LABELS, Review, resample_epoch, sample_pairs
from .errors import DomainError, EvaluationError
from .evaluation import classify_distance, SAME
from .model import ModelConfig, ModelParameters, distance, encode_document, \
    init_parameters, save_checkpoint
from .textprep import EncodedDocument, Vocabulary, encode_text

_DEV_SAMPLE_TAG = 2 ** 31 - 1  # seed word reserved for the fixed dev sample


@dataclass
class LossConfig:
    tau_s: float = 1.0
    tau_d: float = 3.0
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    grad_clip_norm: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.tau_s < self.tau_d:
            raise DomainError(f"need 0 < tau_s < tau_d, got {self.tau_s}, {self.tau_d}")


def pair_loss(d: float, a: int, cfg: LossConfig) -> float:
    """Squared hinge loss for one pair at distance d with same-author flag a."""
    if d < 0:
        raise DomainError(f"negative distance {d}")
    if a == 1:
        return max(d - cfg.tau_s, 0.0) ** 2
    return max(cfg.tau_d - d, 0.0) ** 2


def pair_loss_graph(d: Tensor, a: int, cfg: LossConfig) -> Tensor:
    """Differentiable pair loss on the gradient graph.

    An inactive hinge contributes a detached zero: its gradient is exactly
    zero there, so skipping the subgraph changes nothing but work.
    """
    dv = float(d.data)
    if dv < 0:
        raise DomainError(f"negative distance {dv}")
    if a == 1:
        if dv <= cfg.tau_s:
            return Tensor(0.0)
        return ad.square(ad.relu(ad.sub(d, Tensor(cfg.tau_s))))
    if dv >= cfg.tau_d:
        return Tensor(0.0)
    return ad.square(ad.relu(ad.sub(Tensor(cfg.tau_d), d)))


class AdamState:
    """First/second moment estimates plus the step counter."""

    def __init__(self, params: ModelParameters):
        self.step = 0
        self.m = {n: np.zeros_like(t.data) for n, t in params.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in params.items()}


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their joint norm is at most max_norm."""
    total_sq = sum(float((g * g).sum()) for g in grads.values())
    total = float(np.sqrt(total_sq))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


def optimizer_step(params: ModelParameters, grads: dict[str, np.ndarray],
                   cfg: LossConfig, state: AdamState,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One Adam update (in place) after global-norm clipping."""
    for name, g in grads.items():
        if g.shape != params[name].data.shape:
            raise DomainError(f"gradient shape {g.shape} mismatches parameter {name}")
        if not np.all(np.isfinite(g)):
            raise EvaluationError(f"non-finite gradient for parameter {name}")
    clip_global_norm(grads, cfg.grad_clip_norm)
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / correction1) / (np.sqrt(v / correction2) + eps)
        params[name].data -= cfg.learning_rate * update


def collect_gradients(params: ModelParameters) -> dict[str, np.ndarray]:
    return {n: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for n, t in params.items()}


def _dev_error(dev_docs: dict[int, EncodedDocument], dev_pairs, params: ModelParameters,
               cfg: LossConfig) -> dict[str, float]:
    features: dict[int, np.ndarray] = {}
    with ad.no_grad():
        for idx, doc in dev_docs.items():
            features[idx] = encode_document(doc, params).y.data
    wrong = {label: 0 for label in LABELS}
    count = {label: 0 for label in LABELS}
    for pair in dev_pairs:
        d = float(np.linalg.norm(features[pair.doc1] - features[pair.doc2]))
        result = classify_distance(d, cfg.tau_s, cfg.tau_d)
        count[(pair.a, pair.c)] += 1
        if (result.decision == SAME) != (pair.a == 1):
            wrong[(pair.a, pair.c)] += 1
    out = {f"dev_error_a{a}c{c}": (wrong[(a, c)] / count[(a, c)] if count[(a, c)] else float("nan"))
           for a, c in LABELS}
    total = sum(count.values())
    out["dev_error_overall"] = sum(wrong.values()) / total if total else float("nan")
    return out


def train(train_fold: Sequence[Review], dev_fold: Sequence[Review], vocab: Vocabulary,
          model_cfg: ModelConfig, cfg: LossConfig, *,
          words_per_row: int = 32, chars_per_word: int = 16, max_rows: int = 50,
          pairs_per_label: int = 200, dev_pairs_per_label: int = 50,
          min_per_author: int = 1, out_dir: str | None = None,
          target_dev_error: float | None = None,
          initial_params: ModelParameters | None = None,
          log=None) -> tuple[ModelParameters, list[dict]]:
    """Train the encoder on one fold, tracking dev error on another.

    Per epoch: a fresh balanced pair sample, minibatch forward passes, mean
    pair loss, backprop, clipped Adam step. Returns the trained parameters
    and a history row per epoch. When ``out_dir`` is set, writes final and
    best-dev checkpoints there. ``target_dev_error`` stops training early
    once the dev error reaches it.
    """
    params = initial_params if initial_params is not None else init_parameters(model_cfg, cfg.seed)
    params.set_requires_grad(True)
    state = AdamState(params)

    def encode_fold(fold):
        return [encode_text(r.text, vocab, words_per_row, chars_per_word, max_rows)
                for r in fold]

    train_docs = encode_fold(train_fold)
    dev_pairs = sample_pairs(dev_fold, dev_pairs_per_label,
                             np.random.SeedSequence([cfg.seed, _DEV_SAMPLE_TAG]),
                             min_per_author)
    dev_doc_ids = sorted({i for p in dev_pairs for i in (p.doc1, p.doc2)})
    dev_all = encode_fold(dev_fold)
    dev_docs = {i: dev_all[i] for i in dev_doc_ids}

    history: list[dict] = []
    best_dev = float("inf")
    vocab_hash = vocab.content_hash()
    started = time.monotonic()
    for epoch in range(cfg.epochs):
        pairs = resample_epoch(train_fold, epoch, cfg.seed, pairs_per_label, min_per_author)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch, 1]))
        order = rng.permutation(len(pairs))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [pairs[int(i)] for i in order[start:start + cfg.batch_size]]
            params.zero_grads()
            word_cache: dict = {}
            feature_cache: dict = {}
            terms = []
            for pair in batch:
                for idx in (pair.doc1, pair.doc2):
                    if idx not in feature_cache:
                        feature_cache[idx] = encode_document(train_docs[idx], params, word_cache)
                d = distance(feature_cache[pair.doc1].y, feature_cache[pair.doc2].y)
                if not np.isfinite(d.data):
                    raise EvaluationError(
                        f"non-finite distance at epoch {epoch}, batch start {start}, "
                        f"pair ({pair.doc1}, {pair.doc2})")
                terms.append(pair_loss_graph(d, pair.a, cfg))
            total = terms[0]
            for term in terms[1:]:
                total = ad.add(total, term)
            batch_loss = ad.scale(total, 1.0 / len(terms))
            if not np.isfinite(batch_loss.data):
                raise EvaluationError(
                    f"non-finite loss at epoch {epoch}, batch start {start}, "
                    f"pairs {[(p.doc1, p.doc2) for p in batch]}")
            backward(batch_loss)
            optimizer_step(params, collect_gradients(params), cfg, state)
            epoch_loss += float(batch_loss.data) * len(terms)
        row = {"epoch": epoch, "train_loss": epoch_loss / len(pairs)}
        row.update(_dev_error(dev_docs, dev_pairs, params, cfg))
        history.append(row)
        if log:
            log(f"epoch {epoch}: train_loss={row['train_loss']:.4f} "
                f"dev_error={row['dev_error_overall']:.3f} "
                f"({time.monotonic() - started:.1f}s)")
        if out_dir and row["dev_error_overall"] < best_dev:
            best_dev = row["dev_error_overall"]
            save_checkpoint(os.path.join(out_dir, "best.ckpt"), params, vocab_hash,
                            cfg.seed, {"epoch": epoch})
        if target_dev_error is not None and row["dev_error_overall"] <= target_dev_error:
            break
    if out_dir:
        save_checkpoint(os.path.join(out_dir, "final.ckpt"), params, vocab_hash,
                        cfg.seed, {"epoch": history[-1]["epoch"] if history else -1})
    return params, history
