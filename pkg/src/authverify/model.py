"""Siamese hierarchical document encoder.

Characters feed a convolution with max-over-time pooling to give each word
a character representation; word embedding and character representation
feed a bidirectional LSTM with attention to give sentence embeddings;
sentences feed a second bidirectional LSTM with attention to give a
document embedding, projected through a tanh layer into the feature
vector. One parameter set serves both documents of a pair, and similarity
is the Euclidean distance between their feature vectors.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, DomainError
from .textprep import CHAR_PAD_ID, EncodedDocument, Vocabulary

CHECKPOINT_VERSION = 1

_LSTM_GATES = ("i", "f", "o", "g")
_WORD_LSTMS = ("word_fwd", "word_bwd")
_SENT_LSTMS = ("sent_fwd", "sent_bwd")


@dataclass
class ModelConfig:
    """Dimension constants for the encoder. Defaults are desk scale."""

    char_embed_dim: int = 8
    cnn_window: int = 4
    char_repr_dim: int = 16
    word_embed_dim: int = 32
    word_state_dim: int = 24
    sent_state_dim: int = 24
    word_attn_dim: int = 24
    sent_attn_dim: int = 24
    feature_dim: int = 16
    num_tokens: int = 0
    num_chars: int = 0

    @property
    def word_input_dim(self) -> int:
        return self.word_embed_dim + self.char_repr_dim

    @property
    def sent_input_dim(self) -> int:
        return 2 * self.word_state_dim


class ModelParameters:
    """The complete trainable set, as named tensors in a fixed order.

    Both branches of the Siamese comparison read this single instance;
    it is never copied per branch.
    """

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def items(self):
        return self.tensors.items()

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.tensors.values():
            t.requires_grad = flag

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.config,
                               {n: Tensor(t.data.copy(), t.requires_grad)
                                for n, t in self.tensors.items()})


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_parameters(config: ModelConfig, seed: int) -> ModelParameters:
    """Fresh parameters: uniform [-0.05, 0.05] embeddings, Glorot weights,
    zero biases except the LSTM forget gates, which start at 1.0."""
    if config.num_tokens < 5 or config.num_chars < 3:
        raise DomainError("config must carry vocabulary sizes (num_tokens, num_chars)")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    t: dict[str, Tensor] = {}

    def param(name: str, data: np.ndarray) -> None:
        t[name] = Tensor(data, requires_grad=True)

    param("char_embed", rng.uniform(-0.05, 0.05, size=(config.num_chars, config.char_embed_dim)))
    param("word_embed", rng.uniform(-0.05, 0.05, size=(config.num_tokens, config.word_embed_dim)))
    param("cnn.W", _glorot(rng, config.char_repr_dim, config.cnn_window * config.char_embed_dim))
    param("cnn.b", np.zeros(config.char_repr_dim))

    # One packed matrix per LSTM: gate blocks (input, forget, output, cell)
    # stacked rowwise, acting on the joined [input; previous state] vector.
    for prefix, state, input_dim in (
            ("word_fwd", config.word_state_dim, config.word_input_dim),
            ("word_bwd", config.word_state_dim, config.word_input_dim),
            ("sent_fwd", config.sent_state_dim, config.sent_input_dim),
            ("sent_bwd", config.sent_state_dim, config.sent_input_dim)):
        blocks = [_glorot(rng, state, input_dim + state) for _ in _LSTM_GATES]
        param(f"{prefix}.W", np.concatenate(blocks, axis=0))
        bias = np.zeros(4 * state)
        bias[state:2 * state] = 1.0  # forget gate opens at initialization
        param(f"{prefix}.b", bias)

    for prefix, attn_dim, joint in (("word_attn", config.word_attn_dim, 2 * config.word_state_dim),
                                    ("sent_attn", config.sent_attn_dim, 2 * config.sent_state_dim)):
        param(f"{prefix}.W", _glorot(rng, attn_dim, joint))
        param(f"{prefix}.b", np.zeros(attn_dim))
        param(f"{prefix}.v", _glorot(rng, 1, attn_dim))

    param("mlp.W", _glorot(rng, config.feature_dim, 2 * config.sent_state_dim))
    param("mlp.b", np.zeros(config.feature_dim))
    return ModelParameters(config, t)


def import_word_embeddings(params: ModelParameters, vocab: Vocabulary, path: str) -> int:
    """Overwrite embedding rows from a ``token v1 .. vD`` text file.

    Only tokens present in the vocabulary are imported; returns how many
    rows were replaced. Vector width must match the configured embedding.
    """
    dim = params.config.word_embed_dim
    replaced = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DimensionError(
                    f"pretrained vector for {token!r} has width {len(values)}, expected {dim}")
            if token in vocab.token_to_id:
                params["word_embed"].data[vocab.token_to_id[token]] = [float(v) for v in values]
                replaced += 1
    return replaced


@dataclass
class AttentionMap:
    """Per-row word attention weights and per-document sentence weights.

    Each entry of ``word_weights`` covers only the real (non-pad) slots of
    its row and sums to 1; ``sentence_weights`` covers the real rows and
    sums to 1.
    """

    word_weights: list[np.ndarray]
    sentence_weights: np.ndarray


@dataclass
class DocumentFeatures:
    y: Tensor
    attention: AttentionMap


def chars_to_word(char_ids: Sequence[int], params: ModelParameters) -> Tensor:
    """Character representation of one word (convolution + max pooling).

    Words shorter than the window are right-padded with the pad character
    so at least one window exists.
    """
    if len(char_ids) == 0:
        raise DomainError("chars_to_word on an empty character list")
    window = params.config.cnn_window
    ids = list(char_ids)
    if len(ids) < window:
        ids = ids + [CHAR_PAD_ID] * (window - len(ids))
    embeds = ad.gather_rows(params["char_embed"], ids)
    windows = ad.sliding_windows(embeds, window)
    conv = ad.tanh_map(ad.affine_rows(windows, params["cnn.W"], params["cnn.b"]))
    pooled, _ = ad.max_over_time(conv)
    return pooled


def _lstm_sweep(inputs: Sequence[Tensor], params: ModelParameters, prefix: str,
                state_dim: int, reverse: bool) -> list[Tensor]:
    """Hidden states of one LSTM direction, in input order."""
    w, b = params[f"{prefix}.W"], params[f"{prefix}.b"]
    h = Tensor(np.zeros(state_dim))
    c = h
    states: list[Tensor] = [h] * len(inputs)
    order = range(len(inputs) - 1, -1, -1) if reverse else range(len(inputs))
    for j in order:
        hc = ad.lstm_cell(w, b, inputs[j], h, c)
        h = ad.slice1d(hc, 0, state_dim)
        c = ad.slice1d(hc, state_dim, 2 * state_dim)
        states[j] = h
    return states


def _bilstm_with_attention(inputs: Sequence[Tensor], params: ModelParameters,
                           fwd: str, bwd: str, attn: str, state_dim: int
                           ) -> tuple[Tensor, Tensor]:
    """Joint hidden states under attention: returns (weighted sum, weights)."""
    fwd_states = _lstm_sweep(inputs, params, fwd, state_dim, reverse=False)
    bwd_states = _lstm_sweep(inputs, params, bwd, state_dim, reverse=True)
    joint = ad.concat_cols(ad.stack_rows(fwd_states), ad.stack_rows(bwd_states))

    w, b, v = params[f"{attn}.W"], params[f"{attn}.b"], params[f"{attn}.v"]
    hidden = ad.tanh_map(ad.affine_rows(joint, w, b))
    logits = ad.flatten(ad.matmul(hidden, ad.transpose(v)))
    weights = ad.softmax(logits)
    combined = ad.matmul(weights, joint)
    return combined, weights


def words_to_sentence(word_vectors: Sequence[Tensor], params: ModelParameters
                      ) -> tuple[Tensor, Tensor]:
    """Sentence embedding from per-word input vectors (embedding + char repr).

    Only real slots may be passed: padding never enters the recurrence or
    the attention softmax, so pad weights are exactly zero by construction.
    """
    if len(word_vectors) == 0:
        raise DomainError("words_to_sentence on an all-pad sentence")
    return _bilstm_with_attention(word_vectors, params, "word_fwd", "word_bwd",
                                  "word_attn", params.config.word_state_dim)


def sentences_to_document(sentence_embeddings: Sequence[Tensor], params: ModelParameters
                          ) -> tuple[Tensor, Tensor]:
    """Document embedding from sentence embeddings; mirror of the word tier."""
    if len(sentence_embeddings) == 0:
        raise DomainError("sentences_to_document on zero real sentences")
    return _bilstm_with_attention(sentence_embeddings, params, "sent_fwd", "sent_bwd",
                                  "sent_attn", params.config.sent_state_dim)


def project(doc_embedding: Tensor, params: ModelParameters) -> Tensor:
    """Document features: tanh-squashed affine map, entries in (-1, 1)."""
    return ad.tanh_map(ad.add(ad.matmul(params["mlp.W"], doc_embedding), params["mlp.b"]))


def distance(y1: Tensor, y2: Tensor) -> Tensor:
    """Euclidean distance between two feature vectors, as a scalar tensor."""
    if y1.data.shape != y2.data.shape:
        raise DimensionError(f"distance shapes {y1.shape} and {y2.shape} differ")
    diff = ad.sub(y1, y2)
    return ad.sqrt(ad.sum_all(ad.square(diff)))


def word_input(word_id: int, char_ids: Sequence[int], params: ModelParameters,
               cache: dict | None = None) -> Tensor:
    """Per-word LSTM input: word embedding joined with the char representation.

    Structural tokens (no characters) use a single pad character. The
    optional cache deduplicates repeated words within one gradient graph;
    reusing a node is sound because gradients accumulate per use.
    """
    key = (word_id, tuple(char_ids))
    if cache is not None and key in cache:
        return cache[key]
    chars = list(char_ids) if len(char_ids) > 0 else [CHAR_PAD_ID]
    vec = ad.concat((ad.gather_row(params["word_embed"], word_id),
                     chars_to_word(chars, params)))
    if cache is not None:
        cache[key] = vec
    return vec


def encode_document(doc: EncodedDocument, params: ModelParameters,
                    cache: dict | None = None) -> DocumentFeatures:
    """Full composition from an encoded document to features plus attention."""
    if doc.num_rows == 0:
        raise DomainError("encode_document on a document with no sentences")
    sentence_embeddings = []
    word_weight_rows = []
    for k in range(doc.num_rows):
        true_len = doc.word_lengths[k]
        vectors = [word_input(doc.word_ids[k][j],
                              doc.char_ids[k][j][:doc.char_lengths[k][j]],
                              params, cache)
                   for j in range(true_len)]
        embedding, weights = words_to_sentence(vectors, params)
        sentence_embeddings.append(embedding)
        word_weight_rows.append(weights.data.copy())
    doc_embedding, sentence_weights = sentences_to_document(sentence_embeddings, params)
    y = project(doc_embedding, params)
    return DocumentFeatures(y, AttentionMap(word_weight_rows, sentence_weights.data.copy()))


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str, params: ModelParameters, vocab_hash: str,
                    seed: int, extra: dict | None = None) -> None:
    """Write a checkpoint: metadata JSON plus one raw float64 block per tensor.

    Blocks are row-major little-endian; archive entries carry a fixed
    timestamp so identical parameters give byte-identical files.
    """
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "dimensions": asdict(params.config),
        "vocab_hash": vocab_hash,
        "seed": seed,
        "tensors": [{"name": n, "shape": list(t.data.shape)} for n, t in params.items()],
    }
    if extra:
        meta.update(extra)
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        def write(name: str, payload: bytes) -> None:
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, payload)
        write("meta.json", json.dumps(meta, indent=2, sort_keys=True).encode("utf-8"))
        for name, tensor in params.items():
            write(f"params/{name}.bin",
                  np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str) -> tuple[ModelParameters, dict]:
    """Read a checkpoint, verifying every block against its declared shape."""
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise DomainError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
        config = ModelConfig(**meta["dimensions"])
        tensors: dict[str, Tensor] = {}
        for entry in meta["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            raw = np.frombuffer(zf.read(f"params/{name}.bin"), dtype="<f8")
            if raw.size != int(np.prod(shape)):
                raise DimensionError(
                    f"{path}: tensor {name} has {raw.size} values, expected shape {shape}")
            tensors[name] = Tensor(raw.reshape(shape).copy(), requires_grad=True)
    return ModelParameters(config, tensors), meta
