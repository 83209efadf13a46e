"""Attention-based Siamese authorship verification at desk scale.

Two documents are each encoded by the same hierarchical network
(characters -> words -> sentences -> document features) and compared by
Euclidean distance under a double-threshold decision rule. The package
covers corpus preparation, training, verification, and attention-based
explanation reports, all behind one CLI.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, grad_check, no_grad
from .corpus import PairRecord, Review, filter_reviews, resample_epoch, sample_pairs, \
    split_by_author
from .evaluation import VerificationResult, classify, classify_distance, kendall_tau, \
    top_token_tally, weighted_attention
from .model import ModelConfig, ModelParameters, distance, encode_document, \
    init_parameters, load_checkpoint, save_checkpoint
from .textprep import EncodedDocument, Vocabulary, build_vocab, encode, encode_text, \
    normalize, segment_and_tokenize
from .training import LossConfig, pair_loss, train

__all__ = [
    "Tensor", "backward", "grad_check", "no_grad",
    "PairRecord", "Review", "filter_reviews", "resample_epoch", "sample_pairs",
    "split_by_author",
    "VerificationResult", "classify", "classify_distance", "kendall_tau",
    "top_token_tally", "weighted_attention",
    "ModelConfig", "ModelParameters", "distance", "encode_document",
    "init_parameters", "load_checkpoint", "save_checkpoint",
    "EncodedDocument", "Vocabulary", "build_vocab", "encode", "encode_text",
    "normalize", "segment_and_tokenize",
    "LossConfig", "pair_loss", "train",
]
