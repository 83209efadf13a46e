"""Command-line workflow: corpus building, training, evaluation, reports.

Every subcommand writes a run manifest (command, arguments, seed, input
hashes, outputs, timestamp) next to its outputs, so a run can be replayed
from the manifest alone. Exit codes: 0 success, 1 usage error, 2 data or
model error.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from . import autodiff as ad
from . import corpus as corpus_mod
from . import report
from .errors import CorruptVocabularyError, DimensionError, DomainError, \
    EvaluationError, FeasibilityError
from .evaluation import classify_distance, error_table, high_reliability_table, \
    kendall_tau, top_token_tally, weighted_attention
from .model import ModelConfig, encode_document, init_parameters, \
    import_word_embeddings, load_checkpoint
from .synth import generate_corpus
from .textprep import Vocabulary, build_vocab, encode_text, normalize, \
    segment_and_tokenize
from .training import LossConfig, train

_DATA_ERRORS = (DomainError, DimensionError, EvaluationError, FeasibilityError,
                CorruptVocabularyError, OSError, KeyError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path: str, command: str, arguments: dict,
                    inputs: list[str], outputs: list[str], seed) -> None:
    manifest = {
        "artifact_version": __version__,
        "command": command,
        "created_utc": datetime.datetime.now(datetime.timezone.utc)
                               .isoformat(timespec="seconds"),
        "seed": seed,
        "arguments": arguments,
        "input_hashes": {p: _sha256_file(p) for p in inputs},
        "outputs": outputs,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_model(checkpoint_path: str, vocab_path: str):
    params, meta = load_checkpoint(checkpoint_path)
    vocab = Vocabulary.load(vocab_path)
    if meta.get("vocab_hash") and meta["vocab_hash"] != vocab.content_hash():
        raise DomainError(
            f"vocabulary {vocab_path} does not match checkpoint {checkpoint_path}")
    encode_dims = meta.get("encode", {"words_per_row": 32, "chars_per_word": 16,
                                      "max_rows": 50})
    return params, vocab, meta, encode_dims


def _thresholds(args, meta) -> tuple[float, float]:
    tau_s = args.tau_s if args.tau_s is not None else float(meta.get("tau_s", 1.0))
    tau_d = args.tau_d if args.tau_d is not None else float(meta.get("tau_d", 3.0))
    return tau_s, tau_d


def _encode_file(path: str, vocab: Vocabulary, dims: dict):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    doc = encode_text(text, vocab, dims["words_per_row"], dims["chars_per_word"],
                      dims["max_rows"])
    if doc.num_rows == 0:
        raise DomainError(f"{path}: no sentences after preprocessing")
    return doc


# ---------------------------------------------------------------------------
# subcommands


def cmd_make_synthetic(args) -> int:
    reviews = generate_corpus(args.authors, args.reviews_per_author, args.seed)
    corpus_mod.save_reviews(args.output, reviews)
    _write_manifest(args.output + ".manifest.json", "make-synthetic",
                    {"authors": args.authors, "reviews_per_author": args.reviews_per_author,
                     "output": args.output},
                    [], [args.output], args.seed)
    print(f"wrote {len(reviews)} reviews to {args.output}")
    return 0


def cmd_build_corpus(args) -> int:
    reviews = corpus_mod.load_reviews(args.input)
    kept = corpus_mod.filter_reviews(reviews, args.min_tokens, args.max_tokens)
    if not kept:
        raise DomainError("no reviews survive the token-count filter")
    folds = corpus_mod.split_by_author(kept, args.folds, args.seed)
    os.makedirs(args.output_dir, exist_ok=True)
    outputs = []
    fold_summaries = []
    for i, fold in enumerate(folds):
        fold_path = os.path.join(args.output_dir, f"fold_{i}.jsonl")
        pairs_path = os.path.join(args.output_dir, f"pairs_{i}.jsonl")
        corpus_mod.save_reviews(fold_path, fold)
        pairs = corpus_mod.sample_pairs(fold, args.pairs_per_label,
                                        np.random.SeedSequence([args.seed, i]),
                                        args.min_per_author)
        corpus_mod.write_pairs(pairs_path, pairs)
        outputs += [fold_path, pairs_path]
        fold_summaries.append({"fold": i, "reviews": len(fold), "pairs": len(pairs),
                               "authors": len({r.author_id for r in fold})})
    manifest_path = os.path.join(args.output_dir, "manifest.json")
    _write_manifest(manifest_path, "build-corpus",
                    {"input": args.input, "folds": args.folds,
                     "pairs_per_label": args.pairs_per_label,
                     "min_tokens": args.min_tokens, "max_tokens": args.max_tokens,
                     "min_per_author": args.min_per_author,
                     "corpus_hash": corpus_mod.corpus_hash(kept),
                     "fold_summaries": fold_summaries},
                    [args.input], outputs, args.seed)
    print(f"kept {len(kept)}/{len(reviews)} reviews; "
          f"{args.folds} folds written to {args.output_dir}")
    return 0


def cmd_train(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        config = json.load(fh)
    loss_cfg = LossConfig(**config["loss"])
    if args.seed is not None:
        loss_cfg.seed = args.seed
    out_dir = args.output or config.get("output_dir", "run")
    os.makedirs(out_dir, exist_ok=True)

    reviews = corpus_mod.load_reviews(config["reviews"])
    filt = config.get("filter", {})
    kept = corpus_mod.filter_reviews(reviews, filt.get("min_tokens", 80),
                                     filt.get("max_tokens", 1000))
    folds = corpus_mod.split_by_author(kept, config.get("fold_count", 5),
                                       config.get("split_seed", loss_cfg.seed))
    train_fold = folds[config.get("train_fold", 0)]
    dev_fold = folds[config.get("dev_fold", 1)]

    vocab_opts = config.get("vocab", {})
    vocab = build_vocab(
        (sent for r in train_fold for sent in segment_and_tokenize(normalize(r.text))),
        vocab_opts.get("min_token_freq", 20), vocab_opts.get("min_char_freq", 100))
    vocab_path = os.path.join(out_dir, "vocab.tsv")
    vocab.save(vocab_path)

    model_cfg = ModelConfig(**config.get("model", {}),
                            num_tokens=vocab.num_tokens, num_chars=vocab.num_chars)
    enc = config.get("encode", {})
    enc_dims = {"words_per_row": enc.get("words_per_row", 32),
                "chars_per_word": enc.get("chars_per_word", 16),
                "max_rows": enc.get("max_rows", 50)}

    initial = init_parameters(model_cfg, loss_cfg.seed)
    if config.get("pretrained_embeddings"):
        n = import_word_embeddings(initial, vocab, config["pretrained_embeddings"])
        print(f"imported {n} pretrained embedding rows")

    _, history = train(
        train_fold, dev_fold, vocab, model_cfg, loss_cfg,
        words_per_row=enc_dims["words_per_row"],
        chars_per_word=enc_dims["chars_per_word"], max_rows=enc_dims["max_rows"],
        pairs_per_label=config.get("pairs_per_label", 200),
        dev_pairs_per_label=config.get("dev_pairs_per_label", 50),
        min_per_author=config.get("min_per_author", 1),
        out_dir=out_dir, initial_params=initial,
        target_dev_error=config.get("target_dev_error"),
        log=lambda msg: print(msg, flush=True))

    history_path = os.path.join(out_dir, "history.csv")
    report.write_history_csv(history_path, history)
    outputs = [history_path, vocab_path,
               os.path.join(out_dir, "final.ckpt"), os.path.join(out_dir, "best.ckpt")]
    _write_manifest(os.path.join(out_dir, "manifest.json"), "train",
                    {"config": args.config, "resolved": config,
                     "loss": vars(loss_cfg), "encode": enc_dims},
                    [args.config, config["reviews"]],
                    [p for p in outputs if os.path.exists(p)], loss_cfg.seed)
    print(f"final dev error {history[-1]['dev_error_overall']:.3f} "
          f"after {len(history)} epochs; outputs in {out_dir}")
    return 0


def _verify_pair(args):
    params, vocab, meta, dims = _load_model(args.checkpoint, args.vocab)
    tau_s, tau_d = _thresholds(args, meta)
    doc1 = _encode_file(args.file_a, vocab, dims)
    doc2 = _encode_file(args.file_b, vocab, dims)
    with ad.no_grad():
        feat1 = encode_document(doc1, params)
        feat2 = encode_document(doc2, params)
    d = float(np.linalg.norm(feat1.y.data - feat2.y.data))
    return params, vocab, meta, doc1, doc2, feat1, feat2, classify_distance(d, tau_s, tau_d)


def cmd_verify(args) -> int:
    *_, result = _verify_pair(args)
    line = f"distance {result.distance:.6f}, {result.decision}, {result.reliability}"
    print(line)
    out = args.output
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(line + "\n")
    manifest_path = (out + ".manifest.json") if out else "verify.manifest.json"
    _write_manifest(manifest_path, "verify",
                    {"file_a": args.file_a, "file_b": args.file_b,
                     "checkpoint": args.checkpoint, "vocab": args.vocab,
                     "tau_s": result.tau_s, "tau_d": result.tau_d},
                    [args.file_a, args.file_b, args.checkpoint, args.vocab],
                    [out] if out else [], None)
    return 0


def cmd_heatmap(args) -> int:
    _, _, _, doc1, doc2, feat1, feat2, result = _verify_pair(args)
    page = report.render_heatmap(
        report.HeatmapDocument(weighted_attention(feat1.attention, doc1),
                               feat1.attention.sentence_weights,
                               os.path.basename(args.file_a)),
        report.HeatmapDocument(weighted_attention(feat2.attention, doc2),
                               feat2.attention.sentence_weights,
                               os.path.basename(args.file_b)),
        result)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(page)
    _write_manifest(args.output + ".manifest.json", "heatmap",
                    {"file_a": args.file_a, "file_b": args.file_b,
                     "checkpoint": args.checkpoint, "vocab": args.vocab,
                     "tau_s": result.tau_s, "tau_d": result.tau_d,
                     "output": args.output},
                    [args.file_a, args.file_b, args.checkpoint, args.vocab],
                    [args.output], None)
    print(f"distance {result.distance:.6f}, {result.decision}, {result.reliability}")
    print(f"heatmap written to {args.output}")
    return 0


def cmd_evaluate(args) -> int:
    params, vocab, meta, dims = _load_model(args.checkpoint, args.vocab)
    tau_s, tau_d = _thresholds(args, meta)
    reviews = corpus_mod.load_reviews(args.reviews)
    pairs = corpus_mod.read_pairs(args.pairs)
    os.makedirs(args.output, exist_ok=True)

    needed = sorted({i for p in pairs for i in (p.doc1, p.doc2)})
    docs = {}
    feats = {}
    with ad.no_grad():
        for i in needed:
            docs[i] = encode_text(reviews[i].text, vocab, dims["words_per_row"],
                                  dims["chars_per_word"], dims["max_rows"])
            feats[i] = encode_document(docs[i], params)

    results = []
    distances = []
    for p in pairs:
        d = float(np.linalg.norm(feats[p.doc1].y.data - feats[p.doc2].y.data))
        distances.append(d)
        results.append((classify_distance(d, tau_s, tau_d), p))

    errors = error_table(results)
    reliability = high_reliability_table(results)
    tally = top_token_tally(
        [weighted_attention(feats[i].attention, docs[i]) for i in needed], top_n=5)

    paths = {
        "error": os.path.join(args.output, "error_table.csv"),
        "error_fig": os.path.join(args.output, "error_rates.png"),
        "rel": os.path.join(args.output, "high_reliability.csv"),
        "tally": os.path.join(args.output, "top_tokens.csv"),
        "tally_fig": os.path.join(args.output, "top_tokens.png"),
        "dist_fig": os.path.join(args.output, "distances.png"),
    }
    report.write_error_table_csv(paths["error"], errors)
    report.write_reliability_csv(paths["rel"], reliability)
    report.write_tally_csv(paths["tally"], tally)
    report.save_error_figure(paths["error_fig"], errors)
    report.save_tally_figure(paths["tally_fig"], tally)
    report.save_distance_figure(paths["dist_fig"], distances, tau_s, tau_d)
    _write_manifest(os.path.join(args.output, "manifest.json"), "evaluate",
                    {"checkpoint": args.checkpoint, "vocab": args.vocab,
                     "reviews": args.reviews, "pairs": args.pairs,
                     "tau_s": tau_s, "tau_d": tau_d},
                    [args.checkpoint, args.vocab, args.reviews, args.pairs],
                    list(paths.values()), None)
    overall = errors[0]
    rel_overall = reliability[0]
    print(f"overall error {100.0 * overall.error_rate:.2f}% on {overall.instances} pairs")
    frac = rel_overall.retained_fraction or 0.0
    rate = rel_overall.error_rate
    print(f"high-reliability subset: {100.0 * frac:.2f}% of pairs, "
          f"error {('%.2f%%' % (100.0 * rate)) if rate is not None else 'n/a'}")
    return 0


def cmd_correlate(args) -> int:
    params1, meta1 = load_checkpoint(args.checkpoint_a)
    params2, meta2 = load_checkpoint(args.checkpoint_b)
    vocab = Vocabulary.load(args.vocab)
    for name, meta in (("first", meta1), ("second", meta2)):
        if meta.get("vocab_hash") and meta["vocab_hash"] != vocab.content_hash():
            raise DomainError(f"{name} checkpoint was trained with a different vocabulary")
    dims = meta1.get("encode", {"words_per_row": 32, "chars_per_word": 16, "max_rows": 50})
    reviews = corpus_mod.load_reviews(args.docs)
    os.makedirs(args.output, exist_ok=True)

    taus, ps, skipped = [], [], 0
    with ad.no_grad():
        for r in reviews:
            doc = encode_text(r.text, vocab, dims["words_per_row"],
                              dims["chars_per_word"], dims["max_rows"])
            if doc.num_rows == 0:
                skipped += 1
                continue
            wa1 = weighted_attention(encode_document(doc, params1).attention, doc)
            wa2 = weighted_attention(encode_document(doc, params2).attention, doc)
            w1 = [e.weight for e in wa1.entries]
            w2 = [e.weight for e in wa2.entries]
            try:
                tau, p = kendall_tau(w1, w2)
            except DomainError:
                skipped += 1
                continue
            taus.append(tau)
            ps.append(p)
    if not taus:
        raise DomainError("no documents produced a comparable attention ranking")

    paths = [os.path.join(args.output, "taus.csv"),
             os.path.join(args.output, "tau_histogram.csv"),
             os.path.join(args.output, "tau_histogram.png")]
    report.write_tau_csv(paths[0], taus, ps)
    report.write_tau_histogram_csv(paths[1], taus)
    report.save_tau_histogram_figure(paths[2], taus)
    _write_manifest(os.path.join(args.output, "manifest.json"), "correlate",
                    {"checkpoint_a": args.checkpoint_a, "checkpoint_b": args.checkpoint_b,
                     "docs": args.docs, "vocab": args.vocab, "skipped": skipped},
                    [args.checkpoint_a, args.checkpoint_b, args.docs, args.vocab],
                    paths, None)
    arr = np.asarray(taus)
    significant = float(np.mean(np.asarray(ps) <= 0.01))
    print(f"rank correlation over {len(taus)} documents: "
          f"{arr.mean():.3f} +/- {arr.std():.3f}; "
          f"{100.0 * significant:.1f}% significant at p <= 0.01")
    return 0


def cmd_export_features(args) -> int:
    params, vocab, _, dims = _load_model(args.checkpoint, args.vocab)
    reviews = corpus_mod.load_reviews(args.docs)
    if not reviews:
        raise DomainError(f"{args.docs}: no documents")
    features = []
    with ad.no_grad():
        for r in reviews:
            doc = encode_text(r.text, vocab, dims["words_per_row"],
                              dims["chars_per_word"], dims["max_rows"])
            features.append(encode_document(doc, params).y.data.copy())
    matrix = np.stack(features)
    report.write_features_csv(args.output, [f"doc{i}" for i in range(len(reviews))],
                              [r.author_id for r in reviews], matrix)
    _write_manifest(args.output + ".manifest.json", "export-features",
                    {"checkpoint": args.checkpoint, "vocab": args.vocab,
                     "docs": args.docs, "output": args.output},
                    [args.checkpoint, args.vocab, args.docs], [args.output], None)
    print(f"wrote {matrix.shape[0]} x {matrix.shape[1]} feature matrix to {args.output}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="authverify",
                     description="attention-based Siamese authorship verification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="generate a styled synthetic review corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--authors", type=int, default=40)
    p.add_argument("--reviews-per-author", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("build-corpus", help="filter reviews, split by author, sample pairs")
    p.add_argument("--input", required=True, help="reviews JSONL")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs-per-label", type=int, default=100)
    p.add_argument("--min-tokens", type=int, default=80)
    p.add_argument("--max-tokens", type=int, default=1000)
    p.add_argument("--min-per-author", type=int, default=1)
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("train", help="train the verifier from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("-o", "--output", default=None, help="override the output directory")
    p.set_defaults(func=cmd_train)

    def scoring_args(q, output_required=False):
        q.add_argument("--checkpoint", required=True)
        q.add_argument("--vocab", required=True)
        q.add_argument("--tau-s", type=float, default=None)
        q.add_argument("--tau-d", type=float, default=None)
        if output_required:
            q.add_argument("-o", "--output", required=True)
        else:
            q.add_argument("-o", "--output", default=None)

    p = sub.add_parser("verify", help="compare two text files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    scoring_args(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("heatmap", help="attention heatmap HTML for two text files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    scoring_args(p, output_required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("evaluate", help="error tables and report figures for labeled pairs")
    p.add_argument("--reviews", required=True)
    p.add_argument("--pairs", required=True)
    scoring_args(p, output_required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("correlate", help="rank-correlate attention between two runs")
    p.add_argument("checkpoint_a")
    p.add_argument("checkpoint_b")
    p.add_argument("--docs", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("export-features", help="write document feature vectors to CSV")
    p.add_argument("--docs", required=True)
    scoring_args(p, output_required=True)
    p.set_defaults(func=cmd_export_features)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
