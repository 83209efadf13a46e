"""Text normalization, tokenization, vocabulary, and id encoding.

Raw text goes through four steps: universal-token substitution for URLs,
emails, and phone numbers; rule-based sentence segmentation; tokenization
that splits punctuation and English contraction suffixes into their own
tokens; and encoding into padded id grids (word ids per sentence row plus
character ids per word). Rare tokens and characters are pruned from the
vocabulary by frequency thresholds.
"""

from __future__ import annotations

import hashlib
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import CorruptVocabularyError, DomainError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
SENT_END_TOKEN = "<eos>"
LINE_BREAK_TOKEN = "<brk>"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, SENT_END_TOKEN, LINE_BREAK_TOKEN)
PAD_ID, UNK_ID, SENT_END_ID, LINE_BREAK_ID = 0, 1, 2, 3

SPECIAL_CHARS = (PAD_TOKEN, UNK_TOKEN)
CHAR_PAD_ID, CHAR_UNK_ID = 0, 1

URL_TOKEN = "<url>"
EMAIL_TOKEN = "<email>"
PHONE_TOKEN = "<phone>"

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_EMAIL_RE = re.compile(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+")
# Phone shapes need a separator between digit groups, so plain numbers,
# years, and decimals stay untouched.
_PHONE_RE = re.compile(
    r"(?<![\w.])"
    r"(?:\+\d{1,3}[ .-]?)?"
    r"(?:\(\d{2,4}\)[ .-]?)?"
    r"\d{3}[ .-]\d{3,4}(?:[ .-]\d{3,4})?"
    r"(?![\w.])"
)

_SENT_SPLIT_RE = re.compile(r"(?<=[.!?…])\s+|\n\s*\n")
_ELLIPSIS_LEAD_RE = re.compile(r"^(?:\.{2,}|…)")
_ELLIPSIS_TRAIL_RE = re.compile(r"(?:\.{2,}|…)$")
_CONTRACTION_SPLIT_RE = re.compile(r"^(.+?)(n't|'(?:s|m|ve|re|ll|d))$", re.IGNORECASE)
_CONTRACTION_FORMS = frozenset(["n't", "'s", "'m", "'ve", "'re", "'ll", "'d"])
_UNIVERSAL_TOKENS = frozenset([URL_TOKEN, EMAIL_TOKEN, PHONE_TOKEN])
_PUNCT_CHARS = frozenset(string.punctuation + "“”‘’«»–—…")


def normalize(text: str) -> str:
    """Replace URLs, email addresses, and phone numbers with universal tokens."""
    text = _URL_RE.sub(URL_TOKEN, text)
    text = _EMAIL_RE.sub(EMAIL_TOKEN, text)
    text = _PHONE_RE.sub(PHONE_TOKEN, text)
    return text


def _split_chunk(chunk: str) -> list[str]:
    """Split one whitespace-delimited chunk into tokens.

    Edge punctuation becomes standalone tokens (ellipsis runs stay whole),
    contraction suffixes split off, and word-internal punctuation is kept
    ("7-year", "book.5"). Universal tokens pass through untouched.
    """
    lead: list[str] = []
    trail: list[str] = []
    while chunk:
        if chunk in _UNIVERSAL_TOKENS or chunk.lower() in _CONTRACTION_FORMS:
            break
        m = _ELLIPSIS_LEAD_RE.match(chunk)
        if m:
            lead.append(m.group())
            chunk = chunk[m.end():]
            continue
        if chunk[0] in _PUNCT_CHARS:
            lead.append(chunk[0])
            chunk = chunk[1:]
            continue
        break
    while chunk:
        if chunk in _UNIVERSAL_TOKENS or chunk.lower() in _CONTRACTION_FORMS:
            break
        m = _ELLIPSIS_TRAIL_RE.search(chunk)
        if m:
            trail.append(m.group())
            chunk = chunk[:m.start()]
            continue
        if chunk[-1] in _PUNCT_CHARS:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
            continue
        break
    core: list[str] = []
    if chunk:
        m = _CONTRACTION_SPLIT_RE.match(chunk)
        if m and chunk not in _UNIVERSAL_TOKENS:
            core = [m.group(1), m.group(2)]
        else:
            core = [chunk]
    return lead + core + trail[::-1]


def segment_and_tokenize(text: str) -> list[list[str]]:
    """Split normalized text into sentences, each a list of tokens.

    Sentences break after terminal punctuation (. ! ? ...) followed by
    whitespace, and at blank lines. Empty input gives an empty list.
    """
    sentences: list[list[str]] = []
    for raw_sentence in _SENT_SPLIT_RE.split(text):
        tokens: list[str] = []
        for chunk in raw_sentence.split():
            tokens.extend(_split_chunk(chunk))
        if tokens:
            sentences.append(tokens)
    return sentences


def count_tokens(text: str) -> int:
    """Token count of raw text under the full normalize + tokenize pipeline."""
    return sum(len(s) for s in segment_and_tokenize(normalize(text)))


@dataclass
class Vocabulary:
    """Token and character id maps with frequency-pruning provenance.

    Special symbols occupy the lowest ids: tokens <pad>=0, <unk>=1,
    <eos>=2 (sentence end), <brk>=3 (line break); characters <pad>=0,
    <unk>=1. Every retained symbol met its frequency threshold.
    """

    token_to_id: dict[str, int]
    char_to_id: dict[str, int]
    token_freq: dict[str, int]
    char_freq: dict[str, int]
    min_token_freq: int
    min_char_freq: int
    id_to_token: dict[int, str] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.id_to_token = {i: t for t, i in self.token_to_id.items()}
        for literal, expected in zip(SPECIAL_TOKENS, range(4)):
            if self.token_to_id.get(literal) != expected:
                raise CorruptVocabularyError(f"special token {literal!r} missing or misplaced")
        for literal, expected in zip(SPECIAL_CHARS, range(2)):
            if self.char_to_id.get(literal) != expected:
                raise CorruptVocabularyError(f"special character {literal!r} missing or misplaced")
        if len(self.id_to_token) != len(self.token_to_id):
            raise CorruptVocabularyError("token ids are not a bijection")
        if len(set(self.char_to_id.values())) != len(self.char_to_id):
            raise CorruptVocabularyError("character ids are not a bijection")

    @property
    def num_tokens(self) -> int:
        return len(self.token_to_id)

    @property
    def num_chars(self) -> int:
        return len(self.char_to_id)

    def token_id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def char_id(self, ch: str) -> int:
        return self.char_to_id.get(ch, CHAR_UNK_ID)

    def _body_lines(self) -> list[str]:
        lines = ["[tokens]"]
        for token, idx in sorted(self.token_to_id.items(), key=lambda kv: kv[1]):
            lines.append(f"{token}\t{idx}\t{self.token_freq.get(token, 0)}")
        lines.append("[chars]")
        for ch, idx in sorted(self.char_to_id.items(), key=lambda kv: kv[1]):
            lines.append(f"{ch}\t{idx}\t{self.char_freq.get(ch, 0)}")
        return lines

    def content_hash(self) -> str:
        body = "\n".join(self._body_lines())
        return hashlib.sha256(body.encode("utf-8")).hexdigest()

    def save(self, path: str) -> None:
        body = self._body_lines()
        header = (f"# authverify vocabulary v1\tmin_token_freq={self.min_token_freq}"
                  f"\tmin_char_freq={self.min_char_freq}\thash={self.content_hash()}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join([header] + body) + "\n")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or not lines[0].startswith("# authverify vocabulary v1"):
            raise CorruptVocabularyError(f"{path}: unrecognized vocabulary header")
        header_fields = dict(part.split("=", 1) for part in lines[0].split("\t")[1:])
        body = lines[1:]
        digest = hashlib.sha256("\n".join(body).encode("utf-8")).hexdigest()
        if digest != header_fields.get("hash"):
            raise CorruptVocabularyError(f"{path}: content hash mismatch")
        token_to_id: dict[str, int] = {}
        char_to_id: dict[str, int] = {}
        token_freq: dict[str, int] = {}
        char_freq: dict[str, int] = {}
        section = None
        for line in body:
            if line == "[tokens]":
                section = "tokens"
                continue
            if line == "[chars]":
                section = "chars"
                continue
            symbol, idx, freq = line.split("\t")
            if section == "tokens":
                token_to_id[symbol] = int(idx)
                token_freq[symbol] = int(freq)
            elif section == "chars":
                char_to_id[symbol] = int(idx)
                char_freq[symbol] = int(freq)
            else:
                raise CorruptVocabularyError(f"{path}: entry before any section marker")
        return cls(token_to_id, char_to_id, token_freq, char_freq,
                   int(header_fields["min_token_freq"]), int(header_fields["min_char_freq"]))


def build_vocab(corpus: Iterable[Sequence[str]], min_token_freq: int = 20,
                min_char_freq: int = 100) -> Vocabulary:
    """Count symbols over the whole corpus and keep those at or above threshold.

    Ids are assigned deterministically: special symbols first, then by
    descending frequency with lexicographic tie-breaks.
    """
    token_counts: Counter[str] = Counter()
    char_counts: Counter[str] = Counter()
    seen_any = False
    for token_list in corpus:
        seen_any = True
        for token in token_list:
            token_counts[token] += 1
            for ch in token:
                char_counts[ch] += 1
    if not seen_any:
        raise DomainError("build_vocab on an empty corpus")

    token_to_id = {literal: i for i, literal in enumerate(SPECIAL_TOKENS)}
    kept_tokens = sorted(
        (t for t, c in token_counts.items() if c >= min_token_freq and t not in token_to_id),
        key=lambda t: (-token_counts[t], t))
    for t in kept_tokens:
        token_to_id[t] = len(token_to_id)

    char_to_id = {literal: i for i, literal in enumerate(SPECIAL_CHARS)}
    kept_chars = sorted(
        (c for c, n in char_counts.items() if n >= min_char_freq and c not in char_to_id),
        key=lambda c: (-char_counts[c], c))
    for c in kept_chars:
        char_to_id[c] = len(char_to_id)

    return Vocabulary(
        token_to_id, char_to_id,
        {t: token_counts[t] for t in kept_tokens},
        {c: char_counts[c] for c in kept_chars},
        min_token_freq, min_char_freq)


@dataclass
class EncodedDocument:
    """Padded id grids for one document.

    ``word_ids[k][j]`` is the id in sentence row k, slot j; every row ends
    with a sentence-end or line-break id before padding. ``char_ids`` has
    one row of character ids per word slot (all-pad for structural and pad
    slots). ``raw_tokens`` aligns surface strings to non-pad slots, using
    "" for padding. ``word_lengths[k]`` counts real slots in row k,
    including the closing structural token; ``char_lengths[k][j]`` counts
    real characters of the word in that slot.
    """

    word_ids: list[list[int]]
    char_ids: list[list[list[int]]]
    raw_tokens: list[list[str]]
    word_lengths: list[int]
    char_lengths: list[list[int]]
    words_per_row: int
    chars_per_word: int

    @property
    def num_rows(self) -> int:
        return len(self.word_ids)


def encode(doc_tokens: Sequence[Sequence[str]], vocab: Vocabulary,
           words_per_row: int, chars_per_word: int, max_rows: int) -> EncodedDocument:
    """Encode tokenized sentences into a padded EncodedDocument.

    A sentence of at most ``words_per_row - 1`` tokens closes with the
    sentence-end id; a longer one fills ``words_per_row - 1`` slots,
    closes with the line-break id, and continues on the next row. The
    document is truncated to ``max_rows`` rows and each word to
    ``chars_per_word`` characters. Out-of-vocabulary tokens become the
    unknown id but keep their real characters and surface form.
    """
    if words_per_row < 2 or chars_per_word < 2 or max_rows < 2:
        raise DomainError("words_per_row, chars_per_word, and max_rows must each be >= 2")

    rows: list[tuple[list[str], int]] = []  # (surface tokens, closing id)
    for sentence in doc_tokens:
        remaining = list(sentence)
        if not remaining:
            continue
        while len(remaining) > words_per_row - 1:
            rows.append((remaining[:words_per_row - 1], LINE_BREAK_ID))
            remaining = remaining[words_per_row - 1:]
        rows.append((remaining, SENT_END_ID))
    rows = rows[:max_rows]

    word_ids: list[list[int]] = []
    char_ids: list[list[list[int]]] = []
    raw_tokens: list[list[str]] = []
    word_lengths: list[int] = []
    char_lengths: list[list[int]] = []
    pad_chars = [CHAR_PAD_ID] * chars_per_word
    for tokens, closing_id in rows:
        ids = [vocab.token_id(t) for t in tokens] + [closing_id]
        surfaces = list(tokens) + [vocab.id_to_token[closing_id]]
        chars_row: list[list[int]] = []
        clen_row: list[int] = []
        for token in tokens:
            clipped = token[:chars_per_word]
            chars_row.append([vocab.char_id(c) for c in clipped]
                             + [CHAR_PAD_ID] * (chars_per_word - len(clipped)))
            clen_row.append(len(clipped))
        chars_row.append(list(pad_chars))  # structural closer carries no characters
        clen_row.append(0)
        true_len = len(ids)
        pad_count = words_per_row - true_len
        word_ids.append(ids + [PAD_ID] * pad_count)
        raw_tokens.append(surfaces + [""] * pad_count)
        char_ids.append(chars_row + [list(pad_chars) for _ in range(pad_count)])
        char_lengths.append(clen_row + [0] * pad_count)
        word_lengths.append(true_len)

    return EncodedDocument(word_ids, char_ids, raw_tokens, word_lengths,
                           char_lengths, words_per_row, chars_per_word)


def encode_text(text: str, vocab: Vocabulary, words_per_row: int,
                chars_per_word: int, max_rows: int) -> EncodedDocument:
    """Full pipeline from raw text to an EncodedDocument."""
    return encode(segment_and_tokenize(normalize(text)), vocab,
                  words_per_row, chars_per_word, max_rows)
