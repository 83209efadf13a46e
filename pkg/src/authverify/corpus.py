"""Review corpus protocol: filtering, author-disjoint folds, pair sampling.

Reviews carry an author id and a topical category. Document pairs are
labeled (a, c): a=1 when both reviews share an author, c=1 when they share
a category. Training consumes balanced samples with the same number of
pairs for each of the four labels, resampled every epoch.
"""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, FeasibilityError
from .textprep import count_tokens

LABELS = ((1, 1), (1, 0), (0, 1), (0, 0))


@dataclass
class Review:
    author_id: str
    category: str
    text: str
    token_count: int

    @classmethod
    def from_text(cls, author_id: str, category: str, text: str) -> "Review":
        if not category:
            raise DomainError("review category must be non-empty")
        return cls(author_id, category, text, count_tokens(text))


@dataclass(frozen=True)
class PairRecord:
    """Two reviews (as indices into one review list) and their label tuple."""

    doc1: int
    doc2: int
    a: int
    c: int


def load_reviews(path: str) -> list[Review]:
    """Read reviews from JSON Lines ({"author_id", "category", "text"})."""
    reviews = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                reviews.append(Review.from_text(obj["author_id"], obj["category"], obj["text"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DomainError(f"{path}:{line_no}: bad review record: {exc}") from exc
    return reviews


def save_reviews(path: str, reviews: Sequence[Review]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reviews:
            fh.write(json.dumps({"author_id": r.author_id, "category": r.category,
                                 "text": r.text}, ensure_ascii=False) + "\n")


def corpus_hash(reviews: Sequence[Review]) -> str:
    h = hashlib.sha256()
    for r in reviews:
        h.update(f"{r.author_id}\x1f{r.category}\x1f{r.text}\x1e".encode("utf-8"))
    return h.hexdigest()


def filter_reviews(reviews: Sequence[Review], min_tokens: int = 80,
                   max_tokens: int = 1000) -> list[Review]:
    """Keep reviews whose token count lies in [min_tokens, max_tokens], inclusive."""
    return [r for r in reviews if min_tokens <= r.token_count <= max_tokens]


def split_by_author(reviews: Sequence[Review], fold_count: int, seed: int) -> list[list[Review]]:
    """Partition reviews into folds with no author spanning two folds.

    Authors are shuffled deterministically by seed and dealt round-robin,
    so fold author counts differ by at most one.
    """
    if fold_count < 2:
        raise DomainError(f"fold_count must be >= 2, got {fold_count}")
    authors = sorted({r.author_id for r in reviews})
    if len(authors) < fold_count:
        raise DomainError(f"need at least {fold_count} authors, have {len(authors)}")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    order = rng.permutation(len(authors))
    fold_of = {authors[int(j)]: i % fold_count for i, j in enumerate(order)}
    folds: list[list[Review]] = [[] for _ in range(fold_count)]
    for r in reviews:
        folds[fold_of[r.author_id]].append(r)
    return folds


def _label_of(fold: Sequence[Review], i: int, j: int) -> tuple[int, int]:
    return (int(fold[i].author_id == fold[j].author_id),
            int(fold[i].category == fold[j].category))


class _FoldIndex:
    def __init__(self, fold: Sequence[Review]):
        self.fold = fold
        self.by_author: dict[str, list[int]] = defaultdict(list)
        self.by_author_cat: dict[tuple[str, str], list[int]] = defaultdict(list)
        self.by_cat: dict[str, list[int]] = defaultdict(list)
        for i, r in enumerate(fold):
            self.by_author[r.author_id].append(i)
            self.by_author_cat[(r.author_id, r.category)].append(i)
            self.by_cat[r.category].append(i)
        self.authors = sorted(self.by_author)

    def feasible(self, label: tuple[int, int]) -> bool:
        if label == (1, 1):
            return any(len(v) >= 2 for v in self.by_author_cat.values())
        if label == (1, 0):
            return any(len({self.fold[i].category for i in idxs}) >= 2
                       for idxs in self.by_author.values())
        if label == (0, 1):
            return any(len({self.fold[i].author_id for i in idxs}) >= 2
                       for idxs in self.by_cat.values())
        combos = {(r.author_id, r.category) for r in self.fold}
        return any(a1 != a2 and c1 != c2 for a1, c1 in combos for a2, c2 in combos)


def sample_pairs(fold: Sequence[Review], pairs_per_label: int, seed,
                 min_per_author: int = 1) -> list[PairRecord]:
    """Draw exactly ``pairs_per_label`` pairs for each of the four labels.

    No unordered pair repeats within one sample. Where feasible, every
    author appears in at least ``min_per_author`` pairs per label before
    the rest of the quota is filled at random. Raises FeasibilityError if
    a nonzero quota cannot be met, naming the label.
    """
    if pairs_per_label < 0:
        raise DomainError("pairs_per_label must be >= 0")
    idx = _FoldIndex(fold)
    infeasible = [lab for lab in LABELS if pairs_per_label > 0 and not idx.feasible(lab)]
    if infeasible:
        raise FeasibilityError(f"labels {infeasible} are infeasible on this fold")

    rng = np.random.default_rng(seed if isinstance(seed, np.random.SeedSequence)
                                else np.random.SeedSequence([int(seed)]))
    used: set[tuple[int, int]] = set()
    out: dict[tuple[int, int], list[PairRecord]] = {lab: [] for lab in LABELS}

    def choice(items):
        return items[int(rng.integers(len(items)))]

    def try_add(label: tuple[int, int], i: int, j: int) -> bool:
        if i == j:
            return False
        key = (min(i, j), max(i, j))
        if key in used or _label_of(fold, i, j) != label:
            return False
        used.add(key)
        out[label].append(PairRecord(i, j, label[0], label[1]))
        return True

    def draw(label: tuple[int, int], author: str | None) -> bool:
        a, c = label
        for _ in range(200):
            if a == 1:
                au = author if author is not None else choice(idx.authors)
                docs = idx.by_author[au]
                if len(docs) < 2:
                    return False
                i, j = (int(k) for k in rng.choice(len(docs), size=2, replace=False))
                if try_add(label, docs[i], docs[j]):
                    return True
            else:
                i = (choice(idx.by_author[author]) if author is not None
                     else int(rng.integers(len(fold))))
                j = int(rng.integers(len(fold)))
                if try_add(label, i, j):
                    return True
        return False

    # Guaranteed per-author minimum first, then random fill.
    for label in LABELS:
        if pairs_per_label == 0:
            continue
        order = [idx.authors[int(k)] for k in rng.permutation(len(idx.authors))]
        for author in order:
            for _ in range(min_per_author):
                if len(out[label]) >= pairs_per_label:
                    break
                draw(label, author)
        stalls = 0
        while len(out[label]) < pairs_per_label:
            if draw(label, None):
                stalls = 0
            else:
                stalls += 1
                if stalls > 50:
                    raise FeasibilityError(
                        f"cannot reach {pairs_per_label} unique pairs for label {label}")
    return [p for lab in LABELS for p in out[lab]]


def resample_epoch(fold: Sequence[Review], epoch_index: int, base_seed: int,
                   pairs_per_label: int, min_per_author: int = 1) -> list[PairRecord]:
    """Epoch-specific balanced sample: deterministic in (base_seed, epoch_index)."""
    seed = np.random.SeedSequence([int(base_seed), int(epoch_index)])
    return sample_pairs(fold, pairs_per_label, seed, min_per_author)


def write_pairs(path: str, pairs: Sequence[PairRecord]) -> None:
    """Write pairs as JSON Lines ({"doc1_idx", "doc2_idx", "a", "c"})."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"doc1_idx": p.doc1, "doc2_idx": p.doc2,
                                 "a": p.a, "c": p.c}) + "\n")


def read_pairs(path: str) -> list[PairRecord]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                pairs.append(PairRecord(obj["doc1_idx"], obj["doc2_idx"], obj["a"], obj["c"]))
    return pairs
