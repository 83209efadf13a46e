"""Synthetic review corpus with controllable style signatures.

Authors come in two families: a chat-like family full of misspellings and
abbreviations, and a formal family with careful spelling and distinctive
connectives. Every author also gets a personal signature layered on top
of the family: chat authors apply two character-level misspelling
transforms (doubled vowels, dropped letters, transpositions, ...) across
their text, formal authors commit to personal British or American variant
spellings, and both draw personal quirk tokens, function-word weights,
and sentence-ending habits. Same-author documents therefore share dense
surface patterns that different authors of the same family do not, which
makes verification learnable on held-out authors while the two families
stay programmatically distinct.
"""

from __future__ import annotations

import re

import numpy as np

from .corpus import Review

CATEGORIES = ("books", "movies", "music", "kitchen", "electronics", "games")

_TOPIC = {
    "books": ["book", "story", "author", "chapter", "plot", "characters", "novel",
              "pages", "reading", "writing", "ending", "series"],
    "movies": ["movie", "film", "actor", "scenes", "director", "acting", "cast",
               "screen", "drama", "sequel", "trailer", "cinema"],
    "music": ["album", "song", "band", "tracks", "lyrics", "sound", "melody",
              "vocals", "guitar", "rhythm", "tune", "concert"],
    "kitchen": ["pan", "knife", "blade", "handle", "cooking", "dishwasher", "steel",
                "grip", "baking", "oven", "lid", "bowl"],
    "electronics": ["battery", "screen", "cable", "charger", "device", "button",
                    "speaker", "setup", "signal", "remote", "plug", "antenna"],
    "games": ["game", "levels", "puzzle", "player", "controls", "graphics",
              "console", "quest", "score", "cards", "board", "dice"],
}

_COMMON = ["the", "a", "i", "it", "is", "was", "and", "to", "of", "this", "that",
           "for", "with", "my", "on", "really", "good", "great", "bad", "not",
           "but", "so", "they", "we", "you", "have", "had", "just", "very", "one",
           "all", "when", "after", "too", "again", "much", "more", "still"]

_CHAT_QUIRKS = ["definately", "becuase", "recieve", "wierd", "alot", "untill",
                "tommorow", "seperate", "basicly", "prolly", "gr8", "l8r", "luv",
                "kewl", "thx", "plz", "omg", "awsome", "shud", "gotta", "lemme",
                "wanna", "ppl", "srsly"]

_FORMAL_QUIRKS = ["however", "moreover", "therefore", "furthermore", "nevertheless",
                  "consequently", "accordingly", "henceforth", "notwithstanding",
                  "whilst", "amongst", "regrettably", "admittedly", "undoubtedly",
                  "certainly", "precisely", "specifically", "particularly",
                  "essentially", "ultimately", "evidently", "decidedly",
                  "conversely", "likewise"]

_CHAT_FILLERS = ["cuz", "gonna", "u", "ur", "im", "dont", "cant", "soo", "sooo",
                 "btw", "tho", "kinda", "sorta", "yeah", "nah", "haha"]

_FORMAL_FILLERS = ["quite", "rather", "somewhat", "indeed", "truly", "notably",
                   "arguably", "frankly", "broadly", "largely"]

_CHAT_ENDINGS = ["!", "!!", "...", "!?"]
_FORMAL_ENDINGS = [".", ".", ";", "."]

_VOWEL_RE = re.compile(r"[aeiou]")
_DOUBLE_RE = re.compile(r"(.)\1")


def _double_vowel(w: str) -> str:
    m = _VOWEL_RE.search(w)
    return w[:m.start()] + m.group() * 2 + w[m.end():] if m else w


def _drop_final_e(w: str) -> str:
    return w[:-1] if w.endswith("e") and len(w) > 3 else w


def _swap_midchars(w: str) -> str:
    return w[0] + w[2] + w[1] + w[3:] if len(w) >= 4 else w


def _double_final(w: str) -> str:
    return w + w[-1] if w[-1] not in "aeiou" else w


def _collapse_double(w: str) -> str:
    return _DOUBLE_RE.sub(r"\1", w)


# Character-level misspelling patterns for chat-family authors.
_CHAT_TRANSFORMS = [
    _double_vowel,
    _drop_final_e,
    _swap_midchars,
    _double_final,
    _collapse_double,
    lambda w: w.replace("c", "k"),
    lambda w: w.replace("s", "z"),
    lambda w: w[:-3] + "in" if w.endswith("ing") else w,
    lambda w: w[:-2] + "a" if w.endswith("er") else w,
    lambda w: w.replace("oo", "u"),
    lambda w: w.replace("h", "") if "h" in w[1:] else w,
    lambda w: w[:-1] + "i" if w.endswith("y") else w,
]

# American/British variant pairs; formal authors commit to one side per pair.
_VARIANT_PAIRS = [("color", "colour"), ("favorite", "favourite"),
                  ("realize", "realise"), ("theater", "theatre"),
                  ("gray", "grey"), ("flavor", "flavour"), ("honor", "honour"),
                  ("analyze", "analyse"), ("center", "centre"),
                  ("labeled", "labelled"), ("traveling", "travelling"),
                  ("catalog", "catalogue")]


def generate_corpus(num_authors: int = 40, reviews_per_author: int = 14,
                    seed: int = 0, sentences_per_review: tuple[int, int] = (9, 12),
                    words_per_sentence: tuple[int, int] = (9, 13)) -> list[Review]:
    """Build a deterministic corpus of styled reviews.

    The first half of the authors write in the chat family, the second
    half in the formal family. Review lengths land comfortably inside the
    default 80..1000 token filter.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    reviews: list[Review] = []
    for a in range(num_authors):
        chat = a < num_authors // 2
        quirk_pool = _CHAT_QUIRKS if chat else _FORMAL_QUIRKS
        fillers = _CHAT_FILLERS if chat else _FORMAL_FILLERS
        endings = _CHAT_ENDINGS if chat else _FORMAL_ENDINGS
        quirks = list(rng.choice(quirk_pool, size=2, replace=False))
        filler_weights = rng.dirichlet(np.full(len(fillers), 0.2))
        ending_weights = rng.dirichlet(np.full(len(endings), 0.5))
        author_categories = list(rng.choice(CATEGORIES, size=3, replace=False))
        if chat:
            picks = rng.choice(len(_CHAT_TRANSFORMS), size=3, replace=False)
            transforms = [_CHAT_TRANSFORMS[int(t)] for t in picks]
            transform_prob = 0.45
        else:
            transforms = []
            transform_prob = 0.0
        british = rng.random(len(_VARIANT_PAIRS)) < 0.5  # personal variant choices

        def style_word(word: str) -> str:
            if transforms and len(word) >= 3 and word.isalpha() \
                    and rng.random() < transform_prob:
                return transforms[int(rng.integers(len(transforms)))](word)
            return word

        for _ in range(reviews_per_author):
            category = author_categories[int(rng.integers(3))]
            topic = _TOPIC[category]
            sentences = []
            n_sent = int(rng.integers(sentences_per_review[0], sentences_per_review[1] + 1))
            for _ in range(n_sent):
                n_words = int(rng.integers(words_per_sentence[0], words_per_sentence[1] + 1))
                words = []
                for _ in range(n_words):
                    r = rng.random()
                    if r < 0.28:
                        words.append(style_word(topic[int(rng.integers(len(topic)))]))
                    elif r < 0.56:
                        words.append(style_word(_COMMON[int(rng.integers(len(_COMMON)))]))
                    elif r < 0.76:
                        words.append(fillers[int(rng.choice(len(fillers), p=filler_weights))])
                    elif r < 0.92 and not chat:
                        pair = int(rng.integers(len(_VARIANT_PAIRS)))
                        words.append(_VARIANT_PAIRS[pair][int(british[pair])])
                    elif r < 0.92:
                        words.append(style_word(topic[int(rng.integers(len(topic)))]))
                    else:
                        words.append(quirks[int(rng.integers(len(quirks)))])
                if not chat:
                    words[0] = words[0].capitalize()
                ending = endings[int(rng.choice(len(endings), p=ending_weights))]
                sentences.append(" ".join(words) + " " + ending)
            reviews.append(Review.from_text(f"author{a:03d}", category, " ".join(sentences)))
    return reviews
