"""Naive Bayes language identifier over character 1- to 4-grams."""

from __future__ import annotations

import json
import math
from collections import Counter
from typing import Mapping

import numpy as np

from .errors import EmptyTextError, InsufficientLanguagesError, ParseError

FORMAT_NAME = "stp-langid"
FORMAT_VERSION = 1


def char_ngrams(text: str, n_min: int = 1, n_max: int = 4) -> Counter:
    padded = " " + " ".join(text.split()) + " "
    grams: Counter = Counter()
    for n in range(n_min, n_max + 1):
        for i in range(len(padded) - n + 1):
            grams[padded[i:i + n]] += 1
    return grams


class LangIdModel:
    """Per-language add-1 smoothed n-gram log-likelihoods with a uniform prior.

    Every unseen n-gram gets the same per-language "unknown" log-probability,
    so labels are compared on the n-grams they actually saw.
    """

    def __init__(self, languages, counts: Mapping[str, Counter], n_min=1, n_max=4):
        self.languages = tuple(languages)
        self.n_min = n_min
        self.n_max = n_max
        self.counts = {lang: Counter(counts[lang]) for lang in self.languages}
        features = set()
        for c in self.counts.values():
            features.update(c)
        # +1 for the shared unknown n-gram
        self.num_features = len(features) + 1
        self.feature_index = {g: i for i, g in enumerate(sorted(features))}
        L = len(self.languages)
        self.table = np.empty((L, self.num_features), dtype=np.float64)
        for li, lang in enumerate(self.languages):
            c = self.counts[lang]
            denom = sum(c.values()) + self.num_features
            row = np.ones(self.num_features)
            for g, v in c.items():
                row[self.feature_index[g]] += v
            self.table[li] = np.log(row / denom)
        self.unk_col = self.num_features - 1

    def log_likelihoods(self, text: str) -> np.ndarray:
        grams = char_ngrams(text, self.n_min, self.n_max)
        cols = np.fromiter((self.feature_index.get(g, self.unk_col) for g in grams), dtype=np.int64, count=len(grams))
        weights = np.fromiter(grams.values(), dtype=np.float64, count=len(grams))
        return self.table[:, cols] @ weights

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "n_range": [self.n_min, self.n_max],
            "languages": list(self.languages),
            "counts": {lang: dict(sorted(self.counts[lang].items())) for lang in self.languages},
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def from_dict(cls, obj) -> "LangIdModel":
        if obj.get("format") != FORMAT_NAME or obj.get("version") != FORMAT_VERSION:
            raise ParseError("not a supported stp langid model")
        n_min, n_max = obj["n_range"]
        return cls(obj["languages"], {k: Counter(v) for k, v in obj["counts"].items()}, n_min, n_max)

    @classmethod
    def load(cls, path) -> "LangIdModel":
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad langid file: {exc}", path=path) from None
        return cls.from_dict(obj)


def train_langid(labeled_corpora: Mapping[str, str | list[str]], n_min: int = 1, n_max: int = 4) -> LangIdModel:
    """Fit one character n-gram table per language.

    Values may be a single text or a list of sentences.  Labels are kept in
    sorted order, which is also the tie-break order at classification.
    """
    if len(labeled_corpora) < 2:
        raise InsufficientLanguagesError("language ID needs at least two languages")
    counts = {}
    for lang, text in labeled_corpora.items():
        lines = [text] if isinstance(text, str) else list(text)
        c: Counter = Counter()
        for line in lines:
            if line.strip():
                c.update(char_ngrams(line, n_min, n_max))
        if not c:
            raise InsufficientLanguagesError(f"no training text for language {lang!r}")
        counts[lang] = c
    return LangIdModel(sorted(counts), counts, n_min, n_max)


def classify_language(model: LangIdModel, text: str) -> tuple[str, float]:
    """Return the most likely label and its posterior under a uniform prior."""
    if not text.strip():
        raise EmptyTextError("cannot identify the language of empty text")
    ll = model.log_likelihoods(text)
    best = int(np.argmax(ll))  # first maximum == label-order tie-break
    post = 1.0 / math.fsum(np.exp(ll - ll[best]))
    return model.languages[best], post
