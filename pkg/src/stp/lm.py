"""Word n-gram language models with add-k or interpolated Kneser-Ney smoothing.

The predicted vocabulary is every training token plus ``<unk>`` and ``</s>``.
``<s>`` only ever appears as left padding.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCorpusError, EmptySentenceError, ParseError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
FORMAT_NAME = "stp-ngram"
FORMAT_VERSION = 1
SMOOTHINGS = ("add_k", "interpolated_kneser_ney")


def _tokens(sentence) -> list[str]:
    return sentence.split() if isinstance(sentence, str) else list(sentence)


@dataclass
class _Level:
    """Counts for one n-gram order: context tuple -> {token id: count}."""

    table: dict = field(default_factory=dict)
    totals: dict = field(default_factory=dict)
    types: dict = field(default_factory=dict)
    discount: float = 0.0


class NGramLM:
    """Smoothed n-gram model over a closed vocabulary.

    Build with :func:`train_ngram_lm`.  ``levels[k]`` holds counts for
    contexts of length ``k`` (so order-``k+1`` n-grams); the top level uses
    raw counts, lower Kneser-Ney levels use continuation counts.
    """

    def __init__(self, order, vocab, levels, smoothing="interpolated_kneser_ney", k=1.0, raw_counts=None):
        self.order = order
        self.vocab = tuple(vocab)
        self.index = {w: i for i, w in enumerate(self.vocab)}
        self.levels = levels
        self.smoothing = smoothing
        self.k = k
        self.unk_id = self.index[UNK]
        self.eos_id = self.index[EOS]
        self._raw_counts = raw_counts
        self._cache: dict = {}

    def __len__(self):
        return len(self.vocab)

    # -- lookup ---------------------------------------------------------------

    def token_id(self, token: str) -> int:
        return self.index.get(token, self.unk_id)

    def _context_ids(self, history) -> tuple:
        n = self.order - 1
        if n == 0:
            return ()
        ids = [self.token_id(t) if t != BOS else -1 for t in history][-n:]
        return (-1,) * (n - len(ids)) + tuple(ids)

    def prob_vector(self, history=()) -> np.ndarray:
        """Next-token distribution over ``self.vocab`` given token history."""
        ctx = self._context_ids(list(history))
        hit = self._cache.get(ctx)
        if hit is not None:
            return hit
        if self.smoothing == "add_k":
            vec = self._add_k(ctx)
        else:
            vec = self._kneser_ney(ctx)
        vec.setflags(write=False)
        if len(self._cache) < 200_000:
            self._cache[ctx] = vec
        return vec

    def prob(self, token: str, history=()) -> float:
        return float(self.prob_vector(history)[self.token_id(token)])

    def logprob(self, token: str, history=()) -> float:
        p = self.prob(token, history)
        return math.log(p) if p > 0 else -math.inf

    def _add_k(self, ctx):
        V = len(self.vocab)
        # longest suffix of the context that was seen in training
        for length in range(len(ctx), -1, -1):
            sub = ctx[len(ctx) - length:]
            level = self.levels[length]
            counts = level.table.get(sub)
            if counts is None and length > 0:
                continue
            total = level.totals.get(sub, 0)
            denom = total + self.k * V
            vec = np.full(V, self.k, dtype=np.float64)
            if counts:
                ids = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
                vals = np.fromiter(counts.values(), dtype=np.float64, count=len(counts))
                vec[ids] += vals
            return vec / denom
        raise AssertionError("unreachable")

    def _kneser_ney(self, ctx):
        V = len(self.vocab)
        vec = np.full(V, 1.0 / V, dtype=np.float64)
        for length in range(0, len(ctx) + 1):
            sub = ctx[len(ctx) - length:]
            level = self.levels[length]
            counts = level.table.get(sub)
            if counts is None:
                break
            total = level.totals[sub]
            D = level.discount
            vec *= D * level.types[sub] / total
            ids = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
            vals = np.fromiter(counts.values(), dtype=np.float64, count=len(counts))
            vec[ids] += (vals - D) / total
        return vec

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "order": self.order,
            "smoothing": self.smoothing,
            "k": self.k,
            "vocab": list(self.vocab),
            "counts": [[list(ng), c] for ng, c in sorted(self._raw_counts.items())],
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def from_dict(cls, obj) -> "NGramLM":
        if obj.get("format") != FORMAT_NAME:
            raise ParseError("not an stp n-gram model")
        if obj.get("version") != FORMAT_VERSION:
            raise ParseError(f"unsupported model version {obj.get('version')}")
        counts = {tuple(ng): int(c) for ng, c in obj["counts"]}
        return _build(obj["order"], obj["vocab"], counts, obj["smoothing"], obj["k"])

    @classmethod
    def load(cls, path) -> "NGramLM":
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad model file: {exc}", path=path) from None
        return cls.from_dict(obj)


def _kn_discount(counts: Iterable[int]) -> float:
    c = Counter(min(x, 3) for x in counts)
    n1, n2 = c[1], c[2]
    if n1 == 0 or n2 == 0:
        return 0.5
    return min(max(n1 / (n1 + 2 * n2), 0.1), 0.9)


def _build(order, vocab, ngram_counts, smoothing, k) -> NGramLM:
    """Assemble per-level tables from top-order n-gram counts.

    ``ngram_counts`` maps id tuples of length ``order`` (context padded with
    -1 for ``<s>``) to counts.
    """
    levels = [_Level() for _ in range(order)]

    def fill(level, grams):
        for gram, c in grams.items():
            ctx, w = gram[:-1], gram[-1]
            level.table.setdefault(ctx, {})[w] = c
        for ctx, row in level.table.items():
            level.totals[ctx] = sum(row.values())
            level.types[ctx] = len(row)

    top = dict(ngram_counts)
    fill(levels[order - 1], top)
    if smoothing == "add_k":
        for n in range(order - 1, 0, -1):
            lower: Counter = Counter()
            for gram, c in top.items():
                lower[gram[1:]] += c
            fill(levels[n - 1], lower)
            top = lower
    else:
        levels[order - 1].discount = _kn_discount(top.values())
        for n in range(order - 1, 0, -1):
            cont: dict = defaultdict(int)
            for gram in top:
                cont[gram[1:]] += 1
            cont = dict(cont)
            fill(levels[n - 1], cont)
            levels[n - 1].discount = _kn_discount(cont.values())
            top = cont
    return NGramLM(order, vocab, levels, smoothing, k, raw_counts=dict(ngram_counts))


def train_ngram_lm(corpus, order: int = 4, smoothing: str = "interpolated_kneser_ney", k: float = 1.0) -> NGramLM:
    """Count n-grams over ``corpus`` (strings or token lists) and smooth them."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if smoothing not in SMOOTHINGS:
        raise ValueError(f"unknown smoothing {smoothing!r}")
    if smoothing == "add_k" and k < 0:
        raise ValueError("k must be non-negative")
    sentences = [_tokens(s) for s in corpus]
    if not sentences:
        raise EmptyCorpusError("corpus is empty")
    words = sorted({w for s in sentences for w in s} - {BOS, EOS, UNK})
    vocab = words + [UNK, EOS]
    index = {w: i for i, w in enumerate(vocab)}
    pad = (-1,) * (order - 1)
    counts: Counter = Counter()
    for sent in sentences:
        ids = pad + tuple(index.get(w, index[UNK]) for w in sent) + (index[EOS],)
        for i in range(order - 1, len(ids)):
            counts[ids[i - order + 1: i + 1]] += 1
    return _build(order, vocab, dict(counts), smoothing, k)


def uniform_lm(tokens: Sequence[str]) -> NGramLM:
    """Unigram model that is uniform over ``tokens`` + ``<unk>`` + ``</s>``."""
    vocab = sorted(set(tokens) - {BOS, EOS, UNK}) + [UNK, EOS]
    return _build(1, vocab, {}, "add_k", 1.0)


def sentence_logprob(lm: NGramLM, sentence) -> tuple[float, int]:
    """Total natural-log probability of ``sentence`` + ``</s>`` and the event count."""
    toks = _tokens(sentence)
    history = [BOS] * (lm.order - 1)
    total = 0.0
    for w in toks + [EOS]:
        p = lm.prob_vector(history)[lm.token_id(w)]
        total += math.log(p) if p > 0 else -math.inf
        history.append(w)
    return total, len(toks) + 1


def perplexity(lm: NGramLM, sentence) -> float:
    if not _tokens(sentence):
        raise EmptySentenceError("cannot score an empty sentence")
    logp, n = sentence_logprob(lm, sentence)
    return math.exp(-logp / n)


def cross_entropy(lm: NGramLM, sentence) -> float:
    """Per-event cross-entropy in nats (log of :func:`perplexity`)."""
    if not _tokens(sentence):
        raise EmptySentenceError("cannot score an empty sentence")
    logp, n = sentence_logprob(lm, sentence)
    return -logp / n
