"""Beam search over abstract next-token scorers.

A scorer is anything with ``vocab`` (token strings indexed by id), ``eos``
(end-symbol id) and three methods:

* ``init(context) -> state``
* ``step(state, token_id) -> state``
* ``posteriors(state) -> np.ndarray`` (non-negative, sums to one)

Ensembling averages member posteriors in probability space; decoding then
accumulates log probabilities of the averaged distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from .errors import EmptyEnsembleError, SearchSpaceTooLargeError, VocabMismatchError
from .lm import BOS, EOS, NGramLM

# beam widths used for each model family
ASR_BEAM = 10
ST_BEAM = 4
MT_BEAM = 4
MULTI_DECODER_BEAMS = (16, 10)

EXHAUSTIVE_LIMIT = 10 ** 7


class Scorer(Protocol):
    vocab: Sequence[str]
    eos: int

    def init(self, context: Any) -> Any: ...

    def step(self, state: Any, token: int) -> Any: ...

    def posteriors(self, state: Any) -> np.ndarray: ...


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    log_score: float
    state: Any = None
    finished: bool = False

    def score(self, length_norm: bool = False) -> float:
        if length_norm and self.tokens:
            return self.log_score / len(self.tokens)
        return self.log_score


@dataclass(frozen=True)
class DecodeConfig:
    beam_width: int = ASR_BEAM
    max_len: int = 100
    end_symbol: int | None = None
    length_norm: bool = False

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


# ---------------------------------------------------------------------------
# scorers
# ---------------------------------------------------------------------------

class EnsembleScorer:
    """Arithmetic mean of member posteriors; state is the tuple of member states."""

    def __init__(self, members: Sequence[Scorer]):
        members = tuple(members)
        if not members:
            raise EmptyEnsembleError("ensemble needs at least one scorer")
        vocab = tuple(members[0].vocab)
        for m in members[1:]:
            if tuple(m.vocab) != vocab:
                raise VocabMismatchError("ensemble members must share one vocabulary")
            if m.eos != members[0].eos:
                raise VocabMismatchError("ensemble members disagree on the end symbol")
        self.members = members
        self.vocab = vocab
        self.eos = members[0].eos

    def init(self, context):
        return tuple(m.init(context) for m in self.members)

    def step(self, state, token):
        return tuple(m.step(s, token) for m, s in zip(self.members, state))

    def posteriors(self, state):
        if len(self.members) == 1:
            return np.asarray(self.members[0].posteriors(state[0]), dtype=np.float64)
        stacked = np.stack([np.asarray(m.posteriors(s), dtype=np.float64) for m, s in zip(self.members, state)])
        return stacked.sum(axis=0) / len(self.members)


def ensemble(scorers: Sequence[Scorer]) -> EnsembleScorer:
    return EnsembleScorer(scorers)


class NGramScorer:
    """Next-token posteriors from an :class:`NGramLM`.

    The history starts with ``<s>`` padding, then the optional conditioning
    sequence, then the ``context`` given to :meth:`init` (a token sequence or
    whitespace-separated string), then the decoded tokens.
    """

    def __init__(self, lm: NGramLM, conditioning: Sequence[str] | None = None):
        self.lm = lm
        self.vocab = lm.vocab
        self.eos = lm.eos_id
        self.conditioning = tuple(conditioning or ())
        self._keep = max(lm.order - 1, 0)

    def _trim(self, hist):
        return tuple(hist[len(hist) - self._keep:]) if self._keep else ()

    def init(self, context=None):
        if isinstance(context, str):
            context = context.split()
        hist = (BOS,) * self._keep + self.conditioning + tuple(context or ())
        return self._trim(hist)

    def step(self, state, token):
        return self._trim(state + (self.vocab[token],))

    def posteriors(self, state):
        return self.lm.prob_vector(state)


def make_ngram_scorer(lm: NGramLM, conditioning: Sequence[str] | None = None) -> NGramScorer:
    return NGramScorer(lm, conditioning)


class CopyScorer:
    """Emits a fixed token sequence with probability one, then the end symbol."""

    def __init__(self, vocab: Sequence[str], eos: int, tokens: Sequence[int]):
        self.vocab = tuple(vocab)
        self.eos = eos
        self.tokens = tuple(tokens)

    def init(self, context=None):
        return 0

    def step(self, state, token):
        return state + 1

    def posteriors(self, state):
        p = np.zeros(len(self.vocab))
        p[self.tokens[state] if state < len(self.tokens) else self.eos] = 1.0
        return p


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

def _rank(hyps, length_norm):
    return sorted(hyps, key=lambda h: (-h.score(length_norm), h.tokens))


def beam_search(scorer: Scorer, context, cfg: DecodeConfig) -> list[Hypothesis]:
    """Return finished and surviving hypotheses, best first.

    Each step expands every live hypothesis over the vocabulary, keeps the
    ``beam_width`` best expansions (ties: lower token id, then earlier
    parent) and retires those that emit the end symbol.  Zero-probability
    expansions are never kept.
    """
    eos = scorer.eos if cfg.end_symbol is None else cfg.end_symbol
    live = [Hypothesis((), 0.0, scorer.init(context), False)]
    pool: list[Hypothesis] = []
    for _ in range(cfg.max_len):
        if not live:
            break
        parent_scores = np.array([h.log_score for h in live])
        logp = np.stack([_log(np.asarray(scorer.posteriors(h.state), dtype=np.float64)) for h in live])
        total = parent_scores[:, None] + logp
        V = total.shape[1]
        flat = total.ravel()
        finite = np.flatnonzero(np.isfinite(flat))
        if finite.size == 0:
            break
        # lexsort: last key is primary -> (-score, token id, parent index)
        parents, tokens = np.divmod(finite, V)
        order = np.lexsort((parents, tokens, -flat[finite]))[: cfg.beam_width]
        next_live = []
        for idx in order:
            p, t = int(parents[idx]), int(tokens[idx])
            parent = live[p]
            toks = parent.tokens + (t,)
            score = float(flat[finite[idx]])
            if t == eos:
                pool.append(Hypothesis(toks, score, parent.state, True))
            else:
                next_live.append(Hypothesis(toks, score, scorer.step(parent.state, t), False))
        live = next_live
    return _rank(pool + live, cfg.length_norm)


def exhaustive_search(scorer: Scorer, context, max_len: int, end_symbol: int | None = None) -> Hypothesis:
    """Score every sequence up to ``max_len`` and return the best.

    Sequences end at the end symbol or at ``max_len`` tokens.  Ties go to the
    lexicographically smallest token sequence.
    """
    eos = scorer.eos if end_symbol is None else end_symbol
    V = len(scorer.vocab)
    if V ** max_len > EXHAUSTIVE_LIMIT:
        raise SearchSpaceTooLargeError(f"{V}^{max_len} sequences exceed the {EXHAUSTIVE_LIMIT} limit")
    best: list = [None]

    def visit(tokens, score, state):
        logp = _log(np.asarray(scorer.posteriors(state), dtype=np.float64))
        for t in range(V):
            s = score + float(logp[t])
            if not math.isfinite(s):
                continue
            toks = tokens + (t,)
            if t == eos or len(toks) == max_len:
                if best[0] is None or s > best[0].log_score:
                    best[0] = Hypothesis(toks, s, state, t == eos)
            else:
                visit(toks, s, scorer.step(state, t))

    visit((), 0.0, scorer.init(context))
    return best[0]


@dataclass(frozen=True)
class Intermediate:
    """Best first-pass hypothesis handed to the second pass."""
    tokens: tuple[int, ...]
    state: Any
    vocab: tuple[str, ...]

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(self.vocab[t] for t in self.tokens)


def strip_eos(tokens: Sequence[int], eos: int) -> tuple[int, ...]:
    tokens = tuple(tokens)
    return tokens[:-1] if tokens and tokens[-1] == eos else tokens


def two_stage_decode(asr_scorer: Scorer, mt_scorer_factory: Callable[[Intermediate], Scorer], audio_context,
                     b1: int = MULTI_DECODER_BEAMS[0], b2: int = MULTI_DECODER_BEAMS[1],
                     max_len: int = 100) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Decode source tokens, then target tokens conditioned on them.

    The second-pass scorer is built from the first pass's best hypothesis and
    initialised with the original ``audio_context``.  Returned sequences have
    the end symbol stripped.
    """
    first = beam_search(asr_scorer, audio_context, DecodeConfig(b1, max_len))
    best = first[0]
    src = strip_eos(best.tokens, asr_scorer.eos)
    mt = mt_scorer_factory(Intermediate(src, best.state, tuple(asr_scorer.vocab)))
    second = beam_search(mt, audio_context, DecodeConfig(b2, max_len))
    return src, strip_eos(second[0].tokens, mt.eos)
