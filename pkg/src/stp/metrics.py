"""Word error rate and corpus BLEU."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import EmptyReferenceError, LengthMismatchError
from .subword import normalize_asr_text


@dataclass(frozen=True)
class EditAlignment:
    substitutions: int
    deletions: int
    insertions: int
    path: tuple[tuple[str, int | None, int | None], ...] = ()

    @property
    def distance(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def _split(x) -> list[str]:
    return x.split() if isinstance(x, str) else list(x)


def _encode(ref, hyp):
    ids: dict = {}
    a = np.array([ids.setdefault(t, len(ids)) for t in ref], dtype=np.int64)
    b = np.array([ids.setdefault(t, len(ids)) for t in hyp], dtype=np.int64)
    return a, b


def edit_distance(ref, hyp) -> int:
    a, b = _encode(_split(ref), _split(hyp))
    return int(_kernels.edit_matrix(a, b)[-1, -1])


def align(ref, hyp) -> EditAlignment:
    """Minimal edit alignment; backtrace prefers match, substitution, deletion, insertion."""
    ref, hyp = _split(ref), _split(hyp)
    a, b = _encode(ref, hyp)
    D = _kernels.edit_matrix(a, b)
    i, j = len(ref), len(hyp)
    path = []
    S = Dl = I = 0
    while i > 0 or j > 0:
        here = D[i, j]
        if i > 0 and j > 0 and a[i - 1] == b[j - 1] and D[i - 1, j - 1] == here:
            path.append(("M", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and D[i - 1, j - 1] + 1 == here:
            path.append(("S", i - 1, j - 1))
            S += 1
            i, j = i - 1, j - 1
        elif i > 0 and D[i - 1, j] + 1 == here:
            path.append(("D", i - 1, None))
            Dl += 1
            i -= 1
        else:
            path.append(("I", None, j - 1))
            I += 1
            j -= 1
    path.reverse()
    return EditAlignment(S, Dl, I, tuple(path))


def wer(ref, hyp, normalize: bool = False) -> tuple[float, EditAlignment]:
    """``(S + D + I) / len(ref)`` with the alignment that realises it.

    ``normalize=True`` applies ASR transcript normalisation to both sides
    first; inputs may be strings or token lists.
    """
    if normalize:
        ref = normalize_asr_text(ref if isinstance(ref, str) else " ".join(ref))
        hyp = normalize_asr_text(hyp if isinstance(hyp, str) else " ".join(hyp))
    ref_toks = _split(ref)
    if not ref_toks:
        raise EmptyReferenceError("reference is empty")
    al = align(ref_toks, _split(hyp))
    return al.distance / len(ref_toks), al


def corpus_wer(refs: Sequence, hyps: Sequence, normalize: bool = False) -> float:
    """Total edits over total reference words."""
    if len(refs) != len(hyps):
        raise LengthMismatchError(f"{len(refs)} references vs {len(hyps)} hypotheses")
    edits = words = 0
    for r, h in zip(refs, hyps):
        if normalize:
            r, h = normalize_asr_text(r), normalize_asr_text(h)
        r = _split(r)
        edits += edit_distance(r, _split(h))
        words += len(r)
    if words == 0:
        raise EmptyReferenceError("all references are empty")
    return edits / words


def _ngrams(tokens, n) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(refs: Sequence[Sequence], hyps: Sequence, max_n: int = 4):
    """Corpus totals: matches[n], totals[n], hyp length, effective ref length."""
    if len(refs) != len(hyps) or not hyps:
        raise LengthMismatchError(f"{len(refs)} reference sets vs {len(hyps)} hypotheses")
    matches = [0] * max_n
    totals = [0] * max_n
    c = r = 0
    for ref_set, hyp in zip(refs, hyps):
        if isinstance(ref_set, str):
            ref_set = [ref_set]
        ref_toks = [_split(x) for x in ref_set]
        hyp_toks = _split(hyp)
        c += len(hyp_toks)
        # closest reference length, ties toward the shorter one
        r += min((abs(len(x) - len(hyp_toks)), len(x)) for x in ref_toks)[1]
        for n in range(1, max_n + 1):
            h = _ngrams(hyp_toks, n)
            if not h:
                continue
            best: Counter = Counter()
            for x in ref_toks:
                best |= _ngrams(x, n)
            matches[n - 1] += sum(min(cnt, best[g]) for g, cnt in h.items())
            totals[n - 1] += sum(h.values())
    return matches, totals, c, r


def corpus_bleu(refs: Sequence[Sequence], hyps: Sequence, max_n: int = 4, smoothing: str = "none",
                epsilon: float = 0.01) -> float:
    """Corpus BLEU in [0, 1], case-sensitive, multi-reference.

    ``refs[i]`` is the reference set for ``hyps[i]`` (a bare string counts as a
    single reference).  ``smoothing="floor"`` replaces zero match counts by
    ``epsilon``.
    """
    if smoothing not in ("none", "floor"):
        raise ValueError(f"unknown smoothing {smoothing!r}")
    matches, totals, c, r = bleu_stats(refs, hyps, max_n)
    if c == 0:
        return 0.0
    logs = []
    for m, t in zip(matches, totals):
        if t == 0:
            if smoothing == "none":
                return 0.0
            logs.append(math.log(epsilon))
            continue
        if m == 0:
            if smoothing == "none":
                return 0.0
            m = epsilon
        logs.append(math.log(m / t))
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(math.fsum(logs) / max_n)
