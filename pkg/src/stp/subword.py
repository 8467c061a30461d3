"""ASR transcript normalisation and byte pair encoding."""

from __future__ import annotations

import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

from .errors import ParseError

EOW = "</w>"
TABLE_VERSION = "#version: 1"


def normalize_asr_text(text: str) -> str:
    """Lowercase, drop punctuation except ASCII apostrophes, collapse spaces."""
    out = []
    for ch in text.lower():
        if ch != "'" and unicodedata.category(ch).startswith("P"):
            out.append(" ")
        else:
            out.append(ch)
    return " ".join("".join(out).split())


@dataclass(frozen=True)
class MergeTable:
    merges: tuple[tuple[str, str], ...] = ()
    vocab_size_target: int = 0

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple(tuple(m) for m in self.merges))
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("duplicate merge pair")

    def __len__(self):
        return len(self.merges)

    def dumps(self) -> str:
        lines = [f"{TABLE_VERSION} target={self.vocab_size_target}"]
        lines.extend(f"{a} {b}" for a, b in self.merges)
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str, path=None) -> "MergeTable":
        lines = text.split("\n")
        if not lines or not lines[0].startswith(TABLE_VERSION):
            raise ParseError(f"missing header {TABLE_VERSION!r}", line=1, path=path)
        target = 0
        for field in lines[0][len(TABLE_VERSION):].split():
            if field.startswith("target="):
                target = int(field[len("target="):])
        merges = []
        for lineno, line in enumerate(lines[1:], 2):
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2 or not all(parts):
                raise ParseError("expected two symbols", line=lineno, path=path)
            merges.append((parts[0], parts[1]))
        return cls(tuple(merges), target)

    @classmethod
    def load(cls, path) -> "MergeTable":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read(), path=path)


def word_symbols(word: str) -> tuple[str, ...]:
    """Characters of ``word`` with the end-of-word marker fused to the last one."""
    chars = list(word)
    chars[-1] += EOW
    return tuple(chars)


def word_counts(lines: Iterable[str]) -> Counter:
    c: Counter = Counter()
    for line in lines:
        c.update(line.split())
    return c


def _pairs(symbols):
    return zip(symbols, symbols[1:])


def learn_bpe(corpus: Mapping[str, int], num_merges: int) -> MergeTable:
    """Learn merges greedily by pair frequency, ties broken by smallest pair.

    Stops early when no adjacent pair occurs at least twice.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be non-negative")
    words = [word_symbols(w) for w in corpus]
    freqs = [int(corpus[w]) for w in corpus]
    stats: Counter = Counter()
    where: dict = defaultdict(set)
    for i, (sym, f) in enumerate(zip(words, freqs)):
        for p in _pairs(sym):
            stats[p] += f
            where[p].add(i)

    merges = []
    while len(merges) < num_merges and stats:
        best = min(stats.items(), key=lambda kv: (-kv[1], kv[0]))
        pair, freq = best
        if freq < 2:
            break
        merges.append(pair)
        a, b = pair
        joined = a + b
        for i in sorted(where.pop(pair, ())):
            old = words[i]
            f = freqs[i]
            new = []
            j = 0
            while j < len(old):
                if j < len(old) - 1 and old[j] == a and old[j + 1] == b:
                    new.append(joined)
                    j += 2
                else:
                    new.append(old[j])
                    j += 1
            new = tuple(new)
            for p in _pairs(old):
                stats[p] -= f
                if stats[p] <= 0:
                    del stats[p]
            for p in _pairs(new):
                stats[p] += f
            # refresh the index for pairs this word no longer/now contains
            old_pairs, new_pairs = set(_pairs(old)), set(_pairs(new))
            for p in old_pairs - new_pairs:
                s = where.get(p)
                if s is not None:
                    s.discard(i)
            for p in new_pairs:
                where[p].add(i)
            words[i] = new
        stats.pop(pair, None)
    return MergeTable(tuple(merges), num_merges)


class BPE:
    """Applies a :class:`MergeTable`; caches per-word segmentations."""

    def __init__(self, table: MergeTable):
        self.table = table
        self.ranks = {pair: r for r, pair in enumerate(table.merges)}
        self._segment = lru_cache(maxsize=1 << 16)(self._segment_word)

    def _segment_word(self, word: str) -> tuple[str, ...]:
        symbols = list(word_symbols(word))
        ranks = self.ranks
        while len(symbols) > 1:
            best = None
            best_rank = None
            for p in _pairs(symbols):
                r = ranks.get(p)
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = p, r
            if best is None:
                break
            a, b = best
            merged = []
            j = 0
            while j < len(symbols):
                if j < len(symbols) - 1 and symbols[j] == a and symbols[j + 1] == b:
                    merged.append(a + b)
                    j += 2
                else:
                    merged.append(symbols[j])
                    j += 1
            symbols = merged
        return tuple(symbols)

    def __call__(self, text: str) -> list[str]:
        out: list[str] = []
        for word in text.split():
            out.extend(self._segment(word))
        return out


def apply_bpe(table: MergeTable | BPE, text: str) -> list[str]:
    """Split ``text`` on whitespace and segment each word.

    Word ends are marked by ``</w>`` on the final token, so text that
    itself contains ``</w>`` does not decode back unambiguously.
    """
    bpe = table if isinstance(table, BPE) else BPE(table)
    return bpe(text)


def decode_bpe(tokens: Iterable[str]) -> str:
    """Inverse of :func:`apply_bpe` up to whitespace normalisation."""
    return "".join(tokens).replace(EOW, " ").strip()
