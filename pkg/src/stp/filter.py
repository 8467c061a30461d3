"""Bitext filtering cascade: LM selection, language ID, length/ratio, characters.

Every stage is a pure filter over :class:`BitextRecord` lists.  Kept records
come back in input order carrying one new verdict for that stage, and each
stage produces a :class:`StageReport` whose counts always balance.
"""

from __future__ import annotations

import functools
import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from ._jobs import parallel_map
from .errors import ValidationError
from .langid import LangIdModel, classify_language
from .lm import NGramLM, cross_entropy

STAGES = ("perplexity", "langid", "length", "characters")

_BLOCK_RANGES = {
    "cjk": [(0x2E80, 0x2FDF), (0x3000, 0x303F), (0x3400, 0x4DBF), (0x4E00, 0x9FFF),
            (0xF900, 0xFAFF), (0x20000, 0x2FA1F)],
    "hiragana": [(0x3040, 0x309F)],
    "katakana": [(0x30A0, 0x30FF), (0x31F0, 0x31FF), (0xFF66, 0xFF9F)],
    "hangul": [(0x1100, 0x11FF), (0x3130, 0x318F), (0xAC00, 0xD7AF)],
    "arabic": [(0x0600, 0x06FF), (0x0750, 0x077F), (0x08A0, 0x08FF), (0xFB50, 0xFDFF), (0xFE70, 0xFEFF)],
    "cyrillic": [(0x0400, 0x052F)],
}
_BLOCK_RES = {
    name: re.compile("[" + "".join(f"\\U{lo:08x}-\\U{hi:08x}" for lo, hi in ranges) + "]")
    for name, ranges in _BLOCK_RANGES.items()
}
_NONPRINTING_CATEGORIES = frozenset({"Cc", "Cf", "Cs", "Co", "Zl", "Zp"})
CHARACTER_CLASSES = tuple(_BLOCK_RANGES) + ("nonprinting",)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    reason: str | None = None


PASS = Verdict(True)


@dataclass(frozen=True)
class BitextRecord:
    index: int
    src: str
    tgt: str
    verdicts: Mapping[str, Verdict] = field(default_factory=dict)

    def with_verdict(self, stage: str, verdict: Verdict) -> "BitextRecord":
        if stage in self.verdicts:
            raise ValidationError(f"record {self.index} already has a {stage!r} verdict")
        return replace(self, verdicts={**self.verdicts, stage: verdict})


@dataclass(frozen=True)
class Threshold:
    """Keep records whose perplexity is at most ``t``."""
    t: float


@dataclass(frozen=True)
class TopK:
    """Keep the ``k`` lowest-perplexity records (ties by input index)."""
    k: int


@dataclass(frozen=True)
class CrossEntropyDiff:
    """Keep records with in-domain minus general cross-entropy at most ``t``."""
    lm_general: NGramLM
    t: float
    lm_general_tgt: NGramLM | None = None


@dataclass
class StageReport:
    name: str
    input_count: int
    output_count: int
    reasons: Counter = field(default_factory=Counter)
    rejected: dict = field(default_factory=dict)  # index -> reason

    def as_dict(self) -> dict:
        return {
            "stage": self.name,
            "input": self.input_count,
            "output": self.output_count,
            "rejected": self.input_count - self.output_count,
            "reasons": dict(sorted(self.reasons.items())),
        }


@dataclass
class FilterReport:
    stages: list[StageReport] = field(default_factory=list)

    def __getitem__(self, name: str) -> StageReport:
        for st in self.stages:
            if st.name == name:
                return st
        raise KeyError(name)

    def balanced(self) -> bool:
        ok = all(st.input_count - st.output_count == sum(st.reasons.values()) for st in self.stages)
        chain = all(a.output_count == b.input_count for a, b in zip(self.stages, self.stages[1:]))
        return ok and chain

    def to_jsonl(self) -> str:
        return "".join(json.dumps(st.as_dict(), sort_keys=True, ensure_ascii=False) + "\n" for st in self.stages)


@dataclass(frozen=True)
class FilterConfig:
    selection: Threshold | TopK | CrossEntropyDiff | None = None
    side: str = "src"
    src_lang: str = "en"
    tgt_lang: str = "de"
    max_tokens: int = 250
    max_ratio: float = 1.5
    blocked_classes: tuple[str, ...] = CHARACTER_CLASSES

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValidationError("max_tokens must be positive")
        if not self.max_ratio > 1:
            raise ValidationError("max_ratio must be > 1")
        if self.side not in ("src", "tgt", "both"):
            raise ValidationError(f"side must be src, tgt or both, got {self.side!r}")
        unknown = set(self.blocked_classes) - set(CHARACTER_CLASSES)
        if unknown:
            raise ValidationError(f"unknown character classes: {sorted(unknown)}")


def make_records(pairs: Sequence[tuple[str, str]]) -> list[BitextRecord]:
    return [BitextRecord(i, src, tgt) for i, (src, tgt) in enumerate(pairs)]


def tokenize(text: str) -> list[str]:
    return unicodedata.normalize("NFC", text).split()


def _run_stage(records, name, reasons: Sequence[str | None]):
    kept = []
    report = StageReport(name, len(records), 0)
    for rec, reason in zip(records, reasons):
        if reason is None:
            kept.append(rec.with_verdict(name, PASS))
        else:
            report.reasons[reason] += 1
            report.rejected[rec.index] = reason
    report.output_count = len(kept)
    return kept, report


# ---------------------------------------------------------------------------
# perplexity selection
# ---------------------------------------------------------------------------

def _side_text(rec: BitextRecord, side: str) -> str:
    return " ".join(tokenize(rec.src if side == "src" else rec.tgt))


def _entropy(lm: NGramLM, text: str) -> float:
    # empty sides cannot be scored; rank them last
    return cross_entropy(lm, text) if text else math.inf


def _record_entropy(rec, lm_src, lm_tgt, side):
    if side == "both":
        return 0.5 * (_entropy(lm_src, _side_text(rec, "src")) + _entropy(lm_tgt, _side_text(rec, "tgt")))
    return _entropy(lm_src, _side_text(rec, side))


def perplexity_scores(records, lm_in_domain: NGramLM, mode=None, side="src", lm_in_domain_tgt=None, jobs=1) -> list[float]:
    """Per-record selection score: perplexity, or cross-entropy difference.

    With ``side="tgt"`` the given model scores the target text; with
    ``"both"`` the source and target cross-entropies are averaged before
    exponentiating.
    """
    if side == "both" and lm_in_domain_tgt is None:
        raise ValidationError("side='both' needs a target-side in-domain LM")
    h_in = parallel_map(
        functools.partial(_record_entropy, lm_src=lm_in_domain, lm_tgt=lm_in_domain_tgt, side=side),
        records, jobs,
    )
    if isinstance(mode, CrossEntropyDiff):
        gen_tgt = mode.lm_general_tgt or mode.lm_general
        h_gen = parallel_map(
            functools.partial(_record_entropy, lm_src=mode.lm_general, lm_tgt=gen_tgt, side=side),
            records, jobs,
        )
        return [a - b if math.isfinite(a) and math.isfinite(b) else math.inf for a, b in zip(h_in, h_gen)]
    return [math.exp(h) if math.isfinite(h) else math.inf for h in h_in]


def _selection_reasons(scores, mode, records):
    if mode is None:
        return [None] * len(scores)
    if isinstance(mode, TopK):
        order = sorted(range(len(scores)), key=lambda i: (scores[i], records[i].index))
        keep = set(order[: max(mode.k, 0)])
        return [None if i in keep else "rank" for i in range(len(scores))]
    limit = mode.t
    return [None if s <= limit else "perplexity" for s in scores]


def select_by_perplexity(records, lm_in_domain, mode, side="src", lm_in_domain_tgt=None, jobs=1):
    scores = perplexity_scores(records, lm_in_domain, mode, side, lm_in_domain_tgt, jobs)
    kept, _ = _run_stage(records, "perplexity", _selection_reasons(scores, mode, records))
    return kept


# ---------------------------------------------------------------------------
# language ID
# ---------------------------------------------------------------------------

def _langid_reason(rec, model, src_lang, tgt_lang):
    src, tgt = rec.src.strip(), rec.tgt.strip()
    if not src or not tgt:
        return "empty"
    if classify_language(model, src)[0] != src_lang:
        return "src_lang"
    if classify_language(model, tgt)[0] != tgt_lang:
        return "tgt_lang"
    return None


def filter_langid(records, model: LangIdModel, src_lang="en", tgt_lang="de", jobs=1):
    kept, _ = _langid_stage(records, model, src_lang, tgt_lang, jobs)
    return kept


def _langid_stage(records, model, src_lang, tgt_lang, jobs=1):
    if model is None:
        return _run_stage(records, "langid", [None] * len(records))
    reasons = parallel_map(
        functools.partial(_langid_reason, model=model, src_lang=src_lang, tgt_lang=tgt_lang), records, jobs
    )
    return _run_stage(records, "langid", reasons)


# ---------------------------------------------------------------------------
# length / ratio
# ---------------------------------------------------------------------------

def _length_reason(rec, max_tokens, max_ratio):
    ns, nt = len(tokenize(rec.src)), len(tokenize(rec.tgt))
    if ns == 0 or nt == 0:
        return "empty"
    if ns > max_tokens or nt > max_tokens:
        return "too_long"
    if max(ns, nt) / min(ns, nt) > max_ratio:
        return "ratio"
    return None


def _length_stage(records, max_tokens, max_ratio):
    return _run_stage(records, "length", [_length_reason(r, max_tokens, max_ratio) for r in records])


def filter_length_ratio(records, max_tokens: int = 250, max_ratio: float = 1.5):
    kept, _ = _length_stage(records, max_tokens, max_ratio)
    return kept


# ---------------------------------------------------------------------------
# character classes
# ---------------------------------------------------------------------------

def blocked_class(text: str, blocked_classes=CHARACTER_CLASSES) -> str | None:
    """Name of the first blocked class found in ``text``, else None."""
    for name in blocked_classes:
        if name == "nonprinting":
            if not text.isprintable():
                for ch in text:
                    if ch != "\t" and unicodedata.category(ch) in _NONPRINTING_CATEGORIES:
                        return name
        elif _BLOCK_RES[name].search(text):
            return name
    return None


def _char_stage(records, blocked_classes):
    reasons = [blocked_class(r.src, blocked_classes) or blocked_class(r.tgt, blocked_classes) for r in records]
    return _run_stage(records, "characters", reasons)


def filter_characters(records, blocked_classes=CHARACTER_CLASSES):
    kept, _ = _char_stage(records, blocked_classes)
    return kept


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def run_pipeline(records, lms: Mapping[str, NGramLM] | None, langid_model: LangIdModel | None,
                 config: FilterConfig = FilterConfig(), jobs: int = 1):
    """Run the four stages in order and return ``(kept, report)``.

    ``lms`` may hold ``"in_domain"`` and, for two-sided scoring,
    ``"in_domain_tgt"``.  A missing LM or langid model turns that stage into
    a pass-through that is still reported.
    """
    lms = lms or {}
    report = FilterReport()
    records = list(records)

    lm = lms.get("in_domain")
    if lm is None or config.selection is None:
        reasons = [None] * len(records)
    else:
        scores = perplexity_scores(records, lm, config.selection, config.side, lms.get("in_domain_tgt"), jobs)
        reasons = _selection_reasons(scores, config.selection, records)
    records, st = _run_stage(records, "perplexity", reasons)
    report.stages.append(st)

    records, st = _langid_stage(records, langid_model, config.src_lang, config.tgt_lang, jobs)
    report.stages.append(st)

    records, st = _length_stage(records, config.max_tokens, config.max_ratio)
    report.stages.append(st)

    records, st = _char_stage(records, config.blocked_classes)
    report.stages.append(st)
    return records, report
