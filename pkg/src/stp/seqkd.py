"""Sequence-level distillation datasets: teacher pseudo-labels and multi-reference recipes."""

from __future__ import annotations

import functools
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from ._jobs import parallel_map
from .errors import AlignmentError, MissingFrameCountError, ParseError, ValidationError
from .search import DecodeConfig, Scorer, beam_search, strip_eos

ORIGINAL_TAG = "X"
SEQKD_BEAM = 5
MAX_FRAMES = 3000
MAX_CHARS = 400


@dataclass(frozen=True)
class Reference:
    tag: str
    target: str


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    src: str
    refs: tuple[Reference, ...]

    def __post_init__(self):
        object.__setattr__(self, "refs", tuple(self.refs))
        if not self.refs:
            raise ValidationError(f"utterance {self.utt_id!r} has no reference")


@dataclass(frozen=True)
class ParallelDataset:
    records: tuple[Utterance, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        dup = [u for u, n in Counter(r.utt_id for r in self.records).items() if n > 1]
        if dup:
            raise ValidationError(f"duplicate utt_id {dup[0]!r}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def utt_ids(self) -> list[str]:
        return [r.utt_id for r in self.records]

    def flatten(self) -> list[tuple[str, str, str, str]]:
        """One ``(utt_id, tag, src, tgt)`` row per reference; sources repeat."""
        return [(r.utt_id, ref.tag, r.src, ref.target) for r in self.records for ref in r.refs]

    @classmethod
    def from_pairs(cls, rows: Iterable[tuple[str, str, str]], tag: str = ORIGINAL_TAG) -> "ParallelDataset":
        return cls(tuple(Utterance(u, s, (Reference(tag, t),)) for u, s, t in rows))


def parse_recipe(recipe: str) -> tuple[str, ...]:
    tags = tuple(t.strip() for t in recipe.split("+"))
    if not tags or not all(tags) or len(set(tags)) != len(tags):
        raise ValidationError(f"bad recipe {recipe!r}")
    return tags


def _decode_one(item, teacher, cfg):
    utt_id, src = item
    hyps = beam_search(teacher, src.split(), cfg)
    tokens = strip_eos(hyps[0].tokens, teacher.eos) if hyps else ()
    return utt_id, " ".join(teacher.vocab[t] for t in tokens)


def generate_pseudo_labels(teacher: Scorer, sources: Sequence[tuple[str, str]], beam_width: int = SEQKD_BEAM,
                           max_len: int = 100, jobs: int = 1) -> list[tuple[str, str]]:
    """Translate each ``(utt_id, src)`` with the teacher's top beam hypothesis.

    Sources go to the teacher as-is (cased, punctuated), split on whitespace.
    """
    cfg = DecodeConfig(beam_width, max_len)
    return parallel_map(functools.partial(_decode_one, teacher=teacher, cfg=cfg), sources, jobs, chunksize=16)


def build_multi_ref(original: ParallelDataset, pseudo_sets: Mapping[str, Mapping[str, str] | Sequence[tuple[str, str]]],
                    recipe: str) -> ParallelDataset:
    """Attach references per ``recipe`` (``"Y"``, ``"X+Y"``, ``"X+Y+Z"``, ...).

    ``X`` keeps the original references; every other tag is looked up in
    ``pseudo_sets`` and must cover exactly the original utterances.
    """
    tags = parse_recipe(recipe)
    ids = original.utt_ids
    id_set = set(ids)
    tables = {}
    for tag in tags:
        if tag == ORIGINAL_TAG:
            continue
        if tag not in pseudo_sets:
            raise AlignmentError(f"no pseudo-label set for tag {tag!r}")
        table = dict(pseudo_sets[tag])
        missing = id_set - table.keys()
        extra = table.keys() - id_set
        if missing or extra:
            bad = sorted(missing)[:1] or sorted(extra)[:1]
            raise AlignmentError(
                f"tag {tag!r}: {len(missing)} missing and {len(extra)} extra utterances (e.g. {bad[0]!r})"
            )
        tables[tag] = table

    out = []
    for rec in original:
        refs = []
        for tag in tags:
            if tag == ORIGINAL_TAG:
                refs.extend(r for r in rec.refs if r.tag == ORIGINAL_TAG)
            else:
                refs.append(Reference(tag, tables[tag][rec.utt_id]))
        out.append(Utterance(rec.utt_id, rec.src, tuple(refs)))
    return ParallelDataset(tuple(out))


def filter_utterances(dataset: ParallelDataset, speech_frame_counts: Mapping[str, int],
                      max_frames: int = MAX_FRAMES, max_chars: int = MAX_CHARS) -> ParallelDataset:
    kept = []
    for rec in dataset:
        if rec.utt_id not in speech_frame_counts:
            raise MissingFrameCountError(f"no frame count for {rec.utt_id!r}")
        if speech_frame_counts[rec.utt_id] > max_frames:
            continue
        if len(rec.src) > max_chars or any(len(r.target) > max_chars for r in rec.refs):
            continue
        kept.append(rec)
    return ParallelDataset(tuple(kept))


# ---------------------------------------------------------------------------
# TSV: utt_id <TAB> tag <TAB> src <TAB> tgt
# ---------------------------------------------------------------------------

def parse_tsv(lines: Iterable[str], path=None) -> ParallelDataset:
    grouped: dict[str, list] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ParseError(f"expected 4 tab-separated fields, got {len(fields)}", line=lineno, path=path)
        utt, tag, src, tgt = fields
        entry = grouped.setdefault(utt, [src, []])
        if entry[0] != src:
            raise ParseError(f"utterance {utt!r} has conflicting sources", line=lineno, path=path)
        entry[1].append(Reference(tag, tgt))
    return ParallelDataset(tuple(Utterance(u, s, tuple(refs)) for u, (s, refs) in grouped.items()))


def read_tsv(path) -> ParallelDataset:
    with open(path, encoding="utf-8") as fh:
        return parse_tsv(fh, path=path)


def format_tsv(dataset: ParallelDataset) -> str:
    return "".join("\t".join(row) + "\n" for row in dataset.flatten())


def read_frame_counts(path) -> dict[str, int]:
    """``utt_id <space> frames`` per line (Kaldi ``utt2num_frames``)."""
    counts = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError("expected '<utt_id> <frames>'", line=lineno, path=path)
            try:
                counts[parts[0]] = int(parts[1])
            except ValueError:
                raise ParseError(f"bad frame count {parts[1]!r}", line=lineno, path=path) from None
    return counts
