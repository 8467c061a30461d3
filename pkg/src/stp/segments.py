"""Speech segments in 10-ms frames and bottom-up merging of short segments.

VAD output tends to be fragmented.  :func:`merge_segments` walks the segments
left to right and glues the next one onto the current group while the group
stays shorter than ``m_dur`` frames and the silence before it is shorter than
``m_int`` frames.  One pass reaches the fixed point, so no outer loop is run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import EmptyIntervalError, OutOfRangeError, OverlapError, ParseError

FRAMES_PER_SECOND = 100
DEFAULT_M_DUR = 2000
DEFAULT_M_INT = 100


@dataclass(frozen=True, order=True)
class Segment:
    start: int
    end: int

    def __post_init__(self):
        if self.start < 0:
            raise EmptyIntervalError(f"negative start frame {self.start}")
        if self.start >= self.end:
            raise EmptyIntervalError(f"empty interval ({self.start}, {self.end})")

    @property
    def duration(self) -> int:
        return self.end - self.start


class SegmentList:
    """Sorted, non-overlapping segments of one recording.

    Stored as two read-only int64 arrays.  Build through
    :func:`validate_segments` unless the input is known to be valid already;
    the constructor checks ordering and overlap but does not sort.
    """

    __slots__ = ("starts", "ends", "rec_id")

    def __init__(self, segments: Iterable = (), rec_id: str | None = None):
        pairs = _pairs_array(segments)
        self._init(pairs[:, 0], pairs[:, 1], rec_id)

    def _init(self, starts, ends, rec_id):
        starts = np.array(starts, dtype=np.int64)
        ends = np.array(ends, dtype=np.int64)
        _check_intervals(starts, ends)
        if np.any(starts[1:] < starts[:-1]):
            raise OverlapError("segments not sorted by start")
        _check_overlap(starts, ends)
        starts.flags.writeable = False
        ends.flags.writeable = False
        self.starts, self.ends, self.rec_id = starts, ends, rec_id

    @classmethod
    def from_arrays(cls, starts, ends, rec_id=None) -> "SegmentList":
        obj = cls.__new__(cls)
        obj._init(starts, ends, rec_id)
        return obj

    @property
    def segments(self) -> tuple[Segment, ...]:
        return tuple(Segment(s, e) for s, e in zip(self.starts.tolist(), self.ends.tolist()))

    def __len__(self) -> int:
        return len(self.starts)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self.segments)

    def __getitem__(self, i):
        return self.segments[i]

    def __eq__(self, other):
        if not isinstance(other, SegmentList):
            return NotImplemented
        return (self.rec_id == other.rec_id and np.array_equal(self.starts, other.starts)
                and np.array_equal(self.ends, other.ends))

    __hash__ = None

    def __repr__(self):
        return f"SegmentList({self.as_tuples()!r}, rec_id={self.rec_id!r})"

    def as_tuples(self) -> list[tuple[int, int]]:
        return list(zip(self.starts.tolist(), self.ends.tolist()))

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.starts, self.ends


def _pairs_array(items) -> np.ndarray:
    rows = [(x.start, x.end) if isinstance(x, Segment) else tuple(x) for x in items]
    if not rows:
        return np.empty((0, 2), dtype=np.int64)
    if any(len(r) != 2 for r in rows):
        raise ValueError("segments must be (start, end) pairs")
    return np.array(rows).astype(np.int64)


def _check_intervals(starts, ends):
    bad = np.flatnonzero((starts < 0) | (starts >= ends))
    if bad.size:
        i = bad[0]
        if starts[i] < 0:
            raise EmptyIntervalError(f"negative start frame {starts[i]}")
        raise EmptyIntervalError(f"empty interval ({starts[i]}, {ends[i]})")


def _check_overlap(starts, ends):
    bad = np.flatnonzero(ends[:-1] > starts[1:])
    if bad.size:
        i = bad[0]
        raise OverlapError(f"({starts[i]}, {ends[i]}) overlaps ({starts[i + 1]}, {ends[i + 1]})")


@dataclass(frozen=True)
class MergeParams:
    m_dur: int = DEFAULT_M_DUR
    m_int: int = DEFAULT_M_INT

    def __post_init__(self):
        if self.m_dur <= 0 or self.m_int <= 0:
            raise ValueError(f"merge thresholds must be positive, got m_dur={self.m_dur} m_int={self.m_int}")


@dataclass(frozen=True)
class SegmentStats:
    count: int
    total: int
    min_duration: int | None
    mean_duration: float | None
    max_duration: int | None
    min_gap: int | None
    mean_gap: float | None

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "total": self.total,
            "min_duration": self.min_duration,
            "mean_duration": self.mean_duration,
            "max_duration": self.max_duration,
            "min_gap": self.min_gap,
            "mean_gap": self.mean_gap,
        }


def validate_segments(raw: Iterable, rec_id: str | None = None) -> SegmentList:
    """Sort ``raw`` by start and check that no two intervals overlap.

    Items may be :class:`Segment` or ``(start, end)`` pairs.  Touching
    intervals (``end == next.start``) are allowed.
    """
    pairs = _pairs_array(raw)
    starts, ends = pairs[:, 0], pairs[:, 1]
    _check_intervals(starts, ends)
    order = np.lexsort((ends, starts))
    return SegmentList.from_arrays(starts[order], ends[order], rec_id)


def merge_segments(segs: SegmentList, params: MergeParams = MergeParams()) -> SegmentList:
    if len(segs) <= 1:
        return segs
    starts, ends = segs.to_arrays()
    out_s, out_e = _kernels.merge_runs(starts, ends, params.m_dur, params.m_int)
    return SegmentList.from_arrays(out_s, out_e, segs.rec_id)


def segment_stats(segs: SegmentList) -> SegmentStats:
    if len(segs) == 0:
        return SegmentStats(0, 0, None, None, None, None, None)
    starts, ends = segs.to_arrays()
    dur = ends - starts
    gaps = starts[1:] - ends[:-1]
    return SegmentStats(
        count=len(segs),
        total=int(dur.sum()),
        min_duration=int(dur.min()),
        mean_duration=float(dur.mean()),
        max_duration=int(dur.max()),
        min_gap=int(gaps.min()) if gaps.size else None,
        mean_gap=float(gaps.mean()) if gaps.size else None,
    )


def slice_audio(audio, segs: SegmentList) -> list:
    """Cut ``audio`` (a :class:`stp.vad.AudioBuffer`) into one buffer per segment."""
    from .vad import AudioBuffer

    per_frame = audio.sample_rate // FRAMES_PER_SECOND
    n = len(audio.samples)
    out = []
    for seg in segs:
        lo, hi = seg.start * per_frame, seg.end * per_frame
        if hi > n:
            raise OutOfRangeError(
                f"segment ({seg.start}, {seg.end}) ends past the audio ({n} samples)"
            )
        out.append(AudioBuffer(audio.samples[lo:hi].copy(), audio.sample_rate))
    return out


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

SEGMENT_FORMATS = ("kaldi", "rttm", "jsonl")


def seconds_to_frames(text: str) -> int:
    """Parse a decimal seconds string into frames, rounding half away from zero."""
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise ValueError(f"not a number: {text!r}") from None
    if not value.is_finite():
        raise ValueError(f"not a finite number: {text!r}")
    return int((value * FRAMES_PER_SECOND).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def frames_to_seconds(frames: int) -> str:
    return f"{frames / FRAMES_PER_SECOND:.2f}"


def _parse_line(fmt: str, line: str):
    if fmt == "kaldi":
        fields = line.split()
        if len(fields) != 4:
            raise ValueError(f"expected 4 fields, got {len(fields)}")
        _, rec, start, end = fields
        return rec, seconds_to_frames(start), seconds_to_frames(end)
    if fmt == "rttm":
        fields = line.split()
        if len(fields) < 5 or fields[0] != "SPEAKER":
            raise ValueError("expected an RTTM SPEAKER row")
        rec = fields[1]
        onset = seconds_to_frames(fields[3])
        dur = seconds_to_frames(fields[4])
        return rec, onset, onset + dur
    if fmt == "jsonl":
        obj = json.loads(line)
        if not isinstance(obj, dict):
            raise ValueError("expected a JSON object")
        start, end = obj["start_frames"], obj["end_frames"]
        if not (isinstance(start, int) and isinstance(end, int)):
            raise ValueError("start_frames/end_frames must be integers")
        return str(obj["rec_id"]), start, end
    raise ValueError(f"unknown segment format {fmt!r}")


def parse_segments(lines: Iterable[str], fmt: str, path=None) -> dict[str, SegmentList]:
    """Group segment rows by recording, validating each recording's list."""
    if fmt not in SEGMENT_FORMATS:
        raise ValueError(f"unknown segment format {fmt!r}")
    by_rec: dict[str, list[Segment]] = {}
    for lineno, line in enumerate(lines, 1):
        if not line.strip() or (fmt == "rttm" and line.lstrip().startswith("#")):
            continue
        try:
            rec, start, end = _parse_line(fmt, line)
            seg = Segment(start, end)
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(str(exc), line=lineno, path=path) from None
        by_rec.setdefault(rec, []).append(seg)
    return {rec: validate_segments(segs, rec) for rec, segs in by_rec.items()}


def read_segments_by_recording(path, fmt: str) -> dict[str, SegmentList]:
    with open(path, encoding="utf-8") as fh:
        return parse_segments(fh, fmt, path=path)


def format_segments(lists: Sequence[SegmentList] | SegmentList, fmt: str) -> str:
    if isinstance(lists, SegmentList):
        lists = [lists]
    rows = []
    for sl in lists:
        rec = sl.rec_id or "rec"
        for seg in sl:
            if fmt == "kaldi":
                utt = f"{rec}_{seg.start:07d}_{seg.end:07d}"
                rows.append(f"{utt} {rec} {frames_to_seconds(seg.start)} {frames_to_seconds(seg.end)}")
            elif fmt == "rttm":
                rows.append(
                    f"SPEAKER {rec} 1 {frames_to_seconds(seg.start)} "
                    f"{frames_to_seconds(seg.duration)} <NA> <NA> speech <NA> <NA>"
                )
            elif fmt == "jsonl":
                rows.append(json.dumps({"rec_id": rec, "start_frames": seg.start, "end_frames": seg.end}))
            else:
                raise ValueError(f"unknown segment format {fmt!r}")
    return "".join(r + "\n" for r in rows)


def write_segments(path, lists: Sequence[SegmentList] | SegmentList | Mapping[str, SegmentList], fmt: str):
    if isinstance(lists, Mapping):
        lists = list(lists.values())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_segments(lists, fmt))
