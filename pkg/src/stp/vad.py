"""Voice activity detection: a small energy detector plus readers for external VAD output."""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import EmptyAudioError, ParseError, ValidationError
from .segments import FRAMES_PER_SECOND, SegmentList, read_segments_by_recording, validate_segments

SAMPLE_RATES = (8000, 16000, 44100, 48000)
# dB above the noise floor a frame must reach, indexed by aggressiveness
MARGIN_DB = (6.0, 9.0, 12.0, 15.0)
NOISE_PERCENTILE = 10.0


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValidationError("audio must be mono (1-D samples)")
        if self.sample_rate not in SAMPLE_RATES:
            raise ValidationError(f"unsupported sample rate {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def num_frames(self) -> int:
        """Length in whole 10-ms frames."""
        return len(self.samples) * FRAMES_PER_SECOND // self.sample_rate

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class VadConfig:
    frame_ms: int = 10
    padding_ms: int = 150
    aggressiveness: int = 3
    energy_floor_db: float = -60.0

    def __post_init__(self):
        if self.frame_ms <= 0 or 1000 % self.frame_ms:
            raise ValidationError(f"frame_ms must divide 1000, got {self.frame_ms}")
        if self.padding_ms < 0:
            raise ValidationError("padding_ms must be non-negative")
        if self.aggressiveness not in (0, 1, 2, 3):
            raise ValidationError("aggressiveness must be 0, 1, 2 or 3")


def frame_energies(audio: AudioBuffer, frame_ms: int) -> np.ndarray:
    frame_len = audio.sample_rate * frame_ms // 1000
    return _kernels.frame_db(audio.samples, frame_len)


def speech_threshold(energies: np.ndarray, config: VadConfig) -> float:
    noise = float(np.percentile(energies, NOISE_PERCENTILE))
    return max(noise, config.energy_floor_db) + MARGIN_DB[config.aggressiveness]


def energy_vad(audio: AudioBuffer, config: VadConfig = VadConfig(), rec_id: str | None = None) -> SegmentList:
    """Mark frames louder than the adaptive threshold as speech.

    The threshold sits ``MARGIN_DB[aggressiveness]`` above the 10th
    percentile frame energy, never below ``energy_floor_db``.  Speech runs are
    padded by ``padding_ms`` on both sides, clipped to the audio, and
    overlapping runs are unioned.  A trailing partial frame is ignored.
    """
    if len(audio.samples) == 0:
        raise EmptyAudioError("empty audio buffer")
    energies = frame_energies(audio, config.frame_ms)
    if energies.size == 0:
        return SegmentList((), rec_id)
    speech = energies > speech_threshold(energies, config)

    # run boundaries in VAD frames
    edges = np.diff(np.concatenate(([0], speech.astype(np.int8), [0])))
    run_starts = np.flatnonzero(edges == 1)
    run_ends = np.flatnonzero(edges == -1)

    total_ms = energies.size * config.frame_ms
    intervals = []
    for rs, re_ in zip(run_starts.tolist(), run_ends.tolist()):
        lo = max(0, rs * config.frame_ms - config.padding_ms)
        hi = min(total_ms, re_ * config.frame_ms + config.padding_ms)
        lo_f, hi_f = lo // 10, -(-hi // 10)
        if intervals and lo_f <= intervals[-1][1]:
            intervals[-1][1] = max(intervals[-1][1], hi_f)
        else:
            intervals.append([lo_f, hi_f])
    return validate_segments([tuple(iv) for iv in intervals], rec_id)


def read_wav(path) -> AudioBuffer:
    """Read a mono 16-bit PCM WAV file into samples in [-1, 1]."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValidationError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise ValidationError(f"{path}: expected 16-bit PCM")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return AudioBuffer(pcm / 32768.0, rate)


def write_wav(path, audio: AudioBuffer):
    pcm = np.clip(np.round(audio.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(pcm.tobytes())


def read_external_segments(path, fmt: str, rec_id: str | None = None) -> SegmentList:
    """Read segments for one recording from a kaldi, rttm or jsonl file.

    If the file covers several recordings, ``rec_id`` selects one.
    """
    by_rec = read_segments_by_recording(path, fmt)
    if rec_id is not None:
        return by_rec.get(rec_id, SegmentList((), rec_id))
    if not by_rec:
        return SegmentList(())
    if len(by_rec) > 1:
        raise ParseError(f"file holds {len(by_rec)} recordings; pass rec_id", path=path)
    return next(iter(by_rec.values()))
