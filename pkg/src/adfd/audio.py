"""WAV loading and fixed-length segmentation.

All downstream processing assumes mono 16 kHz audio cut into 2 second
segments (32000 samples). Clips that do not divide evenly are extended by
cyclic repetition, so very short clips are still usable.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyAudioError, SampleRateMismatchError, UnsupportedFormatError

SAMPLE_RATE = 16000
SEGMENT_LEN = 2 * SAMPLE_RATE  # 32000 samples = 2 s

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3


@dataclass
class AudioClip:
    """A mono clip with samples normalized to [-1, 1]."""

    utt_id: str
    samples: np.ndarray  # float32, shape (n,)
    sample_rate_hz: int = SAMPLE_RATE


@dataclass
class Segment:
    """One 2 second window of a clip."""

    utt_id: str
    index: int
    samples: np.ndarray  # float32, shape (32000,)


def _iter_riff_chunks(data: bytes, path: Path):
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise UnsupportedFormatError(f"{path}: truncated {chunk_id!r} chunk")
        yield chunk_id, body
        pos += 8 + size + (size & 1)  # chunks are word aligned


def load_audio(path: str | Path) -> AudioClip:
    """Read a mono 16 kHz WAV file (PCM-16 or float-32).

    The utterance id is the file stem. Chunks other than fmt/data are
    skipped. PCM-16 samples are scaled by 1/32768; float samples are
    clipped to [-1, 1].
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedFormatError(f"{path}: not a RIFF/WAVE file")

    fmt_body = None
    payload = None
    for chunk_id, body in _iter_riff_chunks(data, path):
        if chunk_id == b"fmt " and fmt_body is None:
            fmt_body = body
        elif chunk_id == b"data" and payload is None:
            payload = body

    if fmt_body is None or len(fmt_body) < 16:
        raise UnsupportedFormatError(f"{path}: missing fmt chunk")
    if payload is None:
        raise UnsupportedFormatError(f"{path}: missing data chunk")

    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt_body, 0)
    if audio_format not in (_WAVE_FORMAT_PCM, _WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedFormatError(f"{path}: unsupported codec (format tag {audio_format})")
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: expected mono, got {channels} channels")
    if audio_format == _WAVE_FORMAT_PCM and bits != 16:
        raise UnsupportedFormatError(f"{path}: PCM must be 16-bit, got {bits}")
    if audio_format == _WAVE_FORMAT_IEEE_FLOAT and bits != 32:
        raise UnsupportedFormatError(f"{path}: float must be 32-bit, got {bits}")
    if rate != SAMPLE_RATE:
        raise SampleRateMismatchError(f"{path}: sample rate {rate} Hz, expected {SAMPLE_RATE}")

    if audio_format == _WAVE_FORMAT_PCM:
        usable = len(payload) // 2 * 2
        samples = np.frombuffer(payload[:usable], dtype="<i2").astype(np.float32) / 32768.0
    else:
        usable = len(payload) // 4 * 4
        raw = np.frombuffer(payload[:usable], dtype="<f4")
        samples = np.clip(raw, -1.0, 1.0).astype(np.float32)

    if samples.size == 0:
        raise EmptyAudioError(f"{path}: no samples")
    return AudioClip(utt_id=path.stem, samples=samples, sample_rate_hz=rate)


def segment_clip(clip: AudioClip) -> list[Segment]:
    """Cut a clip into ceil(n / 32000) non-overlapping 2 s segments.

    The final short window (or the only window of a short clip) is filled
    by repeating the whole clip cyclically from its start until 32000
    samples are reached.
    """
    x = np.asarray(clip.samples, dtype=np.float32)
    if x.ndim != 1:
        raise UnsupportedFormatError(f"{clip.utt_id}: expected 1-d samples, got shape {x.shape}")
    n = x.size
    if n == 0:
        raise EmptyAudioError(f"{clip.utt_id}: empty clip")

    count = -(-n // SEGMENT_LEN)
    segments = []
    for i in range(count):
        chunk = x[i * SEGMENT_LEN:(i + 1) * SEGMENT_LEN]
        if chunk.size < SEGMENT_LEN:
            # np.resize tiles the whole clip from the beginning
            chunk = np.concatenate([chunk, np.resize(x, SEGMENT_LEN - chunk.size)])
        segments.append(Segment(clip.utt_id, i, np.array(chunk, dtype=np.float32)))
    return segments
