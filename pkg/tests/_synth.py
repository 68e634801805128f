"""Synthetic two-class audio for the end-to-end checks.

Bonafide clips are a sum of three random harmonics of a random
fundamental over a pink-noise floor. Spoofed clips run the identical
construction, then invert the phase of the second harmonic and quantize
the clip's magnitude spectrum to 4 bits — a crude re-synthesis artifact
that thins out the noise floor the way low-bit vocoder output does. Both
classes are peak-normalized, so only the spectral texture separates them.
"""
from __future__ import annotations

import numpy as np

FS = 16000
CLIP_LEN = 32000


def make_clip(rng: np.random.Generator, spoof: bool) -> np.ndarray:
    t = np.arange(CLIP_LEN) / FS
    f0 = rng.uniform(100.0, 400.0)
    amps = rng.uniform(0.2, 1.0, size=3)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    if spoof:
        phases[1] += np.pi

    x = np.zeros(CLIP_LEN)
    for k in range(3):
        x += amps[k] * np.sin(2.0 * np.pi * f0 * (k + 1) * t + phases[k])

    # pink floor: 1/sqrt(f) shaping of white noise
    white = rng.standard_normal(CLIP_LEN)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(CLIP_LEN, 1.0 / FS)
    spec *= 1.0 / np.sqrt(np.maximum(freqs, freqs[1]))
    pink = np.fft.irfft(spec, CLIP_LEN)
    x += 0.05 * pink / pink.std()

    if spoof:
        s = np.fft.rfft(x)
        mag = np.abs(s)
        peak = mag.max()
        mag = np.round(mag / peak * 15.0) / 15.0 * peak
        x = np.fft.irfft(mag * np.exp(1j * np.angle(s)), CLIP_LEN)

    return (0.9 * x / np.max(np.abs(x))).astype(np.float32)


def make_corpus(seed: int, n_per_class: int):
    """Alternating bonafide/spoof clips with stable ids.

    Returns (clips, labels, utt_ids); label 0 = bonafide, 1 = spoof.
    """
    rng = np.random.default_rng(seed)
    clips, labels, ids = [], [], []
    for i in range(n_per_class):
        for label in (0, 1):
            clips.append(make_clip(rng, spoof=bool(label)))
            labels.append(label)
            ids.append(f"SYN_{'S' if label else 'B'}_{i:04d}")
    return clips, np.array(labels), ids
