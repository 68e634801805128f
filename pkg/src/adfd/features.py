"""Spectrogram front-ends for 2 second segments.

Six recipes are supported, all producing a 64x64x3 tensor per segment
(static map plus delta and delta-delta):

  stft       power STFT with the 513 FFT bins mean-pooled into 64 bands
  stft-mel   power STFT through a 64-band triangular mel filterbank
  stft-gam   power STFT through a 64-band gammatone magnitude filterbank
  stft-lf    power STFT through a 64-band triangular linear filterbank
  cqt        constant-Q magnitude transform, 64 bins at 8 bins/octave
  wt         Morlet wavelet scalogram, 64 geometrically spaced scales

Conventions shared by every recipe: 16 kHz input, analysis hop of 512
samples, 64 time frames (the 63 computed frames are padded by repeating
the last one), row index increases with center frequency, natural log
compression with a 1e-10 floor, optional orthonormal DCT-II along either
axis, and per-channel z-score normalization of the final tensor.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .audio import SAMPLE_RATE, SEGMENT_LEN, Segment
from .errors import InvalidKindError, ShapeMismatchError

N_FFT = 1024
N_BINS = N_FFT // 2 + 1  # 513
HOP = 512
N_FILTERS = 64
N_FRAMES = 64
N_RAW_FRAMES = SEGMENT_LEN // HOP + 1  # 63 computed frames, padded to 64
LOG_FLOOR = 1e-10

CQT_FMIN = 31.25
CQT_BINS_PER_OCTAVE = 8

CWT_OMEGA0 = 6.0
CWT_FMIN = 60.0
CWT_FMAX = 7800.0


class Transform(Enum):
    STFT = "stft"
    CQT = "cqt"
    WT = "wt"


class FilterKind(Enum):
    NONE = "none"
    MEL = "mel"
    GAMMATONE = "gammatone"
    LINEAR = "linear"


class DctAxis(Enum):
    FREQUENCY = "freq"
    TIME = "time"


@dataclass(frozen=True)
class SpectralConfig:
    """Full description of one feature recipe.

    window_len, hop_len and n_filters are fixed for this toolkit; they are
    carried explicitly so the configuration hash pins them.
    """

    transform: Transform = Transform.STFT
    filterbank: FilterKind = FilterKind.NONE
    dct: bool = False
    dct_axis: DctAxis = DctAxis.FREQUENCY
    window_len: int = N_FFT
    hop_len: int = HOP
    n_filters: int = N_FILTERS
    log_floor: float = LOG_FLOOR

    def __post_init__(self):
        if not isinstance(self.transform, Transform):
            raise InvalidKindError(f"unknown transform: {self.transform!r}")
        if not isinstance(self.filterbank, FilterKind):
            raise InvalidKindError(f"unknown filterbank: {self.filterbank!r}")
        if not isinstance(self.dct_axis, DctAxis):
            raise InvalidKindError(f"unknown DCT axis: {self.dct_axis!r}")
        if self.transform is not Transform.STFT and self.filterbank is not FilterKind.NONE:
            raise InvalidKindError(
                f"{self.transform.value} produces 64 bands natively; "
                "a filterbank only applies to the STFT"
            )
        if (self.window_len, self.hop_len, self.n_filters) != (N_FFT, HOP, N_FILTERS):
            raise InvalidKindError(
                "window_len/hop_len/n_filters are fixed at "
                f"{N_FFT}/{HOP}/{N_FILTERS} in this toolkit"
            )

    def hash64(self) -> int:
        """Stable unsigned 64-bit hash of every field."""
        canon = "|".join([
            f"transform={self.transform.value}",
            f"filterbank={self.filterbank.value}",
            f"dct={int(self.dct)}",
            f"dct_axis={self.dct_axis.value}",
            f"window_len={self.window_len}",
            f"hop_len={self.hop_len}",
            f"n_filters={self.n_filters}",
            f"log_floor={self.log_floor!r}",
        ])
        digest = hashlib.blake2b(canon.encode("ascii"), digest_size=8).digest()
        return int.from_bytes(digest, "little")


RECIPES = {
    "stft": (Transform.STFT, FilterKind.NONE),
    "cqt": (Transform.CQT, FilterKind.NONE),
    "wt": (Transform.WT, FilterKind.NONE),
    "stft-lf": (Transform.STFT, FilterKind.LINEAR),
    "stft-mel": (Transform.STFT, FilterKind.MEL),
    "stft-gam": (Transform.STFT, FilterKind.GAMMATONE),
}


def config_for_recipe(name: str, dct: bool = False,
                      dct_axis: DctAxis = DctAxis.FREQUENCY) -> SpectralConfig:
    """Build a SpectralConfig from a recipe name like 'stft-lf'."""
    try:
        transform, bank = RECIPES[name]
    except KeyError:
        raise InvalidKindError(
            f"unknown recipe {name!r}; expected one of {sorted(RECIPES)}") from None
    return SpectralConfig(transform=transform, filterbank=bank, dct=dct, dct_axis=dct_axis)


@dataclass(frozen=True)
class FilterBank:
    """A bank of 64 spectral weighting rows over the 513 FFT bins.

    f_lo and f_hi are the centers of the first and last filter: inside
    [f_lo, f_hi] every FFT bin is guaranteed positive weight from at
    least one row.
    """

    kind: FilterKind
    weights: np.ndarray  # float32, shape (64, 513), non-negative
    f_lo: float
    f_hi: float


@dataclass
class FeatureTensor:
    """Final 64x64x3 feature tensor for one segment."""

    utt_id: str
    seg_index: int
    data: np.ndarray  # float32, shape (64, 64, 3)
    config_hash: int


# --------------------------------------------------------------------------
# STFT
# --------------------------------------------------------------------------

@lru_cache(maxsize=4)
def _hann_periodic(n: int) -> np.ndarray:
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    w.flags.writeable = False
    return w


def _frame_signal(x: np.ndarray) -> np.ndarray:
    """Reflect-pad by hop/2 on each side and cut 63 windowed frames."""
    padded = np.pad(x, HOP, mode="reflect")
    n_frames = (padded.size - N_FFT) // HOP + 1  # 63 for 32000 samples
    view = np.lib.stride_tricks.sliding_window_view(padded, N_FFT)
    return view[::HOP][:n_frames] * _hann_periodic(N_FFT)


def stft_power(segment: Segment) -> np.ndarray:
    """Power spectrogram, shape (513, 64).

    Hann window of 1024 samples, hop 512, reflect padding of 512 samples
    at each edge. The 63 computed frames are padded to 64 by repeating
    the last frame. Values are squared magnitudes.
    """
    x = _segment_samples(segment)
    frames = _frame_signal(x)
    spec = np.fft.rfft(frames, axis=1)
    power = spec.real ** 2 + spec.imag ** 2  # (63, 513)
    power = np.concatenate([power, power[-1:]], axis=0)
    return np.ascontiguousarray(power.T)


def _segment_samples(segment: Segment) -> np.ndarray:
    x = np.asarray(segment.samples, dtype=np.float64)
    if x.shape != (SEGMENT_LEN,):
        raise ShapeMismatchError(
            f"segment must hold exactly {SEGMENT_LEN} samples, got shape {x.shape}")
    return x


# Band edges for mean-pooling 513 bins into 64 groups: round(513*k/64),
# half-up so the single exact .5 case (k=32) rounds to 257.
_POOL_EDGES = np.floor(N_BINS * np.arange(N_FILTERS + 1) / N_FILTERS + 0.5).astype(np.int64)


def pool_linear_bins(power: np.ndarray) -> np.ndarray:
    """Mean-pool 513 FFT bins into 64 contiguous groups of 8 or 9 bins."""
    power = np.asarray(power)
    if power.ndim != 2 or power.shape[0] != N_BINS:
        raise ShapeMismatchError(f"expected (513, T) spectrogram, got {power.shape}")
    sums = np.add.reduceat(power, _POOL_EDGES[:-1], axis=0)
    counts = np.diff(_POOL_EDGES).astype(power.dtype)
    return sums / counts[:, None]


# --------------------------------------------------------------------------
# Filterbanks
# --------------------------------------------------------------------------

def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _erb_bandwidth(f):
    # Glasberg and Moore equivalent rectangular bandwidth
    return 24.7 * (4.37 * np.asarray(f, dtype=np.float64) / 1000.0 + 1.0)


def _hz_to_erb_rate(f):
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(f, dtype=np.float64))


def _erb_rate_to_hz(e):
    return (10.0 ** (np.asarray(e, dtype=np.float64) / 21.4) - 1.0) / 0.00437


def _fft_bin_freqs() -> np.ndarray:
    return np.arange(N_BINS) * (SAMPLE_RATE / N_FFT)


def _triangle_rows(edges_hz: np.ndarray) -> np.ndarray:
    """Triangular filters with peak 1.0 from 66 band edges in Hz."""
    freqs = _fft_bin_freqs()
    rows = np.zeros((N_FILTERS, N_BINS))
    for k in range(N_FILTERS):
        lo, center, hi = edges_hz[k], edges_hz[k + 1], edges_hz[k + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        rows[k] = np.clip(np.minimum(rising, falling), 0.0, None)
    return rows


@lru_cache(maxsize=8)
def build_filterbank(kind: FilterKind) -> FilterBank:
    """Build one of the three 64-row filterbanks over the 513 FFT bins.

    mel:       triangles with centers equally spaced on the HTK mel scale
               over [0, 8000] Hz
    linear:    triangles with filter k (1-indexed) centered at 8000*k/65 Hz
    gammatone: 4th order gammatone magnitude response sampled at the bin
               frequencies, centers ERB-spaced over [50, 7800] Hz, each
               row peak-normalized to 1.0
    """
    nyquist = SAMPLE_RATE / 2.0
    if kind is FilterKind.MEL:
        edges = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(nyquist), N_FILTERS + 2))
        rows = _triangle_rows(edges)
        f_lo, f_hi = float(edges[1]), float(edges[-2])
    elif kind is FilterKind.LINEAR:
        edges = np.linspace(0.0, nyquist, N_FILTERS + 2)
        rows = _triangle_rows(edges)
        f_lo, f_hi = float(edges[1]), float(edges[-2])
    elif kind is FilterKind.GAMMATONE:
        centers = _erb_rate_to_hz(
            np.linspace(_hz_to_erb_rate(50.0), _hz_to_erb_rate(7800.0), N_FILTERS))
        freqs = _fft_bin_freqs()
        bw = 1.019 * _erb_bandwidth(centers)
        # |1 + j (f - fc) / b|^-4 for a 4th order filter
        rows = (1.0 + ((freqs[None, :] - centers[:, None]) / bw[:, None]) ** 2) ** -2
        rows /= rows.max(axis=1, keepdims=True)
        f_lo, f_hi = float(centers[0]), float(centers[-1])
    else:
        raise InvalidKindError(f"no filterbank of kind {kind!r}")
    return FilterBank(kind=kind, weights=rows.astype(np.float32), f_lo=f_lo, f_hi=f_hi)


def apply_filterbank(power: np.ndarray, bank: FilterBank) -> np.ndarray:
    """Project a (513, T) power spectrogram onto 64 bands."""
    power = np.asarray(power)
    if power.ndim != 2 or power.shape[0] != N_BINS:
        raise ShapeMismatchError(f"expected (513, T) spectrogram, got {power.shape}")
    if bank.weights.shape != (N_FILTERS, N_BINS):
        raise ShapeMismatchError(f"bad filterbank shape {bank.weights.shape}")
    return bank.weights.astype(np.float64) @ power


# --------------------------------------------------------------------------
# Constant-Q transform
# --------------------------------------------------------------------------

def cqt_center_frequencies() -> np.ndarray:
    """f_k = 31.25 * 2^(k/8) Hz for k = 0..63 (8 octaves span)."""
    return CQT_FMIN * 2.0 ** (np.arange(N_FILTERS) / CQT_BINS_PER_OCTAVE)


@lru_cache(maxsize=1)
def _cqt_kernels() -> tuple[tuple[np.ndarray, ...], int]:
    """Hann-windowed complex kernels, one per bin, normalized by length."""
    q = 1.0 / (2.0 ** (1.0 / CQT_BINS_PER_OCTAVE) - 1.0)
    kernels = []
    for f in cqt_center_frequencies():
        n = min(math.ceil(q * SAMPLE_RATE / f), SEGMENT_LEN)
        t = np.arange(n) - (n - 1) / 2.0
        kern = np.hanning(n) * np.exp(-2j * np.pi * f * t / SAMPLE_RATE) / n
        kern.flags.writeable = False
        kernels.append(kern)
    pad = max(k.size for k in kernels)
    return tuple(kernels), pad


def cqt_magnitude(segment: Segment) -> np.ndarray:
    """Constant-Q magnitude spectrogram, shape (64, 64).

    Frame t is centered at sample t*512; the segment is zero-padded so
    every kernel window fits. The 63 frames are padded to 64 by repeating
    the last one. Row index increases with center frequency.
    """
    x = _segment_samples(segment)
    kernels, pad = _cqt_kernels()
    padded = np.pad(x, pad)
    centers = pad + HOP * np.arange(N_RAW_FRAMES)  # frame t sits at sample t*512
    out = np.empty((N_FILTERS, centers.size))
    for k, kern in enumerate(kernels):
        n = kern.size
        windows = np.lib.stride_tricks.sliding_window_view(padded, n)
        frames = windows[centers - n // 2]
        out[k] = np.abs(frames @ kern)
    return np.concatenate([out, out[:, -1:]], axis=1)


# --------------------------------------------------------------------------
# Morlet wavelet scalogram
# --------------------------------------------------------------------------

def cwt_center_frequencies() -> np.ndarray:
    """64 center frequencies geometrically spaced over [60, 7800] Hz."""
    return np.geomspace(CWT_FMIN, CWT_FMAX, N_FILTERS)


def cwt_scales() -> np.ndarray:
    """Morlet scales in samples: s = omega0 * fs / (2 pi f)."""
    return CWT_OMEGA0 * SAMPLE_RATE / (2.0 * np.pi * cwt_center_frequencies())


@lru_cache(maxsize=1)
def _cwt_frequency_gains() -> np.ndarray:
    """Analytic Morlet response per scale on the full FFT grid.

    L1 normalization: each scale's frequency response is a unit-peak
    Gaussian exp(-(s*w - omega0)^2 / 2) on w > 0, so a unit tone at a
    scale's center frequency responds with the same magnitude at every
    scale.
    """
    omega = 2.0 * np.pi * np.fft.fftfreq(SEGMENT_LEN)  # rad/sample
    scales = cwt_scales()
    gains = np.exp(-0.5 * (scales[:, None] * omega[None, :] - CWT_OMEGA0) ** 2)
    gains[:, omega <= 0] = 0.0
    gains.flags.writeable = False
    return gains


def cwt_scalogram(segment: Segment) -> np.ndarray:
    """Morlet scalogram, shape (64, 64).

    FFT-based convolution with 64 analytic Morlet wavelets (omega0 = 6).
    Magnitudes are averaged over 63 non-overlapping 512-sample blocks
    (the last block holds the remaining 256 samples), then padded to 64
    frames by repeating the last one. Row 0 is the lowest frequency.
    """
    x = _segment_samples(segment)
    spectrum = np.fft.fft(x)
    z = np.fft.ifft(_cwt_frequency_gains() * spectrum[None, :], axis=1)
    mag = np.abs(z)
    n_full = SEGMENT_LEN // HOP  # 62 whole blocks; block 63 holds the tail
    full = mag[:, :n_full * HOP].reshape(N_FILTERS, n_full, HOP).mean(axis=2)
    last = mag[:, n_full * HOP:].mean(axis=1, keepdims=True)
    return np.concatenate([full, last, last], axis=1)


# --------------------------------------------------------------------------
# Post-processing
# --------------------------------------------------------------------------

def log_compress(spec: np.ndarray, floor: float = LOG_FLOOR) -> np.ndarray:
    """Natural log with a floor: ln(max(x, floor))."""
    return np.log(np.maximum(np.asarray(spec, dtype=np.float64), floor))


@lru_cache(maxsize=4)
def dct_matrix(n: int = N_FILTERS) -> np.ndarray:
    """Orthonormal DCT-II matrix: row k is sqrt(2/n) cos(pi (2m+1) k / 2n),
    with row 0 scaled by 1/sqrt(2)."""
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    mat[0] /= np.sqrt(2.0)
    mat.flags.writeable = False
    return mat


def dct_transform(spec: np.ndarray, axis: DctAxis = DctAxis.FREQUENCY) -> np.ndarray:
    """Orthonormal DCT-II along the frequency (rows) or time (columns)
    axis. All 64 coefficients are kept, so the shape is unchanged."""
    spec = np.asarray(spec, dtype=np.float64)
    if spec.shape != (N_FILTERS, N_FRAMES):
        raise ShapeMismatchError(f"expected (64, 64) map, got {spec.shape}")
    mat = dct_matrix(N_FILTERS)
    if axis is DctAxis.FREQUENCY:
        return mat @ spec
    if axis is DctAxis.TIME:
        return spec @ mat.T
    raise InvalidKindError(f"unknown DCT axis: {axis!r}")


def _delta(spec: np.ndarray) -> np.ndarray:
    # regression window of 2: d_t = (c_{t+1} - c_{t-1} + 2 (c_{t+2} - c_{t-2})) / 10
    p = np.pad(spec, ((0, 0), (2, 2)), mode="edge")
    return (p[:, 3:-1] - p[:, 1:-3] + 2.0 * (p[:, 4:] - p[:, :-4])) / 10.0


def delta_stack(spec: np.ndarray) -> np.ndarray:
    """Stack [static, delta, delta-delta] along a trailing channel axis.

    Deltas use the standard regression formula with a window of 2 and
    replicate-edge padding along time; delta-delta applies it twice.
    """
    spec = np.asarray(spec, dtype=np.float64)
    if spec.shape != (N_FILTERS, N_FRAMES):
        raise ShapeMismatchError(f"expected (64, 64) map, got {spec.shape}")
    d1 = _delta(spec)
    d2 = _delta(d1)
    return np.stack([spec, d1, d2], axis=-1)


def _znorm_channels(tensor: np.ndarray, std_floor: float = 1e-8) -> np.ndarray:
    mean = tensor.mean(axis=(0, 1), keepdims=True)
    std = tensor.std(axis=(0, 1), keepdims=True)
    out = (tensor - mean) / np.maximum(std, std_floor)
    # a channel whose std sits under the floor is constant at output
    # precision; pin it to zero instead of amplifying summation noise
    return np.where(std < std_floor, 0.0, out)


def extract_features(segment: Segment, cfg: SpectralConfig) -> FeatureTensor:
    """Run the full pipeline for one segment under one recipe.

    transform -> (filterbank | linear-bin pooling) -> log -> optional DCT
    -> delta stacking -> per-channel z-score. Deterministic: equal inputs
    give bit-identical tensors.
    """
    if cfg.transform is Transform.STFT:
        power = stft_power(segment)
        if cfg.filterbank is FilterKind.NONE:
            spec = pool_linear_bins(power)
        else:
            spec = apply_filterbank(power, build_filterbank(cfg.filterbank))
    elif cfg.transform is Transform.CQT:
        spec = cqt_magnitude(segment)
    else:
        spec = cwt_scalogram(segment)

    spec = log_compress(spec, cfg.log_floor)
    if cfg.dct:
        spec = dct_transform(spec, cfg.dct_axis)
    tensor = _znorm_channels(delta_stack(spec))
    return FeatureTensor(
        utt_id=segment.utt_id,
        seg_index=segment.index,
        data=tensor.astype(np.float32),
        config_hash=cfg.hash64(),
    )
