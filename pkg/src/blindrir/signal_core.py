"""Time-frequency machinery shared by all processing stages.

Provides STFT/ISTFT with perfect reconstruction, a zero-phase octave-band
filter bank, and energy-decay utilities (Schroeder integration, EDR).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_SAMPLE_RATE = 48000
DEFAULT_OCTAVE_CENTERS = (125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0)


def _as_channel_matrix(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2:
        raise ValueError("samples must be a (channels, length) matrix")
    return x


@dataclass
class MultichannelSignal:
    """Time-domain sample matrix of shape (channels, length)."""

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = _as_channel_matrix(self.samples)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sample_rate_hz


@dataclass
class StftConfig:
    block_len: int = 2048
    hop: int = 128
    window: str = "sqrt_hann"
    fft_len: int | None = None

    def __post_init__(self):
        if self.fft_len is None:
            self.fft_len = self.block_len
        if self.hop <= 0 or self.block_len <= 0:
            raise ValueError("block_len and hop must be positive")
        if self.hop > self.block_len:
            raise ValueError("hop must not exceed block_len")
        if self.fft_len < self.block_len:
            raise ValueError("fft_len must be >= block_len")
        if self.fft_len & (self.fft_len - 1):
            raise ValueError("fft_len must be a power of two")
        if self.window not in ("sqrt_hann", "rectangular"):
            raise ValueError(f"unknown window '{self.window}'")

    @property
    def num_bins(self) -> int:
        return self.fft_len // 2 + 1

    def window_samples(self) -> np.ndarray:
        if self.window == "sqrt_hann":
            # periodic Hann, required for COLA at hop = block/2^k
            n = np.arange(self.block_len)
            return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.block_len))
        return np.ones(self.block_len)


@dataclass
class SpectralFrames:
    """Complex STFT tensor of shape (channels, frames, bins)."""

    data: np.ndarray
    config: StftConfig
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE
    original_len: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError("data must be (channels, frames, bins)")
        if self.data.shape[2] != self.config.num_bins:
            raise ValueError("bin count does not match config.fft_len")

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    @property
    def num_bins(self) -> int:
        return self.data.shape[2]


def stft(signal: MultichannelSignal, config: StftConfig) -> SpectralFrames:
    """Analyze a multichannel signal into overlapping windowed frames.

    The final partial frame is zero-padded so RIR tails are not dropped.
    """
    x = signal.samples
    n = x.shape[1]
    if n < config.block_len:
        raise ValueError("signal too short: need at least one block")
    n_hops = max(0, math.ceil((n - config.block_len) / config.hop))
    n_frames = n_hops + 1
    padded_len = n_hops * config.hop + config.block_len
    if padded_len > n:
        x = np.pad(x, ((0, 0), (0, padded_len - n)))
    win = config.window_samples()
    idx = np.arange(config.block_len)[np.newaxis, :] + \
        config.hop * np.arange(n_frames)[:, np.newaxis]
    frames = x[:, idx] * win  # (M, n_frames, block)
    data = np.fft.rfft(frames, n=config.fft_len, axis=-1)
    return SpectralFrames(data, config, signal.sample_rate_hz, original_len=n)


def istft(frames: SpectralFrames) -> MultichannelSignal:
    """Overlap-add resynthesis using the analysis window for synthesis.

    Raises if the window/hop pair does not satisfy COLA.
    """
    cfg = frames.config
    win = cfg.window_samples()
    n_frames = frames.num_frames
    out_len = (n_frames - 1) * cfg.hop + cfg.block_len

    wsum = np.zeros(out_len)
    for f in range(n_frames):
        wsum[f * cfg.hop:f * cfg.hop + cfg.block_len] += win ** 2
    # interior region must have a constant, nonzero window-square sum
    interior = wsum[cfg.block_len - cfg.hop:out_len - cfg.block_len + cfg.hop]
    if interior.size and interior.min() < 1e-6 * wsum.max():
        raise ValueError("window/hop pair does not satisfy COLA")

    grains = np.fft.irfft(frames.data, n=cfg.fft_len, axis=-1)[..., :cfg.block_len]
    grains = grains * win
    out = np.zeros((frames.num_channels, out_len))
    for f in range(n_frames):
        out[:, f * cfg.hop:f * cfg.hop + cfg.block_len] += grains[:, f]
    out /= np.maximum(wsum, 1e-12 * max(wsum.max(), 1.0))
    if frames.original_len is not None:
        out = out[:, :frames.original_len]
    return MultichannelSignal(out, frames.sample_rate_hz)


@dataclass
class OctaveBands:
    """Band-decomposed signal, band_signals shape (channels, bands, length)."""

    center_freqs_hz: tuple
    band_signals: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.center_freqs_hz = tuple(self.center_freqs_hz)
        if list(self.center_freqs_hz) != sorted(self.center_freqs_hz):
            raise ValueError("center frequencies must be ascending")


def octave_band_masks(num_bins: int, sample_rate_hz: int,
                      centers=DEFAULT_OCTAVE_CENTERS) -> np.ndarray:
    """Zero-phase, amplitude-complementary octave-band magnitude masks.

    Adjacent bands cross-fade over a sixth of an octave around the shared
    band edge with a raised cosine in log frequency, so the masks sum to
    exactly one over the passband union. Returns shape (bands, num_bins).
    """
    freqs = np.linspace(0.0, sample_rate_hz / 2.0, num_bins)
    centers = np.asarray(centers, dtype=np.float64)
    half_width = 2.0 ** (1.0 / 12.0)  # transition spans edge/h .. edge*h

    def rise(f, edge):
        # 0 below edge/h, 1 above edge*h, raised cosine in log f between
        with np.errstate(divide="ignore"):
            t = np.log2(np.maximum(f, 1e-12) / (edge / half_width)) / \
                (2.0 * np.log2(half_width))
        t = np.clip(t, 0.0, 1.0)
        return 0.5 - 0.5 * np.cos(np.pi * t)

    masks = np.zeros((len(centers), num_bins))
    for b, fc in enumerate(centers):
        lo = fc / np.sqrt(2.0)
        hi = fc * np.sqrt(2.0)
        masks[b] = rise(freqs, lo) * (1.0 - rise(freqs, hi))
    return masks


def octave_filter_bank(signal: MultichannelSignal,
                       centers=DEFAULT_OCTAVE_CENTERS) -> OctaveBands:
    """Decompose into zero-phase octave bands (125 Hz to 8 kHz by default)."""
    centers = tuple(centers)
    highest_edge = centers[-1] * np.sqrt(2.0)
    if signal.sample_rate_hz < 2.0 * highest_edge:
        raise ValueError("sample rate too low for highest octave band")
    x = signal.samples
    n = x.shape[1]
    # 2x padding keeps the filters' acausal pre-ring from wrapping back
    # into the tail of the signal
    n_fft = int(2 ** math.ceil(math.log2(max(2 * n, 2))))
    spec = np.fft.rfft(x, n=n_fft, axis=-1)
    masks = octave_band_masks(spec.shape[-1], signal.sample_rate_hz, centers)
    bands = np.fft.irfft(spec[:, np.newaxis, :] * masks[np.newaxis, :, :],
                         n=n_fft, axis=-1)[..., :n]
    return OctaveBands(centers, bands, signal.sample_rate_hz)


def filter_octave_band(x: np.ndarray, band_index: int, sample_rate_hz: int,
                       centers=DEFAULT_OCTAVE_CENTERS) -> np.ndarray:
    """Apply a single band of the octave filter bank to (..., length) data."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    # padding as in octave_filter_bank, avoids circular pre-ring wrap
    n_fft = int(2 ** math.ceil(math.log2(max(2 * n, 2))))
    spec = np.fft.rfft(x, n=n_fft, axis=-1)
    mask = octave_band_masks(spec.shape[-1], sample_rate_hz, centers)[band_index]
    return np.fft.irfft(spec * mask, n=n_fft, axis=-1)[..., :n]


def schroeder_edc(rir_channel: np.ndarray, truncation: int | None = None) -> np.ndarray:
    """Backward-integrated energy decay curve in dB, 0 dB at sample 0."""
    h = np.asarray(rir_channel, dtype=np.float64).ravel()
    if truncation is None:
        truncation = h.size
    if truncation > h.size:
        raise ValueError("truncation beyond signal length")
    e = h[:truncation] ** 2
    total = e.sum()
    if total <= 0.0:
        raise ValueError("no energy in RIR channel")
    decay = np.cumsum(e[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(decay / total)


def edr(rir_channel: np.ndarray, stft_config: StftConfig,
        sample_rate_hz: int = DEFAULT_SAMPLE_RATE,
        normalize: bool = False) -> np.ndarray:
    """Energy decay relief: per-bin backward-integrated STFT energy in dB.

    Returns shape (frames, bins). Without normalization, values are relative
    to the global maximum; with it, each bin starts at 0 dB.
    """
    h = np.asarray(rir_channel, dtype=np.float64).ravel()
    if not np.any(h):
        raise ValueError("no energy in RIR channel")
    frames = stft(MultichannelSignal(h, sample_rate_hz), stft_config)
    p = np.abs(frames.data[0]) ** 2  # (frames, bins)
    rel = np.cumsum(p[::-1], axis=0)[::-1]
    if normalize:
        ref = np.maximum(rel[0], 1e-300)
    else:
        ref = rel.max()
    with np.errstate(divide="ignore", invalid="ignore"):
        return 10.0 * np.log10(np.maximum(rel, 1e-300) / ref)
