"""Binaural rendering of multichannel RIRs via magnitude-least-squares filters.

Rendering filters are complex-least-squares-optimal below a cutoff and
minimize the magnitude error above it (variable exchange), computed
end-to-end from paired ATF/HRTF direction grids without a spherical
harmonics decomposition.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len
from scipy.signal import fftconvolve

from .beamform import AtfSet
from .signal_core import MultichannelSignal
from .sysid import RirEstimate


@dataclass
class RenderingFilters:
    """Per-ear rendering filters, freq-domain shape (2, channels, bins)."""

    filters_freq: np.ndarray
    n_taps: int
    cutoff_hz: float
    grid_size: int
    sample_rate_hz: int
    magnitude_objective: np.ndarray | None = None  # per-iteration history

    def __post_init__(self):
        self.filters_freq = np.asarray(self.filters_freq)
        if self.filters_freq.ndim != 3 or self.filters_freq.shape[0] != 2:
            raise ValueError("filters_freq must be (2, channels, bins)")
        if not np.all(np.isfinite(self.filters_freq)):
            raise ValueError("filters must be finite")

    @property
    def num_channels(self) -> int:
        return self.filters_freq.shape[1]

    def time_domain(self) -> np.ndarray:
        """Impulse responses of the filters, shape (2, channels, n_taps)."""
        return np.fft.irfft(self.filters_freq, n=self.n_taps, axis=-1)


@dataclass
class Brir:
    """Two-channel binaural room impulse response."""

    samples: np.ndarray  # (2, length)
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.shape[0] != 2:
            raise ValueError("BRIR must have exactly two channels")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]


def _match_grids(atf: AtfSet, hrtf: AtfSet) -> AtfSet:
    if atf.directions == hrtf.directions:
        return hrtf
    warnings.warn("HRTF grid differs from ATF grid, resampling by nearest "
                  "neighbor")
    idx = [hrtf.nearest_direction(az, el)[0] for az, el in atf.directions]
    return AtfSet(list(atf.directions), hrtf.impulse_responses[idx],
                  hrtf.sample_rate_hz, hrtf.near_field_mouth)


def compute_emagls_filters(atf: AtfSet, hrtf: AtfSet,
                           cutoff_hz: float = 2000.0,
                           n_taps: int = 512,
                           iterations: int = 20) -> RenderingFilters:
    """Rendering filters mapping array channels to the two ears.

    Below the cutoff, the per-bin complex least-squares problem over the
    direction grid is solved with Tikhonov regularization; above it, the
    phase of the target is exchanged iteratively against the current
    solution so only the magnitude error is minimized.
    """
    if hrtf.num_channels != 2:
        raise ValueError("HRTF set must have two channels (ears)")
    hrtf = _match_grids(atf, hrtf)
    if atf.num_directions < atf.num_channels:
        raise ValueError("direction grid smaller than the channel count")

    bins = n_taps // 2 + 1
    a = atf.freq_responses(n_taps)            # (D, M, bins)
    h = hrtf.freq_responses(n_taps)           # (D, 2, bins)
    m = atf.num_channels
    freqs = np.fft.rfftfreq(n_taps, 1.0 / atf.sample_rate_hz)

    filters = np.zeros((2, m, bins), dtype=np.complex128)
    objective = np.zeros(iterations + 1)
    for k in range(bins):
        ak = a[:, :, k]                       # (D, M)
        gram = ak.conj().T @ ak
        reg = 1e-4 * np.trace(gram).real / m
        gram_reg = gram + reg * np.eye(m)
        if np.linalg.cond(gram_reg) > 1e8:
            raise ValueError("ill-conditioned direction grid")
        for ear in range(2):
            hk = h[:, ear, k]                 # (D,)
            w = np.linalg.solve(gram_reg, ak.conj().T @ hk)
            if freqs[k] > cutoff_hz:
                # with the optimal phase the residual equals the magnitude
                # error, so this is the exact objective of the exchange
                def cost(w):
                    return (np.sum((np.abs(ak @ w) - np.abs(hk)) ** 2)
                            + reg * np.sum(np.abs(w) ** 2))
                objective[0] += cost(w)
                for it in range(iterations):
                    target = np.abs(hk) * np.exp(1j * np.angle(ak @ w))
                    w = np.linalg.solve(gram_reg, ak.conj().T @ target)
                    objective[it + 1] += cost(w)
            filters[ear, :, k] = w
    return RenderingFilters(filters, n_taps, cutoff_hz, atf.num_directions,
                            atf.sample_rate_hz, objective)


def render_brir(rir: RirEstimate, filters: RenderingFilters) -> Brir:
    """Collapse a multichannel RIR to a BRIR: per ear, sum_m w_m^* rir_m."""
    x = rir.rir.samples
    if x.shape[0] != filters.num_channels:
        raise ValueError("channel count mismatch between RIR and filters")
    if rir.rir.sample_rate_hz != filters.sample_rate_hz:
        raise ValueError("sample-rate mismatch")
    out_len = x.shape[1] + filters.n_taps - 1
    n_fft = next_fast_len(out_len)
    taps = filters.time_domain()              # (2, M, n_taps)
    w = np.fft.rfft(taps, n=n_fft, axis=-1)
    r = np.fft.rfft(x, n=n_fft, axis=-1)
    # filters are stored as the coefficients applied to the RIR spectra, so
    # a plane wave from a grid direction renders to its HRTF directly
    y = np.einsum("emk,mk->ek", w, r)
    brir = np.fft.irfft(y, n=n_fft, axis=-1)[:, :out_len]
    return Brir(brir, rir.rir.sample_rate_hz)


def auralize(brir: Brir, source: MultichannelSignal) -> MultichannelSignal:
    """Convolve a single-channel source with the BRIR, one output per ear."""
    if source.num_channels != 1:
        raise ValueError("source must be single-channel")
    if source.sample_rate_hz != brir.sample_rate_hz:
        raise ValueError("sample-rate mismatch")
    s = source.samples[0]
    out = np.stack([fftconvolve(s, brir.samples[ear]) for ear in range(2)])
    return MultichannelSignal(out, brir.sample_rate_hz)
