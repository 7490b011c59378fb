"""Noise-PSD estimation and MVDR beamforming with ATF steering.

The beamformer extracts the pseudo reference signal from the dereverberated
array signals while keeping the steered direction distortionless.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .signal_core import MultichannelSignal, SpectralFrames, StftConfig, stft


@dataclass
class AtfSet:
    """Anechoic array transfer functions on a direction grid.

    impulse_responses has shape (directions, channels, taps); the optional
    near_field_mouth entry has shape (channels, taps). Also usable as an
    HRTF set with two "channels".
    """

    directions: list
    impulse_responses: np.ndarray
    sample_rate_hz: int = 48000
    near_field_mouth: np.ndarray | None = None

    def __post_init__(self):
        self.directions = [(float(az), float(el)) for az, el in self.directions]
        self.impulse_responses = np.asarray(self.impulse_responses, dtype=np.float64)
        if self.impulse_responses.ndim != 3:
            raise ValueError("impulse_responses must be (directions, channels, taps)")
        if len(self.directions) != self.impulse_responses.shape[0]:
            raise ValueError("direction list does not match response tensor")
        if len(self.directions) < 1:
            raise ValueError("need at least one direction")
        if len(set(self.directions)) != len(self.directions):
            raise ValueError("duplicate directions in grid")
        if self.near_field_mouth is not None:
            self.near_field_mouth = np.asarray(self.near_field_mouth, dtype=np.float64)
            if self.near_field_mouth.shape[0] != self.num_channels:
                raise ValueError("near-field entry channel count mismatch")

    @property
    def num_directions(self) -> int:
        return len(self.directions)

    @property
    def num_channels(self) -> int:
        return self.impulse_responses.shape[1]

    @property
    def num_taps(self) -> int:
        return self.impulse_responses.shape[2]

    def freq_responses(self, fft_len: int) -> np.ndarray:
        """One-sided spectra, shape (directions, channels, fft_len//2 + 1)."""
        return np.fft.rfft(self.impulse_responses, n=fft_len, axis=-1)

    def near_field_freq_response(self, fft_len: int) -> np.ndarray:
        if self.near_field_mouth is None:
            raise ValueError("ATF set has no near-field mouth entry")
        return np.fft.rfft(self.near_field_mouth, n=fft_len, axis=-1)

    def nearest_direction(self, azimuth_deg: float, elevation_deg: float = 0.0
                          ) -> tuple[int, float]:
        """Index of the closest grid direction and the angular gap in degrees."""
        az = np.radians([d[0] for d in self.directions])
        el = np.radians([d[1] for d in self.directions])
        q_az, q_el = np.radians(azimuth_deg), np.radians(elevation_deg)
        cosgap = (np.sin(el) * np.sin(q_el)
                  + np.cos(el) * np.cos(q_el) * np.cos(az - q_az))
        gaps = np.degrees(np.arccos(np.clip(cosgap, -1.0, 1.0)))
        idx = int(np.argmin(gaps))
        return idx, float(gaps[idx])

    def subset(self, channel_indices) -> "AtfSet":
        """ATF set restricted to a subset of microphone channels."""
        idx = list(channel_indices)
        nf = None if self.near_field_mouth is None else self.near_field_mouth[idx]
        return AtfSet(list(self.directions), self.impulse_responses[:, idx],
                      self.sample_rate_hz, nf)


@dataclass
class NoisePsd:
    """Per-bin Hermitian PSD matrices, shape (bins, channels, channels)."""

    matrices: np.ndarray
    frames_used: int

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices)
        if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
            raise ValueError("matrices must be (bins, M, M)")
        # enforce Hermitian PSD: symmetrize and clip negative eigenvalues
        h = 0.5 * (self.matrices + self.matrices.conj().transpose(0, 2, 1))
        evals, evecs = np.linalg.eigh(h)
        evals = np.maximum(evals, 0.0)
        self.matrices = evecs @ (evals[..., np.newaxis] *
                                 evecs.conj().transpose(0, 2, 1))

    @property
    def num_bins(self) -> int:
        return self.matrices.shape[0]

    @property
    def num_channels(self) -> int:
        return self.matrices.shape[1]

    @classmethod
    def identity(cls, num_bins: int, num_channels: int) -> "NoisePsd":
        eye = np.broadcast_to(np.eye(num_channels, dtype=np.complex128),
                              (num_bins, num_channels, num_channels)).copy()
        return cls(eye, frames_used=0)


def estimate_noise_psd(noise_segment: MultichannelSignal,
                       stft_config: StftConfig) -> NoisePsd:
    """Time-averaged per-bin outer products of STFT frames of a noise segment."""
    if noise_segment.duration_s < 0.1:
        raise ValueError("noise segment shorter than 0.1 s")
    frames = stft(noise_segment, stft_config)
    d = frames.data  # (M, T, B)
    t = frames.num_frames
    mats = np.einsum("mtb,ntb->bmn", d, d.conj()) / t
    return NoisePsd(mats, frames_used=t)


def mvdr_weights(atf: AtfSet, noise_psd: NoisePsd,
                 steer_direction: tuple[float, float] | None = None,
                 near_field: bool = False,
                 diag_load: float = 1e-3) -> np.ndarray:
    """Distortionless minimum-variance weights, shape (bins, channels).

    Steering uses the ATF at the nearest grid direction (gap reported via
    warning when above 1 degree) or the near-field mouth entry. Diagonal
    loading of diag_load * trace/M regularizes the noise PSD inverse.
    """
    bins = noise_psd.num_bins
    fft_len = 2 * (bins - 1)
    if near_field:
        a = atf.near_field_freq_response(fft_len).T  # (bins, M)
    else:
        if steer_direction is None:
            raise ValueError("steer_direction required unless near_field")
        idx, gap = atf.nearest_direction(*steer_direction)
        if gap > 1.0:
            warnings.warn(f"steering to nearest grid direction, {gap:.1f} deg away")
        a = atf.freq_responses(fft_len)[idx].T  # (bins, M)
    if a.shape[1] != noise_psd.num_channels:
        raise ValueError("ATF channel count does not match noise PSD")

    m = noise_psd.num_channels
    p = noise_psd.matrices.copy()
    tr = np.einsum("bii->b", p).real
    load = diag_load * np.maximum(tr, 1e-300) / m
    # zero-trace bins (silent noise estimate) fall back to identity
    load = np.where(tr > 0.0, load, 1.0)
    p += load[:, np.newaxis, np.newaxis] * np.eye(m)

    pinv_a = np.linalg.solve(p, a[..., np.newaxis])[..., 0]  # (bins, M)
    denom = np.einsum("bm,bm->b", a.conj(), pinv_a)
    denom = np.where(np.abs(denom) > 0.0, denom, 1.0)
    return pinv_a / denom[:, np.newaxis]


def apply_beamformer(weights: np.ndarray, frames: SpectralFrames) -> SpectralFrames:
    """Collapse multichannel frames to a single channel: x = sum_m w_m^* d_m."""
    if weights.shape != (frames.num_bins, frames.num_channels):
        raise ValueError("weights shape does not match frames")
    out = np.einsum("bm,mtb->tb", weights.conj(), frames.data)
    return SpectralFrames(out[np.newaxis], frames.config,
                          frames.sample_rate_hz, frames.original_len)
