"""Blind multichannel dereverberation via weighted prediction error.

Per STFT subband, a multichannel linear prediction filter removes signal
correlation after a prediction delay, suppressing late reverberation while
preserving inter-channel time differences. Batch processing only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.linalg import blas as sblas

from .signal_core import MultichannelSignal, StftConfig, istft, stft


@dataclass
class GwpeConfig:
    prediction_delay_ms: float = 20.0
    filter_order: int = 36
    iterations: int = 3
    psd_floor: float = 1e-8
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if self.prediction_delay_ms <= 0:
            raise ValueError("prediction_delay_ms must be positive")
        if self.filter_order < 1:
            raise ValueError("filter_order must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    def delay_frames(self, sample_rate_hz: int) -> int:
        return math.ceil(self.prediction_delay_ms * sample_rate_hz
                         / 1000.0 / self.stft.hop)


def _solve_normal_equations(r: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Solve R G = P for Hermitian R, escalating a Tikhonov ridge as needed."""
    r = r.astype(np.complex128)
    p = p.astype(np.complex128)
    dim = r.shape[0]
    eye = np.eye(dim)
    ridge = 1e-8 * max(np.trace(r).real, 1e-300) / dim
    # a small unconditional ridge keeps near-singular bins numerically
    # stable (and the solution scale-equivariant); escalate on failure
    shift = ridge
    for attempt in range(10):
        try:
            c, low = sla.cho_factor(r + shift * eye, lower=True,
                                    check_finite=False)
            return sla.cho_solve((c, low), p, check_finite=False)
        except np.linalg.LinAlgError:
            if attempt == 0:
                warnings.warn(
                    "singular prediction normal equations, raising ridge")
            shift *= 100.0
    raise np.linalg.LinAlgError("prediction normal equations unsolvable")


def gwpe_dereverberate(noisy: MultichannelSignal, config: GwpeConfig | None = None
                       ) -> MultichannelSignal:
    """Remove late reverberation from a multichannel recording.

    Alternates between estimating the desired-signal PSD (channel mean of
    the current output, identity spatial covariance) and solving weighted
    least squares for the per-subband prediction filters. Frames without
    full prediction history pass through unmodified.
    """
    if config is None:
        config = GwpeConfig()
    cfg = config.stft
    fs = noisy.sample_rate_hz
    delta = config.delay_frames(fs)
    k = config.filter_order
    m = noisy.num_channels
    min_len = cfg.block_len + (delta + k) * cfg.hop
    if noisy.num_samples < min_len:
        raise ValueError(f"signal too short for GWPE: need {min_len} samples")

    frames = stft(noisy, cfg)
    # (bins, channels, frames); complex64 keeps the heavy algebra fast
    d = np.ascontiguousarray(frames.data.transpose(2, 0, 1).astype(np.complex64))
    bins, _, t = d.shape
    eta0 = delta + k  # first frame with full history
    out = d.copy()
    if t <= eta0:
        return istft(frames)

    n_hist = t - eta0
    tap_slices = [slice(eta0 - delta - tap, t - delta - tap) for tap in range(k)]

    chunk = max(1, int(64e6 / (m * k * n_hist * 8)))
    for _ in range(config.iterations):
        power = np.mean(np.abs(out) ** 2, axis=1)  # (bins, frames)
        floor = config.psd_floor * np.maximum(power.max(axis=1, keepdims=True), 1e-30)
        lam = np.maximum(power[:, eta0:], floor).astype(np.float32)
        inv_sqrt_lam = (1.0 / np.sqrt(lam))

        for b0 in range(0, bins, chunk):
            b1 = min(bins, b0 + chunk)
            nb = b1 - b0
            x = np.empty((nb, m * k, n_hist), dtype=np.complex64)
            for tap, sl in enumerate(tap_slices):
                x[:, tap * m:(tap + 1) * m] = d[b0:b1, :, sl]
            w = inv_sqrt_lam[b0:b1, np.newaxis, :]
            xw = x * w
            target_w = d[b0:b1, :, eta0:] * w
            for bi in range(nb):
                r = sblas.cherk(1.0, xw[bi], lower=1)
                r += np.tril(r, -1).conj().T
                p = xw[bi] @ target_w[bi].conj().T  # (MK, M)
                g = _solve_normal_equations(r, p)
                out[b0 + bi, :, eta0:] = (d[b0 + bi, :, eta0:]
                                          - g.conj().T @ x[bi])

    dereverbed = frames.data.copy()
    dereverbed[...] = out.transpose(1, 2, 0)
    return istft(type(frames)(dereverbed, cfg, fs, frames.original_len))
