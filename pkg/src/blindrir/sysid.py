"""Multichannel Wiener-filter transfer-function estimation.

Identifies the transfer function between a reference signal and the array
signals per STFT bin and converts it to a time-domain RIR estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .signal_core import MultichannelSignal


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


@dataclass
class MwfConfig:
    """Estimation parameters; block length defaults to twice the RT hint."""

    rt_hint_s: float = 1.0
    hop: int = 2048
    delta: float = 1e-4
    block_len: int | None = None  # explicit override, any even length
    sample_rate_hz: int = 48000

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.block_len is None:
            self.block_len = _next_pow2(int(math.ceil(
                2.0 * self.rt_hint_s * self.sample_rate_hz)))
        if self.block_len % 2:
            raise ValueError("block_len must be even")
        if self.block_len < 2 * self.hop:
            raise ValueError("block_len must be at least twice the hop")


@dataclass
class RirEstimate:
    """Multichannel RIR estimate with provenance metadata."""

    rir: MultichannelSignal
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.rir.samples)):
            raise ValueError("RIR estimate contains non-finite values")

    @property
    def mode(self) -> str:
        return self.meta.get("mode", "far_field")


def mwf_estimate(reference: MultichannelSignal | np.ndarray,
                 observations: MultichannelSignal,
                 config: MwfConfig) -> RirEstimate:
    """Estimate the RIR from reference to each observation channel.

    Per bin: w = Phi_xd / (Phi_xx + delta * mean(Phi_xx)), where the PSD and
    CSD are frame averages over rectangular-windowed blocks. The inverse FFT
    is truncated to half the block length. Frames with zero reference energy
    are skipped.
    """
    if isinstance(reference, MultichannelSignal):
        if reference.num_channels != 1:
            raise ValueError("reference must be single-channel")
        if reference.sample_rate_hz != observations.sample_rate_hz:
            raise ValueError("sample-rate mismatch")
        x = reference.samples[0]
    else:
        x = np.asarray(reference, dtype=np.float64).ravel()
    d = observations.samples
    if x.size != d.shape[1]:
        raise ValueError("reference and observations must be time-aligned "
                         "and equally long")
    if not np.any(x):
        raise ValueError("degenerate reference: no energy")
    block = config.block_len
    if x.size < 2 * block:
        raise ValueError("signals shorter than two MWF blocks")

    hop = config.hop
    n_frames = (x.size - block) // hop + 1
    idx = np.arange(block)[np.newaxis, :] + hop * np.arange(n_frames)[:, np.newaxis]
    xf = np.fft.rfft(x[idx], axis=-1)              # (frames, bins)
    active = np.sum(np.abs(x[idx]) ** 2, axis=-1) > 0.0
    if not np.any(active):
        raise ValueError("degenerate reference: no active frames")
    xf = xf[active]
    phi_xx = np.mean(np.abs(xf) ** 2, axis=0)      # (bins,)

    m = d.shape[0]
    phi_xd = np.empty((m, phi_xx.size), dtype=np.complex128)
    for ch in range(m):
        df = np.fft.rfft(d[ch][idx], axis=-1)[active]
        phi_xd[ch] = np.mean(xf.conj() * df, axis=0)

    w = phi_xd / (phi_xx + config.delta * phi_xx.mean())
    h = np.fft.irfft(w, n=block, axis=-1)[:, :block // 2]
    rir = MultichannelSignal(h, observations.sample_rate_hz)
    meta = {"rt_hint_s": config.rt_hint_s, "block_len": block,
            "hop": hop, "delta": config.delta, "mode": "far_field"}
    return RirEstimate(rir, meta)
