"""Late-part RIR resynthesis with decay-, covariance-, and energy-matched noise.

Replaces the artifact-prone late part of a raw RIR estimate with shaped
noise per octave band, removing narrowband ringing and any noise floor
while preserving decay slopes, inter-channel covariance, and the
early-to-late energy ratio.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .metrics import _fit_rt_from_edc
from .signal_core import (
    DEFAULT_OCTAVE_CENTERS,
    MultichannelSignal,
    filter_octave_band,
    octave_filter_bank,
    schroeder_edc,
)
from .sysid import RirEstimate


@dataclass
class ResynthConfig:
    tau_split_ms: float = 20.0
    bands: tuple = DEFAULT_OCTAVE_CENTERS
    rng_seed: int = 0

    def __post_init__(self):
        if self.tau_split_ms <= 0:
            raise ValueError("tau_split_ms must be positive")
        self.bands = tuple(self.bands)


@dataclass
class ResynthReport:
    split_sample: int
    fitted_rt_s: np.ndarray          # (channels, bands)
    rt_method: np.ndarray            # (channels, bands) tags, 'interp' possible
    energy_gain: np.ndarray          # (channels, bands)
    covariance_frob_error: np.ndarray  # (bands,)
    band_centers_hz: tuple = DEFAULT_OCTAVE_CENTERS


def split_early_late(rir: RirEstimate, config: ResynthConfig | None = None
                     ) -> tuple[np.ndarray, np.ndarray, int]:
    """Split at the direct-sound peak plus the configured transition time."""
    if config is None:
        config = ResynthConfig()
    x = rir.rir.samples
    fs = rir.rir.sample_rate_hz
    peak = int(np.argmax(np.max(np.abs(x), axis=0)))
    split = peak + int(round(config.tau_split_ms * 1e-3 * fs))
    if split >= x.shape[1]:
        raise ValueError("early/late split beyond RIR length")
    return x[:, :split].copy(), x[:, split:].copy(), split


def _decay_envelope(tau_s: float, length: int, sample_rate_hz: int) -> np.ndarray:
    n = np.arange(length)
    return 10.0 ** (-60.0 * n / (20.0 * tau_s * sample_rate_hz))


def fit_band_decays(late: np.ndarray, sample_rate_hz: int,
                    bands=DEFAULT_OCTAVE_CENTERS
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel, per-band decay times of a late RIR part.

    Uses the T20/T15/T10 ladder on the truncated Schroeder EDC of each band;
    bands that cannot be fit inherit the nearest fitted band of the same
    channel. Returns (tau_s, method_tags), each (channels, bands).
    """
    late = np.atleast_2d(np.asarray(late, dtype=np.float64))
    fs = sample_rate_hz
    if late.shape[1] < int(0.05 * fs):
        raise ValueError("late part shorter than 50 ms")
    bands = tuple(bands)
    decomp = octave_filter_bank(MultichannelSignal(late, fs), bands)
    m, b = late.shape[0], len(bands)
    tau = np.full((m, b), np.nan)
    tags = np.full((m, b), "failed", dtype=object)
    for ch in range(m):
        for bi in range(b):
            x = decomp.band_signals[ch, bi]
            if not np.any(x):
                continue
            edc = schroeder_edc(x)
            fit = _fit_rt_from_edc(edc, fs)
            if fit is not None:
                tau[ch, bi], tags[ch, bi] = fit[:2]
        fitted = np.nonzero(np.isfinite(tau[ch]))[0]
        if fitted.size == 0:
            raise ValueError(f"decay fit failed in all bands for channel {ch}")
        for bi in np.nonzero(~np.isfinite(tau[ch]))[0]:
            nearest = fitted[np.argmin(np.abs(fitted - bi))]
            tau[ch, bi] = tau[ch, nearest]
            tags[ch, bi] = "interp"
    return tau, tags


def _clip_psd(c: np.ndarray):
    evals, evecs = np.linalg.eigh(0.5 * (c + c.T))
    tr = max(np.trace(c), 0.0)
    if evals.min() < -1e-10 * max(tr, 1e-300):
        warnings.warn("target covariance has negative eigenvalues, clipping")
    evals = np.maximum(evals, 0.0)
    return evecs @ np.diag(evals) @ evecs.T, evals, evecs


def shape_noise(tau_s: np.ndarray, cov_targets: np.ndarray,
                late_energies: np.ndarray, length: int, sample_rate_hz: int,
                bands=DEFAULT_OCTAVE_CENTERS,
                rng_seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Generate a covariance- and energy-matched decaying noise tail.

    tau_s: (channels, bands) decay times; cov_targets: (bands, M, M)
    symmetric PSD matrices; late_energies: (channels, bands). Returns the
    (channels, length) replacement, the per-channel energy-match gains, and
    per-band covariance Frobenius errors of the mixing step.
    """
    tau_s = np.atleast_2d(tau_s)
    m, nb = tau_s.shape
    bands = tuple(bands)
    rng = np.random.default_rng(rng_seed)
    comps = np.zeros((nb, m, length))
    gains = np.zeros((m, nb))
    frob_err = np.zeros(nb)
    smooth = max(1, int(round(0.025 * sample_rate_hz)))
    kernel = np.ones(smooth)
    counts = np.convolve(np.ones(length), kernel, mode="same")
    # one base realization shared by all bands: adjacent band signals then
    # add coherently in the crossfade regions and the summed output keeps
    # the full per-band energy
    base = rng.standard_normal((m, length))
    for bi in range(nb):
        noise = filter_octave_band(base, bi, sample_rate_hz, bands)
        # flatten the generator's slow per-channel energy fluctuation; the
        # band decay of the result is then exactly the imposed envelope.
        # happens before whitening/mixing, so covariance is unaffected
        for ch in range(m):
            power = np.convolve(noise[ch] ** 2, kernel,
                                mode="same") / counts
            noise[ch] /= np.sqrt(np.maximum(power, power.max() * 1e-12))
        # whiten across channels so the eigendecomposition mixing is exact
        c_noise = noise @ noise.T / length
        evals, evecs = np.linalg.eigh(c_noise)
        white_mix = evecs @ np.diag(1.0 / np.sqrt(np.maximum(evals, 1e-30))) @ evecs.T
        env = np.stack([_decay_envelope(tau_s[ch, bi], length, sample_rate_hz)
                        for ch in range(m)])
        decayed = white_mix @ (env * noise)
        c_target, tevals, tevecs = _clip_psd(cov_targets[bi])
        color_mix = tevecs @ np.diag(np.sqrt(tevals)) @ tevecs.T
        mixed = color_mix @ decayed
        achieved = (white_mix @ noise)
        achieved = color_mix @ achieved
        c_ach = achieved @ achieved.T / length
        denom = np.linalg.norm(c_target)
        frob_err[bi] = (np.linalg.norm(c_ach - c_target) / denom
                        if denom > 0 else 0.0)
        for ch in range(m):
            e_mix = np.sum(mixed[ch] ** 2)
            target = late_energies[ch, bi]
            g = np.sqrt(target / e_mix) if e_mix > 0 and target > 0 else 0.0
            gains[ch, bi] = g
        comps[bi] = mixed

    # refine: band interactions in the summed signal shift the measured
    # band energies slightly, so re-measure the sum and correct the gains
    out = np.einsum("bm,bml->ml", gains.T, comps)
    for _ in range(2):
        measured = np.sum(
            octave_filter_bank(MultichannelSignal(out, sample_rate_hz),
                               bands).band_signals ** 2, axis=-1)
        ok = (measured > 0) & (late_energies > 0)
        gains = np.where(ok, gains * np.sqrt(
            np.where(ok, late_energies, 1.0) / np.where(ok, measured, 1.0)),
            gains)
        out = np.einsum("bm,bml->ml", gains.T, comps)
    return out, gains, frob_err


def _band_covariance(band_late: np.ndarray, tau_s: np.ndarray,
                     sample_rate_hz: int) -> np.ndarray:
    """Stationary covariance of the envelope-normalized late band signal.

    Normalization is limited to the first 40 dB of decay so the division
    does not amplify the estimation noise floor at the very end.
    """
    m, n = band_late.shape
    tau = float(np.nanmean(tau_s))
    limit = min(n, max(8, int(round(40.0 / 60.0 * tau * sample_rate_hz))))
    z = np.empty((m, limit))
    for ch in range(m):
        env = _decay_envelope(tau_s[ch], limit, sample_rate_hz)
        z[ch] = band_late[ch, :limit] / env
    return z @ z.T / limit


def resynthesize(rir: RirEstimate, config: ResynthConfig | None = None
                 ) -> tuple[RirEstimate, ResynthReport]:
    """Replace the late part of a far-field RIR estimate with shaped noise."""
    if config is None:
        config = ResynthConfig()
    if rir.mode == "own_speech":
        raise ValueError("resynthesis of own-speech estimates is not supported")
    fs = rir.rir.sample_rate_hz
    early, late, split = split_early_late(rir, config)
    tau, tags = fit_band_decays(late, fs, config.bands)
    m = late.shape[0]
    nb = len(config.bands)

    band_late = octave_filter_bank(MultichannelSignal(late, fs),
                                   config.bands).band_signals
    late_energies = np.sum(band_late ** 2, axis=-1).reshape(m, nb)
    cov_targets = np.stack([
        _band_covariance(band_late[:, bi, :], tau[:, bi], fs)
        for bi in range(nb)])

    synth, gains, frob = shape_noise(tau, cov_targets, late_energies,
                                     late.shape[1], fs, config.bands,
                                     config.rng_seed)
    out = np.concatenate([early, synth], axis=1)
    est = RirEstimate(MultichannelSignal(out, fs),
                      {**rir.meta, "resynthesized": True,
                       "tau_split_ms": config.tau_split_ms,
                       "rng_seed": config.rng_seed})
    report = ResynthReport(split, tau, tags, gains, frob, config.bands)
    return est, report
