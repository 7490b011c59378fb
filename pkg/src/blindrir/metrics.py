"""Room-acoustic parameter extraction and error statistics.

Estimates per-band reverberation times (T20 with T15/T10 fallback),
broadband direct-to-reverberant ratios, and the energy-weighted angular
error between the directional content of two multichannel RIRs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal_core import (
    DEFAULT_OCTAVE_CENTERS,
    MultichannelSignal,
    octave_filter_bank,
    schroeder_edc,
)

RT_METHOD_LADDER = (("T20", -25.0), ("T15", -20.0), ("T10", -15.0))


@dataclass
class RoomParams:
    """Per-channel room-acoustic parameters; the evaluation currency."""

    rt_s: np.ndarray                 # (channels, bands), nan where failed
    rt_method: np.ndarray            # (channels, bands) of {T20,T15,T10,failed}
    drr_db: np.ndarray               # (channels,)
    drr_infinite: np.ndarray         # (channels,) bool, no reverberant energy
    noise_floor_onset: np.ndarray    # (channels, bands) sample indices
    band_centers_hz: tuple = DEFAULT_OCTAVE_CENTERS

    @property
    def failed_mask(self) -> np.ndarray:
        return self.rt_method == "failed"


@dataclass
class WaeResult:
    wae_deg: float
    per_sample_error_deg: np.ndarray
    energy_weights: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.wae_deg <= 180.0:
            raise ValueError("wae_deg out of range")


@dataclass
class ErrorStats:
    mse: float
    bias: float
    pearson_rho: float
    mae: float
    mad: float
    failed_pct: float


def _smoothed_energy_db(x: np.ndarray, sample_rate_hz: int,
                        win_s: float = 0.01) -> np.ndarray:
    e = x.astype(np.float64) ** 2
    w = max(1, int(round(win_s * sample_rate_hz)))
    kernel = np.ones(w) / w
    env = np.convolve(e, kernel, mode="same")
    peak = env.max()
    if peak <= 0.0:
        return np.full(x.size, -np.inf)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.maximum(env, 1e-300) / peak)


def noise_floor_onset(band_signal: np.ndarray, sample_rate_hz: int,
                      smooth_win_s: float = 0.01) -> int:
    """Sample where the decay meets the noise floor (Lundeby-style).

    Iterates a linear fit of the smoothed level curve against a tail-based
    floor estimate; the onset is the intersection of the fitted decay line
    with the floor. The floor is re-estimated after each crossing so a
    slowly fluctuating floor does not drag the onset toward the end.
    """
    x = np.asarray(band_signal, dtype=np.float64).ravel()
    n = x.size
    env_db = _smoothed_energy_db(x, sample_rate_hz, win_s=smooth_win_s)
    if not np.isfinite(env_db).any():
        return n
    tail = env_db[int(0.9 * n):]
    if tail.size == 0 or not np.isfinite(tail).any():
        return n
    floor_db = float(np.median(tail[np.isfinite(tail)]))
    peak = int(np.argmax(env_db))
    min_fit = max(4, int(0.005 * sample_rate_hz))
    cross = n
    for _ in range(6):
        # fit the decay over every point a margin above the floor; level
        # selection (not the first crossing) keeps slow low-band envelope
        # dips from truncating the fit early
        sel = peak + np.nonzero(env_db[peak:] >= floor_db + 8.0)[0]
        sel = sel[np.isfinite(env_db[sel])]
        if sel.size < min_fit:
            return n
        slope, intercept = np.polyfit(sel / sample_rate_hz,
                                      env_db[sel], 1)
        if slope >= 0.0:
            return n
        new_cross = int(round((floor_db - intercept) / slope
                              * sample_rate_hz))
        new_cross = max(1, min(n, new_cross))
        # re-estimate the floor from well past the crossing (10 dB of
        # further decay) so residual signal does not bias it upward
        seg_start = min(n, new_cross + int(round(-10.0 / slope
                                                 * sample_rate_hz)))
        seg = env_db[seg_start:]
        seg = seg[np.isfinite(seg)]
        if seg.size >= min_fit:
            floor_db = float(np.median(seg))
        if abs(new_cross - cross) <= int(0.001 * sample_rate_hz):
            return new_cross
        cross = new_cross
    return cross


def _fit_rt_from_edc(edc_db: np.ndarray, sample_rate_hz: int,
                     floor_db: float = -np.inf):
    """Line-fit the EDC over [-5, lower] dB.

    Returns (rt_s, method, slope_db_per_s, intercept_db) or None.

    The final 10% of the curve is excluded: a (truncated) Schroeder EDC
    always plunges there regardless of the actual decay range. A ladder
    rung is only usable when the envelope noise floor lies below its fit
    depth — noise subtraction cannot reveal reliable decay much beyond
    the floor.
    """
    edc_db = edc_db[:max(1, int(0.9 * edc_db.size))]
    for method, lower in RT_METHOD_LADDER:
        if floor_db > lower:
            continue
        if edc_db.min() > lower:
            continue
        sel = np.nonzero((edc_db <= -5.0) & (edc_db >= lower))[0]
        if sel.size < 4:
            continue
        t = sel / sample_rate_hz
        slope, intercept = np.polyfit(t, edc_db[sel], 1)
        if slope >= 0.0:
            continue
        return -60.0 / slope, method, slope, intercept
    return None


def _band_rt(x: np.ndarray, sample_rate_hz: int, onset: int,
             floor_power: float = 0.0, floor_db: float = -np.inf):
    """RT of one band signal from a truncated, compensated decay curve.

    Three standard corrections against a measurement noise floor:
    truncation of the Schroeder integral at the floor onset, subtraction
    of the mean floor power from the energy envelope, and a second pass
    that adds back the late-decay energy the fitted line predicts beyond
    the truncation point (plain truncation biases the fit short).
    """
    e = np.maximum(x[:onset].astype(np.float64) ** 2 - floor_power, 0.0)
    rev = np.cumsum(e[::-1])[::-1]
    if rev[0] <= 0.0:
        return None
    comp = 0.0
    fit = None
    for _ in range(2):
        with np.errstate(divide="ignore"):
            edc_db = 10.0 * np.log10(
                np.maximum(rev + comp, 1e-300) / (rev[0] + comp))
        new = _fit_rt_from_edc(edc_db, sample_rate_hz, floor_db)
        if new is None:
            break
        fit = new
        _, _, slope, intercept = fit
        pred_db = slope * onset / sample_rate_hz + intercept
        comp = (rev[0] + comp) * 10.0 ** (pred_db / 10.0)
    return fit[:2] if fit is not None else None


def estimate_rt(rir: MultichannelSignal,
                bands=DEFAULT_OCTAVE_CENTERS) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Octave-band reverberation times with a T20/T15/T10 fallback ladder.

    Returns (rt_s, method_tags, noise_floor_onsets), each (channels, bands).
    Failures are tagged, never raised.
    """
    if rir.num_samples < int(0.1 * rir.sample_rate_hz):
        raise ValueError("RIR shorter than 100 ms")
    bands = tuple(bands)
    decomp = octave_filter_bank(rir, bands)
    m, b = rir.num_channels, len(bands)
    rt = np.full((m, b), np.nan)
    tags = np.full((m, b), "failed", dtype=object)
    onsets = np.full((m, b), rir.num_samples, dtype=int)
    for ch in range(m):
        for bi in range(b):
            x = decomp.band_signals[ch, bi]
            if not np.any(x):
                continue
            # low octaves need longer envelope smoothing: their slow
            # intrinsic fluctuations otherwise corrupt the floor fit
            win = max(0.01, 8.0 / bands[bi])
            onset = noise_floor_onset(x, rir.sample_rate_hz,
                                      smooth_win_s=win)
            onsets[ch, bi] = onset
            if onset < 8:
                continue
            if onset < x.size:
                floor_p = float(np.mean(x[onset:] ** 2))
                w = max(1, int(round(win * rir.sample_rate_hz)))
                smoothed = np.convolve(x ** 2, np.ones(w) / w,
                                       mode="same")
                floor_db = 10.0 * np.log10(
                    max(floor_p, 1e-300) / smoothed.max())
            else:
                floor_p, floor_db = 0.0, -np.inf
            fit = _band_rt(x, rir.sample_rate_hz, onset, floor_p,
                           floor_db)
            if fit is not None:
                rt[ch, bi], tags[ch, bi] = fit
    return rt, tags, onsets


def estimate_drr(rir: MultichannelSignal,
                 noise_floor_onset_samples: np.ndarray | None = None
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Broadband direct-to-reverberant ratio per channel in dB.

    Direct energy lies within [peak - 1 ms, peak + 2 ms]; reverberant energy
    runs from 2 ms after the peak to the noise-floor onset (or the end).
    When an onset is known, the mean floor power measured beyond it is
    subtracted from the reverberant window so a high measurement floor
    does not bias the ratio down. Returns (drr_db, infinite_flags).
    """
    fs = rir.sample_rate_hz
    m = rir.num_channels
    drr = np.zeros(m)
    inf_flags = np.zeros(m, dtype=bool)
    one_ms = int(round(1e-3 * fs))
    two_ms = int(round(2e-3 * fs))
    for ch in range(m):
        x = rir.samples[ch]
        peak = int(np.argmax(np.abs(x)))
        start = max(0, peak - one_ms)
        stop = min(x.size, peak + two_ms + 1)
        direct = np.sum(x[start:stop] ** 2)
        if noise_floor_onset_samples is not None:
            end = int(np.max(noise_floor_onset_samples[ch]))
        else:
            end = x.size
        rev = np.sum(x[stop:end] ** 2)
        if end < x.size:
            floor_p = float(np.mean(x[end:] ** 2))
            rev = max(rev - floor_p * (end - stop), 0.0)
        if rev <= 0.0:
            drr[ch] = np.inf
            inf_flags[ch] = True
        else:
            drr[ch] = 10.0 * np.log10(direct / rev)
    return drr, inf_flags


def estimate_room_params(rir: MultichannelSignal,
                         bands=DEFAULT_OCTAVE_CENTERS) -> RoomParams:
    rt, tags, onsets = estimate_rt(rir, bands)
    drr, inf_flags = estimate_drr(rir, onsets)
    return RoomParams(rt, tags, drr, inf_flags, onsets, tuple(bands))


def circular_harmonic_encoder(atf_freq: np.ndarray, directions_rad: np.ndarray,
                              max_gain_db: float = 20.0) -> np.ndarray:
    """Per-bin LS filters mapping M channels to CH components of degree <= 1.

    atf_freq: (directions, channels, bins); directions_rad: horizontal-plane
    azimuths. Singular-value inversion is limited so no gain exceeds
    max_gain_db. Returns (3, channels, bins).
    """
    d, m, bins = atf_freq.shape
    if d < 3:
        raise ValueError("need at least 3 horizontal directions")
    basis = np.stack([np.ones(d), np.cos(directions_rad),
                      np.sin(directions_rad)], axis=1)  # (D, 3)
    g_lim = 10.0 ** (max_gain_db / 20.0)
    enc = np.zeros((3, m, bins), dtype=np.complex128)
    for k in range(bins):
        a = atf_freq[:, :, k]  # (D, M)
        u, s, vh = np.linalg.svd(a, full_matrices=False)
        if s[0] <= 0.0:
            raise ValueError("degenerate circular-harmonic system")
        s_inv = np.where(s > 1.0 / g_lim, 1.0 / np.maximum(s, 1e-300), g_lim)
        pinv = (vh.conj().T * s_inv) @ u.conj().T  # (M, D)
        enc[:, :, k] = (pinv @ basis).T
    return enc


def _hann_smooth(x: np.ndarray, n: int = 14) -> np.ndarray:
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))
    w /= w.sum()
    return np.convolve(x, w, mode="same")


def pseudo_intensity(signal: np.ndarray) -> np.ndarray:
    """2-D pseudo-intensity from CH signals (3, n): omni times first degree.

    Components are smoothed with a 14-sample Hann window. Returns (2, n).
    """
    w0, w1c, w1s = signal
    return np.stack([_hann_smooth(w0 * w1c), _hann_smooth(w0 * w1s)])


def weighted_angular_error(i_est: np.ndarray, i_truth: np.ndarray,
                           weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Energy-weighted mean angle between 2-D intensity vector sequences."""
    dot = np.sum(i_est * i_truth, axis=0)
    norms = np.linalg.norm(i_est, axis=0) * np.linalg.norm(i_truth, axis=0)
    valid = norms > 0.0
    cosang = np.zeros(dot.size)
    cosang[valid] = np.clip(dot[valid] / norms[valid], -1.0, 1.0)
    err = np.degrees(np.arccos(cosang))
    err[~valid] = 0.0
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0.0:
        return 0.0, err
    return float(np.sum(w * err) / total), err


def wae(estimate: MultichannelSignal, truth: MultichannelSignal, atf,
        window_ms: float = 50.0, band_limit_hz=(300.0, 2000.0)) -> WaeResult:
    """Weighted angular error between the directional energy of two RIRs.

    Both RIRs are mapped to circular harmonics via a gain-limited LS fit of
    horizontal-plane ATFs, converted to smoothed 2-D pseudo-intensity
    vectors, and compared over the first window_ms after the direct sound,
    weighted by the per-sample omni energy of the truth. The default band
    limit covers the range where a glasses-sized array encodes first-order
    directivity without omni leakage; outside it the angle is biased low.
    """
    if estimate.num_channels < 3:
        raise ValueError("WAE needs at least 3 microphones")
    if estimate.sample_rate_hz != truth.sample_rate_hz:
        raise ValueError("sample-rate mismatch")
    fs = truth.sample_rate_hz
    horiz = [i for i, (az, el) in enumerate(atf.directions) if abs(el) < 1e-6]
    if len(horiz) < 3:
        raise ValueError("ATF set has no horizontal-plane grid")
    az_rad = np.radians([atf.directions[i][0] for i in horiz])

    n = max(estimate.num_samples, truth.num_samples, atf.num_taps)
    n_fft = int(2 ** math.ceil(math.log2(n)))
    atf_freq = atf.freq_responses(n_fft)[horiz]
    enc = circular_harmonic_encoder(atf_freq, az_rad)

    freqs = np.fft.rfftfreq(n_fft, 1.0 / fs)
    band = (freqs >= band_limit_hz[0]) & (freqs <= band_limit_hz[1])

    def encode(sig: MultichannelSignal) -> np.ndarray:
        spec = np.fft.rfft(sig.samples, n=n_fft, axis=-1)  # (M, bins)
        ch = np.einsum("cmk,mk->ck", enc, spec)
        ch[:, ~band] = 0.0
        return np.fft.irfft(ch, n=n_fft, axis=-1)

    ch_est = encode(estimate)
    ch_truth = encode(truth)
    # align on each RIR's own direct peak: the estimate does not contain
    # the source propagation delay, the ground truth does
    direct_t = int(np.argmax(np.abs(ch_truth[0])))
    direct_e = int(np.argmax(np.abs(ch_est[0])))
    win = int(round(window_ms * 1e-3 * fs))
    win = min(win, n_fft - direct_t, n_fft - direct_e)
    i_est = pseudo_intensity(ch_est)[:, direct_e:direct_e + win]
    i_truth = pseudo_intensity(ch_truth)[:, direct_t:direct_t + win]
    weights = _hann_smooth(ch_truth[0] ** 2)[direct_t:direct_t + win]
    weights = np.maximum(weights, 0.0)
    angle, per_sample = weighted_angular_error(i_est, i_truth, weights)
    return WaeResult(angle, per_sample, weights / max(weights.sum(), 1e-300))


def error_stats(estimates, truths, kind: str) -> ErrorStats:
    """Error statistics between paired estimates and ground truths.

    kind selects the MAE/MAD units: relative percent for 'rt', native units
    (dB or degrees) for 'drr' and 'wae'. NaN cells count as failed and are
    excluded from all statistics except failed_pct.
    """
    if kind not in ("rt", "drr", "wae"):
        raise ValueError(f"unknown kind '{kind}'")
    e = np.asarray(estimates, dtype=np.float64).ravel()
    t = np.asarray(truths, dtype=np.float64).ravel()
    if e.size != t.size:
        raise ValueError("estimates and truths must pair up")
    valid = np.isfinite(e) & np.isfinite(t)
    failed_pct = 100.0 * (1.0 - valid.sum() / max(e.size, 1))
    e, t = e[valid], t[valid]
    if e.size == 0:
        return ErrorStats(np.nan, np.nan, np.nan, np.nan, np.nan, failed_pct)
    err = e - t
    mse = float(np.mean(err ** 2))
    bias = float(np.mean(err))
    if e.size >= 2 and np.std(e) > 0 and np.std(t) > 0:
        rho = float(np.corrcoef(e, t)[0, 1])
    else:
        rho = np.nan
    if kind == "rt":
        abs_err = 100.0 * np.abs(err) / np.abs(t)
    else:
        abs_err = np.abs(err)
    mae = float(np.median(abs_err))
    mad = float(np.median(np.abs(abs_err - np.median(abs_err))))
    return ErrorStats(mse, bias, rho, mae, mad, failed_pct)
