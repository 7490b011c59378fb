import numpy as np
import pytest

from blindrir.resynth import (
    ResynthConfig,
    fit_band_decays,
    resynthesize,
    shape_noise,
    split_early_late,
)
from blindrir.signal_core import (
    MultichannelSignal,
    StftConfig,
    edr,
    octave_filter_bank,
)
from blindrir.sysid import RirEstimate

FS = 48000
BANDS = (125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0)


def synthetic_rir(rt=0.5, channels=4, seed=0, ringing_hz=None,
                  ringing_rt=None):
    """Direct impulse plus decaying noise tail, optional resonant ringing."""
    rng = np.random.default_rng(seed)
    n = int(1.2 * rt * FS)
    t = np.arange(n)
    env = 10 ** (-60.0 * t / (20.0 * rt * FS))
    h = rng.standard_normal((channels, n)) * env * 0.05
    h[:, :40] = 0.0
    h[:, 20] = 1.0
    if ringing_hz is not None:
        ring_env = 10 ** (-60.0 * t / (20.0 * ringing_rt * FS))
        ring = 0.05 * np.sin(2 * np.pi * ringing_hz * t / FS) * ring_env
        h = h + ring
    return RirEstimate(MultichannelSignal(h, FS), {"mode": "far_field"})


class TestSplit:
    def test_split_at_peak_plus_20ms(self):
        est = synthetic_rir()
        early, late, split = split_early_late(est)
        assert split == 20 + int(round(0.02 * FS))
        assert early.shape[1] + late.shape[1] == est.rir.num_samples

    def test_split_beyond_length_raises(self):
        h = np.zeros((1, 100))
        h[0, 50] = 1.0
        est = RirEstimate(MultichannelSignal(h, FS))
        with pytest.raises(ValueError):
            split_early_late(est)


class TestFitBandDecays:
    def test_recovers_decay(self):
        est = synthetic_rir(rt=0.5)
        _, late, _ = split_early_late(est)
        tau, tags = fit_band_decays(late, FS, BANDS)
        assert np.nanmedian(np.abs(tau - 0.5) / 0.5) < 0.12
        assert not np.all(tags == "failed")

    def test_short_late_part_raises(self):
        with pytest.raises(ValueError, match="50 ms"):
            fit_band_decays(np.ones((1, 100)), FS, BANDS)


class TestShapeNoise:
    def test_deterministic_under_seed(self):
        tau = np.full((3, len(BANDS)), 0.4)
        cov = np.stack([np.eye(3)] * len(BANDS))
        energies = np.ones((3, len(BANDS)))
        a = shape_noise(tau, cov, energies, 9600, FS, BANDS, rng_seed=5)
        b = shape_noise(tau, cov, energies, 9600, FS, BANDS, rng_seed=5)
        np.testing.assert_array_equal(a[0], b[0])

    def test_different_seeds_differ(self):
        tau = np.full((2, len(BANDS)), 0.4)
        cov = np.stack([np.eye(2)] * len(BANDS))
        energies = np.ones((2, len(BANDS)))
        a = shape_noise(tau, cov, energies, 9600, FS, BANDS, rng_seed=1)
        b = shape_noise(tau, cov, energies, 9600, FS, BANDS, rng_seed=2)
        assert not np.allclose(a[0], b[0])


class TestResynthesize:
    @pytest.fixture(scope="class")
    def result(self):
        est = synthetic_rir(rt=0.8, channels=8, seed=3)
        out, report = resynthesize(est, ResynthConfig(rng_seed=7))
        return est, out, report

    def test_early_part_bit_exact(self, result):
        est, out, report = result
        np.testing.assert_array_equal(
            out.rir.samples[:, :report.split_sample],
            est.rir.samples[:, :report.split_sample])

    def test_band_energy_within_half_db(self, result):
        est, out, report = result
        split = report.split_sample
        orig = octave_filter_bank(
            MultichannelSignal(est.rir.samples[:, split:], FS), BANDS)
        new = octave_filter_bank(
            MultichannelSignal(out.rir.samples[:, split:], FS), BANDS)
        eo = np.sum(orig.band_signals ** 2, axis=-1)
        en = np.sum(new.band_signals ** 2, axis=-1)
        assert np.max(np.abs(10 * np.log10(en / eo))) < 0.5

    def test_covariance_error_below_10pct(self, result):
        _, _, report = result
        assert np.all(report.covariance_frob_error < 0.10)

    def test_tail_rt_matches_fit_within_3pct(self, result):
        # channel-median per band: single-channel refits carry the inherent
        # EDC fluctuation of one noise realization, the median does not
        _, out, report = result
        split = report.split_sample
        tail = out.rir.samples[:, split:]
        tau2, _ = fit_band_decays(tail, FS, BANDS)
        ref = np.nanmedian(report.fitted_rt_s, axis=0)
        new = np.nanmedian(tau2, axis=0)
        assert np.all(np.abs(new - ref) / ref < 0.03)

    def test_total_length_preserved(self, result):
        est, out, _ = result
        assert out.rir.num_samples == est.rir.num_samples

    def test_determinism(self):
        est = synthetic_rir(rt=0.4, seed=9)
        a, _ = resynthesize(est, ResynthConfig(rng_seed=11))
        b, _ = resynthesize(est, ResynthConfig(rng_seed=11))
        np.testing.assert_array_equal(a.rir.samples, b.rir.samples)

    def test_rejects_own_speech(self):
        est = synthetic_rir()
        est.meta["mode"] = "own_speech"
        with pytest.raises(ValueError, match="own-speech"):
            resynthesize(est)

    def test_removes_resonant_ringing(self):
        # a long-ringing resonance must be flattened to the band decay
        est = synthetic_rir(rt=0.35, seed=13, ringing_hz=1000.0,
                            ringing_rt=3.0)
        out, _ = resynthesize(est, ResynthConfig(rng_seed=3))
        cfg = StftConfig(block_len=1024, hop=256, fft_len=1024)
        t_idx = int(0.2 * FS / cfg.hop)
        bin_hz = FS / cfg.fft_len
        k = int(round(1000.0 / bin_hz))
        for sig, bound in ((est.rir, 10.0), (out.rir, 3.0)):
            r = edr(sig.samples[0], cfg, FS, normalize=True)
            neighbors = np.concatenate([r[t_idx, k - 8:k - 4],
                                        r[t_idx, k + 5:k + 9]])
            excess = r[t_idx, k] - np.median(neighbors)
            if sig is est.rir:
                assert excess > bound  # fixture really rings
            else:
                assert excess < bound  # resynthesis removed it
