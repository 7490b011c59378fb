import numpy as np
import pytest

from blindrir.beamform import (
    AtfSet,
    NoisePsd,
    apply_beamformer,
    estimate_noise_psd,
    mvdr_weights,
)
from blindrir.signal_core import MultichannelSignal, StftConfig, stft

FS = 48000


@pytest.fixture
def small_atf():
    rng = np.random.default_rng(0)
    irs = rng.standard_normal((6, 4, 64))
    dirs = [(az, 0.0) for az in (0, 60, 120, 180, 240, 300)]
    near = rng.standard_normal((4, 64))
    return AtfSet(dirs, irs, FS, near)


class TestAtfSet:
    def test_duplicate_directions_rejected(self):
        with pytest.raises(ValueError):
            AtfSet([(0, 0), (0, 0)], np.zeros((2, 2, 8)), FS)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            AtfSet([], np.zeros((0, 2, 8)), FS)

    def test_nearest_direction_and_gap(self, small_atf):
        idx, gap = small_atf.nearest_direction(62.0, 0.0)
        assert idx == 1 and gap == pytest.approx(2.0, abs=1e-9)

    def test_nearest_wraps_azimuth(self, small_atf):
        idx, gap = small_atf.nearest_direction(359.0, 0.0)
        assert idx == 0 and gap == pytest.approx(1.0, abs=1e-9)

    def test_freq_responses_shape(self, small_atf):
        fr = small_atf.freq_responses(256)
        assert fr.shape == (6, 4, 129)

    def test_subset(self, small_atf):
        sub = small_atf.subset([0, 2])
        assert sub.num_channels == 2
        assert sub.near_field_mouth.shape[0] == 2

    def test_near_field_channel_mismatch(self):
        with pytest.raises(ValueError):
            AtfSet([(0, 0)], np.zeros((1, 4, 8)), FS,
                   near_field_mouth=np.zeros((3, 8)))


class TestNoisePsd:
    def test_clips_negative_eigenvalues(self):
        mats = np.array([[[1.0, 0.0], [0.0, -0.5]]], dtype=complex)
        psd = NoisePsd(mats, frames_used=1)
        evals = np.linalg.eigvalsh(psd.matrices[0])
        assert evals.min() >= -1e-12

    def test_symmetrizes(self):
        mats = np.array([[[1.0, 1.0 + 1.0j], [0.0, 1.0]]])
        psd = NoisePsd(mats, frames_used=1)
        np.testing.assert_allclose(psd.matrices[0],
                                   psd.matrices[0].conj().T, atol=1e-12)

    def test_identity_factory(self):
        psd = NoisePsd.identity(16, 3)
        assert psd.matrices.shape == (16, 3, 3)
        assert psd.frames_used == 0

    def test_estimate_from_segment(self):
        rng = np.random.default_rng(1)
        seg = MultichannelSignal(rng.standard_normal((3, FS)), FS)
        psd = estimate_noise_psd(seg, StftConfig())
        assert psd.num_bins == 1025 and psd.num_channels == 3
        assert psd.frames_used > 100

    def test_short_segment_rejected(self):
        seg = MultichannelSignal(np.zeros((2, 1000)) + 1.0, FS)
        with pytest.raises(ValueError):
            estimate_noise_psd(seg, StftConfig())


class TestMvdr:
    def test_distortionless_constraint(self, small_atf):
        rng = np.random.default_rng(2)
        seg = MultichannelSignal(rng.standard_normal((4, FS)), FS)
        psd = estimate_noise_psd(seg, StftConfig())
        w = mvdr_weights(small_atf, psd, steer_direction=(60.0, 0.0))
        a = small_atf.freq_responses(2048)[1].T
        gains = np.einsum("bm,bm->b", w.conj(), a)
        np.testing.assert_allclose(gains, 1.0, atol=1e-8)

    def test_identity_psd_is_matched_filter(self, small_atf):
        psd = NoisePsd.identity(1025, 4)
        w = mvdr_weights(small_atf, psd, steer_direction=(0.0, 0.0))
        a = small_atf.freq_responses(2048)[0].T
        expected = a / np.sum(np.abs(a) ** 2, axis=1, keepdims=True)
        np.testing.assert_allclose(w, expected, atol=1e-8)

    def test_steering_gap_warns(self, small_atf):
        psd = NoisePsd.identity(1025, 4)
        with pytest.warns(UserWarning, match="nearest grid direction"):
            mvdr_weights(small_atf, psd, steer_direction=(30.0, 0.0))

    def test_near_field_steering(self, small_atf):
        psd = NoisePsd.identity(1025, 4)
        w = mvdr_weights(small_atf, psd, near_field=True)
        a = small_atf.near_field_freq_response(2048).T
        gains = np.einsum("bm,bm->b", w.conj(), a)
        np.testing.assert_allclose(gains, 1.0, atol=1e-8)

    def test_requires_direction(self, small_atf):
        with pytest.raises(ValueError):
            mvdr_weights(small_atf, NoisePsd.identity(1025, 4))


class TestApplyBeamformer:
    def test_extracts_steered_signal(self, small_atf):
        # observations equal to ATF-filtered source: beamformer returns source
        rng = np.random.default_rng(3)
        s = rng.standard_normal(FS)
        ir = small_atf.impulse_responses[2]
        d = np.stack([np.convolve(s, ir[m])[:s.size] for m in range(4)])
        cfg = StftConfig()
        frames = stft(MultichannelSignal(d, FS), cfg)
        psd = NoisePsd.identity(cfg.num_bins, 4)
        w = mvdr_weights(small_atf, psd, steer_direction=(120.0, 0.0))
        out = apply_beamformer(w, frames)
        assert out.num_channels == 1
        assert out.num_frames == frames.num_frames

    def test_shape_mismatch_rejected(self, small_atf):
        cfg = StftConfig()
        frames = stft(MultichannelSignal(np.zeros((4, FS)), FS), cfg)
        with pytest.raises(ValueError):
            apply_beamformer(np.zeros((10, 4), dtype=complex), frames)
