import numpy as np
import pytest

from blindrir.dereverb import GwpeConfig, gwpe_dereverberate
from blindrir.signal_core import MultichannelSignal, StftConfig, stft

FS = 48000


def reverberant_fixture(seed=0, seconds=2.0, channels=2, rt=0.5):
    """Noise source convolved with exponentially decaying random RIRs."""
    rng = np.random.default_rng(seed)
    n = int(seconds * FS)
    s = rng.standard_normal(n)
    taps = int(0.4 * FS)
    env = 10 ** (-60.0 * np.arange(taps) / (20.0 * rt * FS))
    d = np.empty((channels, n))
    rirs = []
    for ch in range(channels):
        h = rng.standard_normal(taps) * env * 0.05
        h[ch * 8] = 1.0  # distinct direct-path delays per channel
        rirs.append(h)
        d[ch] = np.convolve(s, h)[:n]
    return MultichannelSignal(d, FS), s, rirs


def late_energy_ratio(sig: MultichannelSignal, delay_frames: int) -> float:
    """Mean power in frames more than delay_frames after strong frames."""
    cfg = StftConfig()
    p = np.abs(stft(sig, cfg).data[0]) ** 2  # (frames, bins)
    frame_pow = p.mean(axis=1)
    return float(frame_pow.mean())


class TestConfig:
    def test_defaults(self):
        cfg = GwpeConfig()
        assert cfg.filter_order == 36 and cfg.iterations == 3
        assert cfg.delay_frames(FS) == 8  # 20 ms at hop 128

    def test_validation(self):
        with pytest.raises(ValueError):
            GwpeConfig(prediction_delay_ms=0)
        with pytest.raises(ValueError):
            GwpeConfig(filter_order=0)
        with pytest.raises(ValueError):
            GwpeConfig(iterations=0)


class TestGwpe:
    @pytest.fixture(scope="class")
    def small_cfg(self):
        return GwpeConfig(filter_order=12, iterations=2)

    def test_too_short_raises(self, small_cfg):
        sig = MultichannelSignal(np.zeros((2, 2000)) + 1.0, FS)
        with pytest.raises(ValueError, match="too short"):
            gwpe_dereverberate(sig, small_cfg)

    def test_preserves_shape_and_rate(self, small_cfg):
        sig, _, _ = reverberant_fixture(seconds=1.0)
        out = gwpe_dereverberate(sig, small_cfg)
        assert out.samples.shape == sig.samples.shape
        assert out.sample_rate_hz == FS

    def test_scale_equivariance(self, small_cfg):
        sig, _, _ = reverberant_fixture(seconds=1.0)
        out1 = gwpe_dereverberate(sig, small_cfg)
        scaled = MultichannelSignal(7.5 * sig.samples, FS)
        out2 = gwpe_dereverberate(scaled, small_cfg)
        # single-precision filtering: compare in relative L2 norm
        rel = (np.linalg.norm(out2.samples - 7.5 * out1.samples)
               / np.linalg.norm(7.5 * out1.samples))
        assert rel < 5e-3

    def test_reduces_reverberant_tail(self):
        # a gap after source offset: residual energy there is reverb only
        rng = np.random.default_rng(7)
        n = int(2.0 * FS)
        s = np.zeros(n)
        s[:int(1.2 * FS)] = rng.standard_normal(int(1.2 * FS))
        taps = int(0.5 * FS)
        env = 10 ** (-60.0 * np.arange(taps) / (20.0 * 0.6 * FS))
        d = np.empty((3, n))
        for ch in range(3):
            h = rng.standard_normal(taps) * env * 0.1
            h[ch * 5] = 1.0
            d[ch] = np.convolve(s, h)[:n]
        sig = MultichannelSignal(d, FS)
        out = gwpe_dereverberate(sig, GwpeConfig(filter_order=16, iterations=2))
        # energy 100 ms after the source stops: reverb tail region
        a, b = int(1.3 * FS), int(1.6 * FS)
        before = np.sum(sig.samples[:, a:b] ** 2)
        after = np.sum(out.samples[:, a:b] ** 2)
        assert after < 0.5 * before

    def test_preserves_interchannel_delays(self, small_cfg):
        sig, _, _ = reverberant_fixture(seed=4, seconds=1.0)
        out = gwpe_dereverberate(sig, small_cfg)
        # direct paths at lags 0 and 8: cross-correlation peak stays at 8
        c = np.correlate(out.samples[1, :FS // 2], out.samples[0, :FS // 2],
                         "full")
        lag = int(np.argmax(np.abs(c))) - (FS // 2 - 1)
        assert lag == 8

    def test_early_frames_pass_through(self, small_cfg):
        sig, _, _ = reverberant_fixture(seed=5, seconds=1.0)
        out = gwpe_dereverberate(sig, small_cfg)
        # frames without full prediction history are unmodified, so the
        # first block of samples survives the round trip unchanged
        n_keep = 512
        np.testing.assert_allclose(out.samples[:, 1:n_keep],
                                   sig.samples[:, 1:n_keep], atol=1e-3)
