import json

import numpy as np
import pytest

from blindrir.cli import main
from blindrir.io_formats import (
    ResultsTable,
    read_atf_manifest,
    read_wav,
    write_atf_manifest,
    write_wav,
)
from blindrir.metrics import error_stats
from blindrir.scenario import default_glasses_geometry, synth_atfs
from blindrir.signal_core import MultichannelSignal

FS = 48000


@pytest.fixture(scope="module")
def atf():
    grid = [(az, 0.0) for az in range(0, 360, 30)]
    return synth_atfs(default_glasses_geometry(), grid)


def synthetic_rir(rt=0.35, channels=2, seed=0):
    rng = np.random.default_rng(seed)
    n = int(1.2 * rt * FS)
    t = np.arange(n)
    env = 10 ** (-60.0 * t / (20.0 * rt * FS))
    h = rng.standard_normal((channels, n)) * env * 0.05
    h[:, :40] = 0.0
    h[:, 20] = 1.0
    return MultichannelSignal(h, FS)


class TestWavIo:
    def test_roundtrip_bit_exact(self, tmp_path):
        x = np.random.default_rng(0).standard_normal((3, 1000)) * 0.1
        sig = MultichannelSignal(x.astype(np.float32), FS)
        write_wav(tmp_path / "a.wav", sig)
        back = read_wav(tmp_path / "a.wav", expect_rate_hz=FS)
        np.testing.assert_array_equal(back.samples, sig.samples)

    def test_rate_mismatch_is_error(self, tmp_path):
        write_wav(tmp_path / "b.wav", MultichannelSignal(np.zeros(100), 44100))
        with pytest.raises(ValueError, match="no resampling"):
            read_wav(tmp_path / "b.wav", expect_rate_hz=FS)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.wav"):
            read_wav(tmp_path / "nope.wav")

    def test_mono_gets_channel_axis(self, tmp_path):
        write_wav(tmp_path / "c.wav", MultichannelSignal(np.ones(64), FS))
        assert read_wav(tmp_path / "c.wav").samples.shape == (1, 64)


class TestAtfManifest:
    def test_roundtrip(self, tmp_path, atf):
        path = tmp_path / "atf.json"
        write_atf_manifest(path, atf)
        back = read_atf_manifest(path)
        assert back.directions == atf.directions
        assert back.num_channels == atf.num_channels
        np.testing.assert_allclose(back.impulse_responses,
                                   atf.impulse_responses, atol=1e-7)
        np.testing.assert_allclose(back.near_field_mouth,
                                   atf.near_field_mouth, atol=1e-6)

    def test_missing_direction_file(self, tmp_path, atf):
        path = tmp_path / "atf.json"
        write_atf_manifest(path, atf)
        victim = tmp_path / "atf_dir0003.wav"
        victim.unlink()
        with pytest.raises(FileNotFoundError, match="atf_dir0003.wav"):
            read_atf_manifest(path)


class TestResultsTable:
    def test_csv_roundtrip(self, tmp_path):
        t = ResultsTable()
        stats = error_stats([0.5, 0.6], [0.5, 0.5], "rt")
        t.add("room0", "far_field", 8, 12.0, "rt", stats)
        t.add("room0", "far_field", 8, None, "drr", stats)
        path = tmp_path / "res.csv"
        t.write_csv(path)
        back = ResultsTable.read_csv(path)
        assert len(back.rows) == 2
        assert back.rows[0]["scenario_id"] == "room0"
        assert back.rows[0]["snr_db"] == "12"
        assert back.rows[1]["snr_db"] == "inf"
        assert float(back.rows[0]["mae"]) == pytest.approx(stats.mae)


class TestCliCommands:
    def test_unknown_args_exit_nonzero(self):
        with pytest.raises(SystemExit):
            main(["estimate"])

    def test_error_goes_to_stderr(self, tmp_path, capsys):
        rc = main(["resynth", "--in", str(tmp_path / "missing.wav"),
                   "--out", str(tmp_path / "out.wav")])
        assert rc == 1
        assert "error: FileNotFoundError" in capsys.readouterr().err

    def test_resynth_deterministic(self, tmp_path):
        src = tmp_path / "rir.wav"
        write_wav(src, synthetic_rir())
        outs = []
        for name in ("o1.wav", "o2.wav"):
            out = tmp_path / name
            rc = main(["resynth", "--in", str(src), "--seed", "4",
                       "--out", str(out)])
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert (tmp_path / "o1.csv").read_text().startswith(
            "channel,band_hz,tau_s")

    def test_metrics_self_comparison(self, tmp_path):
        rir = tmp_path / "truth.wav"
        write_wav(rir, synthetic_rir(seed=2))
        out = tmp_path / "metrics.csv"
        rc = main(["metrics", "--est", str(rir), "--truth", str(rir),
                   "--out", str(out)])
        assert rc == 0
        rows = ResultsTable.read_csv(out).rows
        by_metric = {r["metric"]: r for r in rows}
        assert float(by_metric["rt"]["mae"]) == 0.0
        assert float(by_metric["drr"]["mae"]) == 0.0

    def test_estimate_no_dereverb(self, tmp_path, atf):
        manifest = tmp_path / "atf.json"
        write_atf_manifest(manifest, atf)
        rir = synthetic_rir(rt=0.12, channels=8, seed=5)
        rng = np.random.default_rng(6)
        s = rng.standard_normal(FS)
        obs = np.stack([np.convolve(s, rir.samples[ch])[:s.size]
                        for ch in range(8)])
        obs_path = tmp_path / "obs.wav"
        write_wav(obs_path, MultichannelSignal(obs, FS))
        out = tmp_path / "est.wav"
        rc = main(["estimate", "--in", str(obs_path), "--atf", str(manifest),
                   "--doa", "0,0", "--no-dereverb", "--rt-hint", "0.1",
                   "--out", str(out)])
        assert rc == 0
        est = read_wav(out, expect_rate_hz=FS)
        assert est.num_channels == 8
        assert (tmp_path / "est_reference.wav").is_file()
        meta = json.loads((tmp_path / "est.json").read_text())
        assert meta["mode"] == "far_field"

    def test_simulate_smoke(self, tmp_path):
        rooms = tmp_path / "rooms.json"
        rooms.write_text(json.dumps({"rooms": [
            {"rt_per_band_s": [0.4] * 7, "drr_db": -3.0,
             "source_az_el": [30.0, 0.0]}]}))
        out = tmp_path / "sim"
        rc = main(["simulate", "--rooms", str(rooms), "--out", str(out),
                   "--seed", "1"])
        assert rc == 0
        assert (out / "atf_manifest.json").is_file()
        assert (out / "speech.wav").is_file()
        assert (out / "room00_truth.wav").is_file()
        array = read_wav(out / "room00_array.wav", expect_rate_hz=FS)
        assert array.num_channels == 8
