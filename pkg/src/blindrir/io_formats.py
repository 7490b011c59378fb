"""On-disk interchange formats: float32 WAV, ATF manifests, results tables.

All audio on disk is float32 WAV at a single project-wide sample rate;
sample-rate mismatches are hard errors, never resampled. Writes go through
a temporary file and an atomic rename.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .beamform import AtfSet
from .metrics import ErrorStats
from .signal_core import MultichannelSignal


def _atomic_write(path: Path, write_fn) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=path.suffix + ".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            write_fn(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_wav(path, signal: MultichannelSignal) -> None:
    """Write a multichannel signal as interleaved float32 WAV, bit-exact."""
    data = np.ascontiguousarray(signal.samples.T.astype(np.float32))
    _atomic_write(Path(path),
                  lambda f: wavfile.write(f, signal.sample_rate_hz, data))


def read_wav(path, expect_rate_hz: int | None = None) -> MultichannelSignal:
    """Read a WAV file into (channels, length) float samples.

    Integer PCM is scaled to [-1, 1); float data passes through unchanged.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    rate, data = wavfile.read(path)
    if expect_rate_hz is not None and rate != expect_rate_hz:
        raise ValueError(f"sample-rate mismatch: {path} has {rate} Hz, "
                         f"expected {expect_rate_hz} Hz (no resampling)")
    if data.ndim == 1:
        data = data[:, np.newaxis]
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float64) / float(np.iinfo(data.dtype).max + 1)
    return MultichannelSignal(data.T, rate)


def write_atf_manifest(path, atf: AtfSet, geometry_file: str | None = None
                       ) -> None:
    """Write an ATF set as a JSON manifest plus one WAV per direction.

    WAVs are placed next to the manifest; paths in the manifest are
    relative to it.
    """
    path = Path(path)
    stem = path.stem
    entries = []
    for i, (az, el) in enumerate(atf.directions):
        wav_name = f"{stem}_dir{i:04d}.wav"
        write_wav(path.parent / wav_name,
                  MultichannelSignal(atf.impulse_responses[i],
                                     atf.sample_rate_hz))
        entries.append({"azimuth_deg": az, "elevation_deg": el,
                        "file": wav_name})
    manifest = {
        "schema_version": 1,
        "sample_rate_hz": atf.sample_rate_hz,
        "num_channels": atf.num_channels,
        "channel_labels": list(range(1, atf.num_channels + 1)),
        "directions": entries,
    }
    if atf.near_field_mouth is not None:
        wav_name = f"{stem}_nearfield.wav"
        write_wav(path.parent / wav_name,
                  MultichannelSignal(atf.near_field_mouth, atf.sample_rate_hz))
        manifest["near_field_mouth"] = {"file": wav_name}
    if geometry_file is not None:
        manifest["geometry_file"] = geometry_file
    payload = json.dumps(manifest, indent=2).encode()
    _atomic_write(path, lambda f: f.write(payload))


def read_atf_manifest(path) -> AtfSet:
    """Load an ATF set from a JSON manifest and its referenced WAV files."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such manifest: {path}")
    with open(path) as f:
        manifest = json.load(f)
    rate = int(manifest["sample_rate_hz"])
    m = int(manifest["num_channels"])
    directions = []
    irs = []
    for entry in manifest["directions"]:
        sig = read_wav(path.parent / entry["file"], expect_rate_hz=rate)
        if sig.num_channels != m:
            raise ValueError(f"{entry['file']}: expected {m} channels, "
                             f"got {sig.num_channels}")
        directions.append((entry["azimuth_deg"], entry["elevation_deg"]))
        irs.append(sig.samples)
    taps = max(x.shape[1] for x in irs)
    irs = np.stack([np.pad(x, ((0, 0), (0, taps - x.shape[1]))) for x in irs])
    near = None
    if "near_field_mouth" in manifest:
        sig = read_wav(path.parent / manifest["near_field_mouth"]["file"],
                       expect_rate_hz=rate)
        near = sig.samples
    return AtfSet(directions, irs, rate, near)


RESULTS_COLUMNS = ("scenario_id", "mode", "num_mics", "snr_db", "metric",
                   "mse", "bias", "pearson_rho", "mae", "mad", "failed_pct")


@dataclass
class ResultsTable:
    """Accumulated evaluation rows, serializable to CSV."""

    rows: list = field(default_factory=list)

    def add(self, scenario_id: str, mode: str, num_mics: int,
            snr_db, metric: str, stats: ErrorStats) -> None:
        row = {"scenario_id": scenario_id, "mode": mode,
               "num_mics": num_mics,
               "snr_db": "inf" if snr_db is None or not np.isfinite(snr_db)
               else snr_db,
               "metric": metric}
        row.update(asdict(stats))
        self.rows.append(row)

    def write_csv(self, path) -> None:
        def emit(f):
            text = f
            lines = [",".join(RESULTS_COLUMNS)]
            for row in self.rows:
                lines.append(",".join(_format_cell(row[c])
                                      for c in RESULTS_COLUMNS))
            text.write(("\n".join(lines) + "\n").encode())
        _atomic_write(Path(path), emit)

    @classmethod
    def read_csv(cls, path) -> "ResultsTable":
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            return cls([dict(r) for r in reader])


def _format_cell(v) -> str:
    if isinstance(v, float):
        if np.isnan(v):
            return "nan"
        return f"{v:.6g}"
    return str(v)
