"""Command-line surface: simulate, estimate, resynth, render, auralize,
metrics, eval.

Every command is deterministic given its flags and seeds, exits 0 on
success, and prints a single machine-parsable "error: ..." line on failure.
Intermediate signals are persisted next to the requested outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .beamform import NoisePsd, apply_beamformer, mvdr_weights
from .binaural import Brir, auralize, compute_emagls_filters, render_brir
from .dereverb import GwpeConfig, gwpe_dereverberate
from .io_formats import (
    ResultsTable,
    read_atf_manifest,
    read_wav,
    write_atf_manifest,
    write_wav,
)
from .metrics import error_stats, estimate_room_params, wae
from .resynth import ResynthConfig, resynthesize
from .scenario import (
    ArrayGeometry,
    RoomSpec,
    ScenarioConfig,
    default_glasses_geometry,
    gen_diffuse_babble,
    run_pipeline,
    synth_atfs,
    synth_ground_truth_rir,
    synthetic_speech,
)
from .signal_core import MultichannelSignal, StftConfig, istft, stft
from .sysid import MwfConfig, RirEstimate, mwf_estimate


def _load_geometry(path: str | None) -> ArrayGeometry:
    if path is None:
        return default_glasses_geometry()
    with open(path) as f:
        return ArrayGeometry.from_dict(json.load(f))


def _load_rooms(path: str) -> list:
    with open(path) as f:
        doc = json.load(f)
    rooms = doc["rooms"] if isinstance(doc, dict) else doc
    return [RoomSpec.from_dict(r) for r in rooms]


def _cmd_simulate(args) -> int:
    rooms = _load_rooms(args.rooms)
    geometry = _load_geometry(args.geometry)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atf = synth_atfs(geometry)
    write_atf_manifest(out / "atf_manifest.json", atf)
    speech = synthetic_speech(5.6, atf.sample_rate_hz, rng_seed=args.seed)
    write_wav(out / "speech.wav", speech)
    noise = gen_diffuse_babble(atf, geometry.num_mics, 6.6,
                               rng_seed=args.seed + 1)
    write_wav(out / "noise.wav", noise)
    for i, room in enumerate(rooms):
        truth = synth_ground_truth_rir(room, atf, rng_seed=args.seed + 10 + i)
        write_wav(out / f"room{i:02d}_truth.wav", truth)
        s = speech.samples[0]
        rev = np.stack([np.convolve(s, truth.samples[ch])[:s.size]
                        for ch in range(truth.num_channels)])
        write_wav(out / f"room{i:02d}_array.wav",
                  MultichannelSignal(rev, atf.sample_rate_hz))
    print(f"simulated {len(rooms)} rooms into {out}")
    return 0


def _cmd_estimate(args) -> int:
    atf = read_atf_manifest(args.atf)
    observed = read_wav(args.infile, expect_rate_hz=atf.sample_rate_hz)
    az, el = (float(v) for v in args.doa.split(","))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    stft_cfg = StftConfig()
    mode = "far_field" if args.mode == "far" else "own_speech"
    if args.no_dereverb or mode == "own_speech":
        dereverbed = observed
    else:
        dereverbed = gwpe_dereverberate(observed, GwpeConfig(stft=stft_cfg))
    psd = NoisePsd.identity(stft_cfg.num_bins, observed.num_channels)
    if mode == "own_speech":
        weights = mvdr_weights(atf, psd, near_field=True)
    else:
        weights = mvdr_weights(atf, psd,
                               steer_direction=(az + args.doa_offset, el))
    reference = istft(apply_beamformer(weights, stft(dereverbed, stft_cfg)))
    write_wav(out.with_name(out.stem + "_reference.wav"), reference)

    cfg = MwfConfig(rt_hint_s=args.rt_hint,
                    sample_rate_hz=observed.sample_rate_hz)
    est = mwf_estimate(reference, observed, cfg)
    est.meta["mode"] = mode
    write_wav(out, est.rir)
    meta_path = out.with_suffix(".json")
    with open(meta_path, "w") as f:
        json.dump({k: v for k, v in est.meta.items()
                   if isinstance(v, (int, float, str, bool, type(None)))},
                  f, indent=2)
    print(f"wrote {out}")
    return 0


def _cmd_resynth(args) -> int:
    rir_sig = read_wav(args.infile)
    est = RirEstimate(rir_sig, {"mode": "far_field"})
    cfg = ResynthConfig(tau_split_ms=args.tau_split_ms, rng_seed=args.seed)
    resynth, report = resynthesize(est, cfg)
    out = Path(args.out)
    write_wav(out, resynth.rir)
    lines = ["channel,band_hz,tau_s,method,energy_gain,cov_frob_error"]
    for ch in range(report.fitted_rt_s.shape[0]):
        for bi, fc in enumerate(report.band_centers_hz):
            lines.append(f"{ch},{fc:g},{report.fitted_rt_s[ch, bi]:.6g},"
                         f"{report.rt_method[ch, bi]},"
                         f"{report.energy_gain[ch, bi]:.6g},"
                         f"{report.covariance_frob_error[bi]:.6g}")
    out.with_suffix(".csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out}")
    return 0


def _cmd_render(args) -> int:
    rir_sig = read_wav(args.rir)
    atf = read_atf_manifest(args.atf)
    hrtf = read_atf_manifest(args.hrtf)
    filters = compute_emagls_filters(atf, hrtf)
    brir = render_brir(RirEstimate(rir_sig, {}), filters)
    write_wav(args.out, MultichannelSignal(brir.samples, brir.sample_rate_hz))
    print(f"wrote {args.out}")
    return 0


def _cmd_auralize(args) -> int:
    brir_sig = read_wav(args.brir)
    if brir_sig.num_channels != 2:
        raise ValueError("BRIR file must have two channels")
    src = read_wav(args.src, expect_rate_hz=brir_sig.sample_rate_hz)
    brir = Brir(brir_sig.samples, brir_sig.sample_rate_hz)
    out_sig = auralize(brir, src)
    peak = np.max(np.abs(out_sig.samples))
    if peak > 1.0:
        out_sig = MultichannelSignal(out_sig.samples / peak,
                                     out_sig.sample_rate_hz)
    write_wav(args.out, out_sig)
    print(f"wrote {args.out}")
    return 0


def _metric_rows(table: ResultsTable, scenario_id: str, mode: str,
                 est_sig: MultichannelSignal, truth_sig: MultichannelSignal,
                 atf) -> None:
    p_est = estimate_room_params(est_sig)
    p_truth = estimate_room_params(truth_sig)
    m = est_sig.num_channels
    table.add(scenario_id, mode, m, None, "rt",
              error_stats(p_est.rt_s, p_truth.rt_s, "rt"))
    drr_t = np.where(p_truth.drr_infinite, np.nan, p_truth.drr_db)
    drr_e = np.where(p_est.drr_infinite, np.nan, p_est.drr_db)
    table.add(scenario_id, mode, m, None, "drr",
              error_stats(drr_e, drr_t, "drr"))
    if m >= 3 and atf is not None:
        n = min(est_sig.num_samples, truth_sig.num_samples)
        w = wae(MultichannelSignal(est_sig.samples[:, :n],
                                   est_sig.sample_rate_hz),
                MultichannelSignal(truth_sig.samples[:, :n],
                                   truth_sig.sample_rate_hz), atf)
        table.add(scenario_id, mode, m, None, "wae",
                  error_stats([w.wae_deg], [0.0], "wae"))


def _cmd_metrics(args) -> int:
    est_sig = read_wav(args.est)
    truth_sig = read_wav(args.truth, expect_rate_hz=est_sig.sample_rate_hz)
    atf = read_atf_manifest(args.atf) if args.atf else None
    table = ResultsTable()
    _metric_rows(table, Path(args.est).stem, "far_field", est_sig, truth_sig,
                 atf)
    table.write_csv(args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    with open(args.batch) as f:
        batch = json.load(f)
    rooms = [RoomSpec.from_dict(r) for r in batch["rooms"]]
    geometry = _load_geometry(batch.get("geometry_file"))
    base = batch.get("scenario", {})
    seed = int(base.get("rng_seed", 0))

    sweeps = {None: [{}]}
    if args.sweep == "doa":
        sweeps = {"doa": [{"doa_offset_deg": v}
                          for v in batch.get("doa_offsets_deg", [0.0, 30.0])]}
    elif args.sweep == "blocklen":
        sweeps = {"blocklen": [{"block_factor": v}
                               for v in batch.get("block_factors",
                                                  [1.5, 2.0, 3.0, 4.0])]}
    elif args.sweep == "sir":
        sweeps = {"sir": [{"sir_db": v}
                          for v in batch.get("sir_db", [20.0, 10.0, 0.0])]}

    table = ResultsTable()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    for sweep_name, variants in sweeps.items():
        for vi, variant in enumerate(variants):
            rt_e, rt_t, drr_e, drr_t, waes = [], [], [], [], []
            mode = base.get("mode", "far_field")
            num_mics = None
            for ri, room in enumerate(rooms):
                cfg = ScenarioConfig(
                    mic_subset=tuple(base["mic_subset"])
                    if base.get("mic_subset") else None,
                    snr_db=base.get("snr_db"),
                    sir_db=variant.get("sir_db", base.get("sir_db")),
                    doa_offset_deg=variant.get("doa_offset_deg",
                                               base.get("doa_offset_deg", 0.0)),
                    mode=mode,
                    rng_seed=seed + ri,
                )
                if "block_factor" in variant:
                    block = int(round(variant["block_factor"]
                                      * room.broadband_rt_s
                                      * 48000 / 2.0)) * 2
                    cfg.mwf_block_len = block
                res = run_pipeline(cfg, room, geometry=geometry)
                num_mics = res.estimate.rir.num_channels
                rt_e.append(res.params_estimate.rt_s)
                rt_t.append(res.params_truth.rt_s)
                drr_e.append(np.where(res.params_estimate.drr_infinite,
                                      np.nan, res.params_estimate.drr_db))
                drr_t.append(np.where(res.params_truth.drr_infinite,
                                      np.nan, res.params_truth.drr_db))
                if res.wae is not None:
                    waes.append(res.wae.wae_deg)
                write_wav(out.parent / f"{out.stem}_s{vi}_r{ri}_est.wav",
                          res.estimate.rir)
            sid = "batch" if sweep_name is None else \
                f"{sweep_name}={list(variant.values())[0]:g}"
            table.add(sid, mode, num_mics, base.get("snr_db"), "rt",
                      error_stats(np.concatenate([r.ravel() for r in rt_e]),
                                  np.concatenate([r.ravel() for r in rt_t]),
                                  "rt"))
            table.add(sid, mode, num_mics, base.get("snr_db"), "drr",
                      error_stats(np.concatenate(drr_e),
                                  np.concatenate(drr_t), "drr"))
            if waes:
                table.add(sid, mode, num_mics, base.get("snr_db"), "wae",
                          error_stats(waes, np.zeros(len(waes)), "wae"))
    table.write_csv(out)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="blindrir",
        description="Blind multichannel RIR estimation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic scenario batch")
    s.add_argument("--rooms", required=True)
    s.add_argument("--geometry")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=_cmd_simulate)

    s = sub.add_parser("estimate", help="blind RIR estimation from array audio")
    s.add_argument("--in", dest="infile", required=True)
    s.add_argument("--atf", required=True)
    s.add_argument("--doa", required=True, help="azimuth,elevation in degrees")
    s.add_argument("--doa-offset", dest="doa_offset", type=float, default=0.0)
    s.add_argument("--mode", choices=("far", "own"), default="far")
    s.add_argument("--rt-hint", dest="rt_hint", type=float, default=1.0)
    s.add_argument("--no-dereverb", dest="no_dereverb", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_estimate)

    s = sub.add_parser("resynth", help="replace the late RIR part with "
                                       "shaped noise")
    s.add_argument("--in", dest="infile", required=True)
    s.add_argument("--tau-split-ms", dest="tau_split_ms", type=float,
                   default=20.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_resynth)

    s = sub.add_parser("render", help="render a multichannel RIR to a BRIR")
    s.add_argument("--rir", required=True)
    s.add_argument("--atf", required=True)
    s.add_argument("--hrtf", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_render)

    s = sub.add_parser("auralize", help="convolve a source with a BRIR")
    s.add_argument("--brir", required=True)
    s.add_argument("--src", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_auralize)

    s = sub.add_parser("metrics", help="compare an estimate against a truth RIR")
    s.add_argument("--est", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--atf")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_metrics)

    s = sub.add_parser("eval", help="run a scenario batch and tabulate errors")
    s.add_argument("--batch", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--sweep", choices=("doa", "blocklen", "sir"))
    s.set_defaults(fn=_cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # pragma: no cover - exercised via CLI tests
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
