"""The headline capability: blind multichannel RIR estimation.

Simulates a reverberant room captured by the 8-mic glasses array, then
runs the full blind chain — subband linear-prediction dereverberation,
MVDR beamforming toward the talker, and multichannel Wiener-filter system
identification — and compares estimated octave-band reverberation times
and direct-to-reverberant ratios against the simulated ground truth.

Takes roughly a minute; the dereverberation stage dominates.
"""

import time

import numpy as np

from blindrir import (RoomSpec, ScenarioConfig, plausible_early_reflections,
                      run_pipeline)


def main():
    room = RoomSpec(rt_per_band_s=np.full(7, 0.6), drr_db=-5.0,
                    source_az_el=(30.0, 0.0),
                    early_reflections=plausible_early_reflections(
                        (30.0, 0.0), -5.0))
    scenario = ScenarioConfig(snr_db=12.0, rng_seed=0)

    print("running blind far-field pipeline (RT 0.6 s, DRR -5 dB, "
          "SNR 12 dB)...")
    t0 = time.perf_counter()
    res = run_pipeline(scenario, room)
    print(f"done in {time.perf_counter() - t0:.0f} s\n")

    bands = res.params_truth.band_centers_hz
    rt_e = np.nanmedian(res.params_estimate.rt_s, axis=0)
    rt_t = np.nanmedian(res.params_truth.rt_s, axis=0)
    print("band [Hz]   RT true [s]   RT est [s]   error")
    for fc, t, e in zip(bands, rt_t, rt_e):
        print(f"{fc:8.0f}   {t:10.3f}   {e:9.3f}   {100 * abs(e - t) / t:5.1f}%")

    drr_e = np.median(res.params_estimate.drr_db)
    drr_t = np.median(res.params_truth.drr_db)
    print(f"\nDRR: true {drr_t:.2f} dB, estimated {drr_e:.2f} dB")
    if res.wae is not None:
        print(f"weighted angular error of the direct sound: "
              f"{res.wae.wae_deg:.1f} deg")


if __name__ == "__main__":
    main()
