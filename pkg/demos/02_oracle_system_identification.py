"""Non-blind sanity check: the multichannel Wiener filter as a system
identifier.

With the true dry source as the reference, the per-bin Wiener quotient
recovers a known multichannel FIR almost exactly. This isolates the
identification back end from the blind reference-recovery front end.
"""

import time

import numpy as np

from blindrir import MultichannelSignal, MwfConfig, mwf_estimate

FS = 48000


def main():
    rng = np.random.default_rng(0)
    taps = 500
    h = rng.standard_normal((4, taps)) * np.exp(-np.arange(taps) / 120)
    s = rng.standard_normal(FS * 3)
    d = np.stack([np.convolve(s, h[ch])[:s.size] for ch in range(4)])

    t0 = time.perf_counter()
    est = mwf_estimate(MultichannelSignal(s, FS), MultichannelSignal(d, FS),
                       MwfConfig(block_len=8192, hop=2048))
    elapsed = time.perf_counter() - t0

    he = est.rir.samples[:, :taps]
    mis = 10 * np.log10(np.sum((he - h) ** 2) / np.sum(h ** 2))
    print(f"recovered 4x{taps}-tap FIR in {elapsed:.2f} s")
    print(f"normalized misalignment: {mis:.1f} dB (oracle gate: < -30 dB)")


if __name__ == "__main__":
    main()
