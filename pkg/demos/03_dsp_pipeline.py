"""The degradation pipeline: Chebyshev low-pass, decimation, spline
re-expansion, and the SNR / LSD metrics on the result."""

import numpy as np

from tfilm.data import synth_signal
from tfilm.dsp import cheby1_design, degrade, lsd, snr, spline_upsample

spec = {
    "kind": "multisine",
    "length": 8192,
    "components": [
        {"freq": 0.03, "amp": 1.0},
        {"freq": 0.11, "amp": 0.6},
        {"freq": 0.18, "amp": 0.4},
    ],
}
y = synth_signal(spec, seed=7).samples[:, 0]

filt = cheby1_design(order=8, ripple_db=0.05, cutoff=0.8 / 2)
print(f"anti-alias filter: order {filt.order}, "
      f"ripple {filt.ripple_db} dB, cutoff {filt.cutoff} of Nyquist, "
      f"stable={filt.is_stable()}")

low = degrade(y, 2)
x = spline_upsample(low, 2)
print(f"original {y.shape[0]} samples -> degraded {low.shape[0]} "
      f"-> spline-expanded {x.shape[0]}")

print(f"spline baseline: SNR {snr(x, y):.2f} dB, "
      f"LSD {lsd(x, y, frame_length=2048):.3f}")
