"""Train a small super-resolution model end to end.

A scaled-down version of the comparative protocol: a handful of multisine
signals, a K=2 model with capped filters, a few epochs. Prints the test
SNR next to the spline baseline.
"""

from tfilm.experiments import run_super_resolution_comparison

result = run_super_resolution_comparison(
    seed=0, n_signals=12, n_test=4, epochs=6, max_filters=16,
)
print(f"parameters: full {result.params_full}, conv-only {result.params_conv}")
print(f"mean test SNR (dB):  full {result.snr_full:7.3f}   "
      f"conv {result.snr_conv:7.3f}   spline {result.snr_spline:7.3f}")
