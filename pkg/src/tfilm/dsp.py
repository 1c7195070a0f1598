"""Signal processing: cubic-spline resampling, Chebyshev type-I
decimation filters, STFT, and the SNR / log-spectral distance metrics.

The degradation pipeline mirrors standard decimation practice: an order-8
Chebyshev type-I low-pass (0.05 dB ripple, cutoff 0.8/r of Nyquist)
followed by keeping every r-th sample. SNR is reported in dB (base-10
log); LSD uses the natural log of the power spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidCutoff,
    InvalidRate,
    InvalidRipple,
    LengthMismatch,
    SignalTooShort,
    TooShort,
    ZeroReference,
)

__all__ = [
    "IirFilter",
    "Spectrogram",
    "natural_cubic_spline",
    "spline_upsample",
    "cheby1_design",
    "iir_apply",
    "degrade",
    "stft",
    "snr",
    "lsd",
]

# additive floor inside the log so silent bins stay finite
EPS_SPEC = 1e-10


# --- cubic splines ------------------------------------------------------------


def natural_cubic_spline(knots_x, knots_y):
    """Natural cubic spline interpolant through (knots_x, knots_y).

    Returns a callable evaluating the spline at arbitrary points; queries
    outside the knot range extrapolate the boundary cubic segment.
    Exact on linear data (all second derivatives are zero).
    """
    x = np.asarray(knots_x, dtype=np.float64)
    y = np.asarray(knots_y, dtype=np.float64)
    n = x.size
    if n < 2:
        raise TooShort("spline needs at least 2 knots")
    if np.any(np.diff(x) <= 0):
        raise ValueError("knots must be strictly increasing")
    h = np.diff(x)
    m = np.zeros(n)  # second derivatives; natural BCs pin both ends at 0
    if n > 2:
        # tridiagonal system over interior knots, Thomas algorithm
        diag = 2.0 * (h[:-1] + h[1:])
        lower = h[:-1].copy()
        upper = h[1:].copy()
        rhs = 6.0 * ((y[2:] - y[1:-1]) / h[1:] - (y[1:-1] - y[:-2]) / h[:-1])
        k = n - 2
        for i in range(1, k):
            w = lower[i] / diag[i - 1]
            diag[i] -= w * upper[i - 1]
            rhs[i] -= w * rhs[i - 1]
        sol = np.zeros(k)
        sol[-1] = rhs[-1] / diag[-1]
        for i in range(k - 2, -1, -1):
            sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i]
        m[1:-1] = sol

    def evaluate(q):
        q = np.asarray(q, dtype=np.float64)
        seg = np.clip(np.searchsorted(x, q, side="right") - 1, 0, n - 2)
        x0, x1 = x[seg], x[seg + 1]
        hs = x1 - x0
        a = (x1 - q) / hs
        b = (q - x0) / hs
        return (
            a * y[seg]
            + b * y[seg + 1]
            + ((a ** 3 - a) * m[seg] + (b ** 3 - b) * m[seg + 1]) * hs ** 2 / 6.0
        )

    return evaluate


def spline_upsample(x, r: int):
    """Expand a signal by integer factor r with a natural cubic spline.

    Input samples sit on the grid 0, r, 2r, ...; the output is the spline
    evaluated at 0..r*len(x)-1, so the final r-1 samples extrapolate the
    last cubic segment. Accepts (T,) or (T, k) arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    if r < 1 or int(r) != r:
        raise InvalidRate("ratio must be a positive integer")
    r = int(r)
    if x.shape[0] < 4:
        raise TooShort(f"need at least 4 samples, got {x.shape[0]}")
    if r == 1:
        return x.copy()
    t = x.shape[0]
    grid = np.arange(t) * r
    query = np.arange(t * r)
    if x.ndim == 1:
        return natural_cubic_spline(grid, x)(query)
    return np.stack(
        [natural_cubic_spline(grid, x[:, c])(query) for c in range(x.shape[1])],
        axis=1,
    )


# --- IIR filter design --------------------------------------------------------


@dataclass
class IirFilter:
    """Digital IIR filter as transfer-function coefficients, a[0] == 1."""

    b: np.ndarray
    a: np.ndarray
    order: int = 0
    ripple_db: float = 0.0
    cutoff: float = 0.0  # fraction of Nyquist

    def poles(self):
        return np.roots(self.a)

    def is_stable(self):
        return bool(np.all(np.abs(self.poles()) < 1.0))


def cheby1_design(order: int = 8, ripple_db: float = 0.05,
                  cutoff: float = 0.5) -> IirFilter:
    """Chebyshev type-I low-pass via the bilinear transform.

    ``cutoff`` is the passband edge as a fraction of Nyquist. The analog
    prototype places poles on an ellipse from eps = sqrt(10^(r/10) - 1);
    the cutoff is pre-warped before the bilinear map.
    """
    if not 0.0 < cutoff < 1.0:
        raise InvalidCutoff(f"cutoff must be in (0, 1), got {cutoff}")
    if ripple_db <= 0.0:
        raise InvalidRipple(f"ripple must be positive, got {ripple_db}")
    if order < 1:
        raise ValueError("order must be >= 1")

    eps = math.sqrt(10.0 ** (0.1 * ripple_db) - 1.0)
    mu = math.asinh(1.0 / eps) / order
    k = np.arange(1, order + 1)
    theta = math.pi * (2.0 * k - 1.0) / (2.0 * order)
    poles = -math.sinh(mu) * np.sin(theta) + 1j * math.cosh(mu) * np.cos(theta)
    gain = np.prod(-poles).real
    if order % 2 == 0:
        gain /= math.sqrt(1.0 + eps * eps)

    # pre-warped low-pass transform, then bilinear at fs = 2
    fs = 2.0
    warped = 2.0 * fs * math.tan(math.pi * cutoff / fs)
    poles = poles * warped
    gain *= warped ** order

    fs2 = 2.0 * fs
    z_poles = (fs2 + poles) / (fs2 - poles)
    gain = gain / np.prod(fs2 - poles).real

    b = gain * np.poly(-np.ones(order))
    a = np.poly(z_poles).real
    return IirFilter(b=np.real(b), a=a, order=order, ripple_db=ripple_db,
                     cutoff=cutoff)


def iir_apply(filt: IirFilter, x):
    """Run the filter over the first axis, direct-form transposed II,
    zero initial state. Accepts (T,) or (T, k)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return np.stack([iir_apply(filt, x[:, c]) for c in range(x.shape[1])], axis=1)
    b = np.asarray(filt.b, dtype=np.float64)
    a = np.asarray(filt.a, dtype=np.float64)
    b = b / a[0]
    a = a / a[0]
    m = max(b.size, a.size)
    b = np.pad(b, (0, m - b.size))
    a = np.pad(a, (0, m - a.size))
    z = np.zeros(m - 1)
    y = np.empty_like(x)
    for i, xn in enumerate(x):
        yn = b[0] * xn + z[0]
        z[:-1] = z[1:] + b[1:-1] * xn - a[1:-1] * yn
        z[-1] = b[-1] * xn - a[-1] * yn
        y[i] = yn
    return y


def degrade(x, r: int):
    """Low-pass then keep every r-th sample; identity for r == 1."""
    x = np.asarray(x, dtype=np.float64)
    if r < 1 or int(r) != r:
        raise InvalidRate("ratio must be a positive integer")
    r = int(r)
    if r == 1:
        return x.copy()
    filt = cheby1_design(order=8, ripple_db=0.05, cutoff=0.8 / r)
    return iir_apply(filt, x)[::r]


# --- spectra and metrics ------------------------------------------------------


@dataclass
class Spectrogram:
    """One-sided STFT: frames x (frame_length/2 + 1) complex bins."""

    values: np.ndarray
    frame_length: int
    hop: int
    window: str = "hann"

    @property
    def num_frames(self):
        return self.values.shape[0]


def _window(name, n):
    if name == "hann":
        # periodic Hann, the spectral-analysis convention
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    if name == "rect":
        return np.ones(n)
    raise ValueError(f"unknown window {name!r}")


def stft(x, frame_length: int = 8192, hop: int | None = None,
         window: str = "hann") -> Spectrogram:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("stft expects a single-channel signal")
    if hop is None:
        hop = frame_length // 2
    if x.size < frame_length:
        raise SignalTooShort(
            f"signal length {x.size} shorter than frame {frame_length}"
        )
    w = _window(window, frame_length)
    n_frames = (x.size - frame_length) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_length)[::hop]
    frames = frames[:n_frames]
    return Spectrogram(np.fft.rfft(frames * w, axis=1), frame_length, hop, window)


def snr(approx, reference) -> float:
    """Signal-to-noise ratio 10*log10(|y|^2 / |x-y|^2) in dB.

    Returns +inf when approx equals reference exactly.
    """
    x = np.asarray(approx, dtype=np.float64).ravel()
    y = np.asarray(reference, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    ref_energy = float(np.sum(y * y))
    if ref_energy == 0.0:
        raise ZeroReference("reference signal is identically zero")
    err_energy = float(np.sum((x - y) ** 2))
    if err_energy == 0.0:
        return math.inf
    return 10.0 * math.log10(ref_energy / err_energy)


def lsd(approx, reference, frame_length: int = 8192, hop: int | None = None,
        window: str = "hann") -> float:
    """Log-spectral distance: RMS over bins of the natural-log power
    spectra difference, averaged over frames."""
    sx = stft(np.asarray(approx, dtype=np.float64).ravel(),
              frame_length, hop, window)
    sy = stft(np.asarray(reference, dtype=np.float64).ravel(),
              frame_length, hop, window)
    lx = np.log(np.abs(sx.values) ** 2 + EPS_SPEC)
    ly = np.log(np.abs(sy.values) ** 2 + EPS_SPEC)
    per_frame = np.sqrt(np.mean((lx - ly) ** 2, axis=1))
    return float(np.mean(per_frame))
