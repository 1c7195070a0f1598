"""1D neural-network building blocks: convolution, pooling, LSTM,
subpixel shuffle, relu and dropout.

Inputs are batched (N, T, C) tensors throughout. Convolution uses the
cross-correlation convention (no kernel flip). Same-padding pads
(k_eff - 1) // 2 samples on the left and the remainder on the right,
with k_eff = (k - 1) * dilation + 1, which keeps output lengths at
ceil(T / stride).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    ChannelMismatch,
    ChannelsNotDivisible,
    InvalidRate,
    KernelLargerThanInput,
    ShapeMismatch,
    WindowLargerThanInput,
)
from .tensor import Tensor, concat

__all__ = [
    "Conv1dParams",
    "LstmParams",
    "conv1d",
    "maxpool1d",
    "lstm_step",
    "lstm_scan",
    "subpixel_shuffle",
    "relu",
    "dropout",
    "init_conv_params",
    "init_lstm_params",
]


# --- convolution --------------------------------------------------------------


@dataclass
class Conv1dParams:
    """Weights and geometry of one 1D convolution.

    weight has shape (out_channels, in_channels, kernel_len);
    bias has shape (out_channels,).
    """

    weight: Tensor
    bias: Tensor
    stride: int = 1
    dilation: int = 1
    padding: str = "same"  # "same" | "valid"

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def kernel_len(self):
        return self.weight.shape[2]

    @property
    def effective_kernel(self):
        return (self.kernel_len - 1) * self.dilation + 1


def init_conv_params(out_channels, in_channels, kernel_len, rng,
                     stride=1, dilation=1, padding="same", zero=False):
    """Uniform init scaled by 1/sqrt(fan-in); ``zero=True`` for identity-at-init
    output stages."""
    if zero:
        w = np.zeros((out_channels, in_channels, kernel_len))
    else:
        bound = 1.0 / math.sqrt(in_channels * kernel_len)
        w = rng.uniform(-bound, bound, size=(out_channels, in_channels, kernel_len))
    return Conv1dParams(
        weight=Tensor(w, requires_grad=True),
        bias=Tensor(np.zeros(out_channels), requires_grad=True),
        stride=stride,
        dilation=dilation,
        padding=padding,
    )


def conv1d(x: Tensor, p: Conv1dParams) -> Tensor:
    """Batched 1D cross-correlation with stride/dilation and same|valid padding."""
    if x.ndim != 3:
        raise ShapeMismatch("conv1d", x.shape, ("N", "T", "C"))
    n, t, c = x.shape
    if c != p.in_channels:
        raise ChannelMismatch(
            f"conv1d: input has {c} channels, params expect {p.in_channels}"
        )
    k = p.kernel_len
    k_eff = p.effective_kernel
    stride = p.stride
    if p.padding == "valid":
        if k_eff > t:
            raise KernelLargerThanInput(
                f"effective kernel {k_eff} exceeds input length {t}"
            )
        pad_l = pad_r = 0
        t_out = (t - k_eff) // stride + 1
    elif p.padding == "same":
        t_out = -(-t // stride)
        total = max(0, (t_out - 1) * stride + k_eff - t)
        pad_l = min((k_eff - 1) // 2, total)
        pad_r = total - pad_l
    else:
        raise ValueError(f"unknown padding mode {p.padding!r}")

    xpad = np.pad(x.data, ((0, 0), (pad_l, pad_r), (0, 0)))
    idx = (np.arange(t_out) * stride)[:, None] + np.arange(k) * p.dilation
    cols = xpad[:, idx, :]                               # (N, T', k, C)
    cols2 = cols.reshape(n * t_out, k * c)
    wmat = p.weight.data.transpose(2, 1, 0).reshape(k * c, p.out_channels)
    out = (cols2 @ wmat + p.bias.data).reshape(n, t_out, p.out_channels)

    w, b = p.weight, p.bias
    tp = xpad.shape[1]
    dilation = p.dilation

    def backward(g, x=x, w=w, b=b):
        g2 = g.reshape(n * t_out, p.out_channels)
        if b.requires_grad:
            b.accumulate_grad(g2.sum(axis=0))
        if w.requires_grad:
            dw = (cols2.T @ g2).reshape(k, c, p.out_channels).transpose(2, 1, 0)
            w.accumulate_grad(dw)
        if x.requires_grad:
            dcols = (g2 @ wmat.T).reshape(n, t_out, k, c)
            dxpad = np.zeros((n, tp, c))
            span = (t_out - 1) * stride + 1
            for j in range(k):
                dxpad[:, j * dilation: j * dilation + span: stride, :] += dcols[:, :, j, :]
            x.accumulate_grad(dxpad[:, pad_l: tp - pad_r or None, :])

    return Tensor._from_op(out, (x, w, b), backward)


# --- pooling ------------------------------------------------------------------


def maxpool1d(x: Tensor, extent: int, stride: int) -> Tensor:
    """Window maxima over the time axis; output length floor((T-f)/s)+1.

    Ties route the gradient to the earliest index in the window.
    """
    if x.ndim != 3:
        raise ShapeMismatch("maxpool1d", x.shape, ("N", "T", "C"))
    if extent < 1 or stride < 1:
        raise ValueError("extent and stride must be >= 1")
    n, t, c = x.shape
    if extent > t:
        raise WindowLargerThanInput(f"window {extent} exceeds input length {t}")
    t_out = (t - extent) // stride + 1
    idx = (np.arange(t_out) * stride)[:, None] + np.arange(extent)
    windows = x.data[:, idx, :]                          # (N, T', f, C)
    arg = windows.argmax(axis=2)
    out = windows.max(axis=2)

    def backward(g, x=x, arg=arg):
        dx = np.zeros_like(x.data)
        ni, ti, ci = np.indices(arg.shape)
        np.add.at(dx, (ni, ti * stride + arg, ci), g)
        x.accumulate_grad(dx)

    return Tensor._from_op(out, (x,), backward)


# --- LSTM ---------------------------------------------------------------------


@dataclass
class LstmParams:
    """Single-direction LSTM cell weights (gate order: input, forget, output, cell).

    ``reverse`` holds the weights of the backward scan when bidirectional.
    """

    input_size: int
    hidden_size: int
    w_i: Tensor
    w_f: Tensor
    w_o: Tensor
    w_g: Tensor
    u_i: Tensor
    u_f: Tensor
    u_o: Tensor
    u_g: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_g: Tensor
    bidirectional: bool = False
    reverse: Optional["LstmParams"] = None

    def cell_tensors(self):
        return [self.w_i, self.w_f, self.w_o, self.w_g,
                self.u_i, self.u_f, self.u_o, self.u_g,
                self.b_i, self.b_f, self.b_o, self.b_g]

    def tensors(self):
        out = self.cell_tensors()
        if self.reverse is not None:
            out += self.reverse.cell_tensors()
        return out


def _init_lstm_cell(input_size, hidden_size, rng):
    bound = 1.0 / math.sqrt(hidden_size)

    def mat(rows, cols):
        return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)

    def vec():
        return Tensor(rng.uniform(-bound, bound, size=hidden_size), requires_grad=True)

    p = LstmParams(
        input_size=input_size,
        hidden_size=hidden_size,
        w_i=mat(hidden_size, input_size), w_f=mat(hidden_size, input_size),
        w_o=mat(hidden_size, input_size), w_g=mat(hidden_size, input_size),
        u_i=mat(hidden_size, hidden_size), u_f=mat(hidden_size, hidden_size),
        u_o=mat(hidden_size, hidden_size), u_g=mat(hidden_size, hidden_size),
        b_i=vec(), b_f=vec(), b_o=vec(), b_g=vec(),
    )
    # forget-gate bias offset stabilizes early training
    p.b_f.data = p.b_f.data + 1.0
    return p


def init_lstm_params(input_size, hidden_size, rng, bidirectional=False):
    p = _init_lstm_cell(input_size, hidden_size, rng)
    p.bidirectional = bidirectional
    if bidirectional:
        p.reverse = _init_lstm_cell(input_size, hidden_size, rng)
    return p


def _gate(x, h, w_t, u_t, b):
    n = x.shape[0]
    pre = x @ w_t + h @ u_t
    return pre + b.reshape(1, -1).broadcast_to((n, b.shape[0]))


def _transposed_weights(p: LstmParams):
    """Transpose the eight gate matrices once; reusing the nodes across
    scan steps accumulates their gradients exactly as per-step transposes
    would, without re-copying the weights every step."""
    return tuple(
        getattr(p, name).transpose((1, 0))
        for name in ("w_i", "u_i", "w_f", "u_f", "w_o", "u_o", "w_g", "u_g")
    )


def lstm_step(x_t: Tensor, h: Tensor, c: Tensor, p: LstmParams,
              weights_t=None):
    """One LSTM cell step on a batch: x_t (N, D), h and c (N, H).

    Returns (out, h', c') with out == h'.
    """
    if x_t.ndim != 2 or x_t.shape[1] != p.input_size:
        raise ShapeMismatch("lstm_step", x_t.shape, ("N", p.input_size))
    if h.shape != (x_t.shape[0], p.hidden_size):
        raise ShapeMismatch("lstm_step", h.shape, (x_t.shape[0], p.hidden_size))
    if weights_t is None:
        weights_t = _transposed_weights(p)
    w_i, u_i, w_f, u_f, w_o, u_o, w_g, u_g = weights_t
    i = _gate(x_t, h, w_i, u_i, p.b_i).sigmoid()
    f = _gate(x_t, h, w_f, u_f, p.b_f).sigmoid()
    o = _gate(x_t, h, w_o, u_o, p.b_o).sigmoid()
    g = _gate(x_t, h, w_g, u_g, p.b_g).tanh()
    c_new = f * c + i * g
    h_new = o * c_new.tanh()
    return h_new, h_new, c_new


def _scan_one_direction(xs: Tensor, p: LstmParams, reverse: bool):
    n, steps, _ = xs.shape
    h = Tensor.zeros((n, p.hidden_size))
    c = Tensor.zeros((n, p.hidden_size))
    weights_t = _transposed_weights(p)
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    outs = [None] * steps
    for s in order:
        out, h, c = lstm_step(xs[:, s, :], h, c, p, weights_t)
        outs[s] = out.reshape(n, 1, p.hidden_size)
    return concat(outs, axis=1)


def lstm_scan(xs: Tensor, p: LstmParams) -> Tensor:
    """Run the LSTM over axis 1 of (N, S, D), starting from zero state.

    Returns (N, S, H), or (N, S, 2H) with forward/backward outputs
    concatenated when ``p.bidirectional``.
    """
    fwd = _scan_one_direction(xs, p, reverse=False)
    if not p.bidirectional:
        return fwd
    bwd = _scan_one_direction(xs, p.reverse, reverse=True)
    return concat([fwd, bwd], axis=2)


# --- rearrangement and pointwise ops -------------------------------------------


def subpixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Trade channel depth for time: (N, T, C) -> (N, r*T, C/r).

    out[n, t*r + p, c] == x[n, t, c*r + p]; a bijective rearrangement.
    """
    if x.ndim != 3:
        raise ShapeMismatch("subpixel_shuffle", x.shape, ("N", "T", "C"))
    n, t, c = x.shape
    if r < 1 or c % r != 0:
        raise ChannelsNotDivisible(f"{c} channels not divisible by factor {r}")
    if r == 1:
        return x
    return x.reshape(n, t, c // r, r).transpose((0, 1, 3, 2)).reshape(n, t * r, c // r)


def relu(x: Tensor) -> Tensor:
    return x.relu()


def dropout(x: Tensor, rate: float, rng=None, mode: str = "train") -> Tensor:
    """Inverted dropout: kept elements scaled by 1/(1-rate). Identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise InvalidRate(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs a seeded generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(mask)
