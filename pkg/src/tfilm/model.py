"""The time-series super-resolution network.

K downsampling blocks (stride-2 dilated conv -> relu -> TFiLM), a
bottleneck (stride-2 conv -> dropout -> relu -> TFiLM), K upsampling
blocks (conv -> dropout -> relu -> subpixel x2 -> stacked skip
connection), and a final stage (zero-initialized conv -> subpixel x2 ->
additive residual). With the final conv at zero and the residual on, a
freshly built model is exactly the identity on channel 0 of its input.

Filter counts and kernel lengths follow the downsampling/upsampling
formulas min(2^(6+k), 512) / max(2^(7-k)+1, 9) and their upsampling
counterparts, optionally capped by ``max_filters`` for desk-scale runs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .errors import (
    BadMagic,
    ConfigInvariantViolation,
    LengthInvariantViolation,
    ShapeMismatch,
    TruncatedFile,
)
from .layers import (
    Conv1dParams,
    conv1d,
    dropout,
    init_conv_params,
    subpixel_shuffle,
)
from .modulation import TfilmLayerParams, init_tfilm_params, tfilm_forward
from .tensor import Tensor, concat

__all__ = [
    "ModelConfig",
    "Model",
    "build_model",
    "count_params",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"TFLM"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    """Architecture hyper-parameters; defaults match the K=4 audio setup."""

    depth: int = 4                # number of down/up blocks (K)
    input_channels: int = 1
    patch_length: int = 8192
    tfilm_blocks: int = 32        # number of blocks per TFiLM layer (T_l / B_l)
    dropout_rate: float = 0.5     # bottleneck dropout
    down_dropout: float = 0.0
    up_dropout: float = 0.0
    dilation: int = 2
    max_filters: int = 512
    use_tfilm: bool = True
    use_skip_stacking: bool = True
    use_residual: bool = True
    bidirectional: bool = False
    pool_extent: int = 2
    pool_stride: int = 2

    # -- architecture formulas -------------------------------------------------

    def down_filters(self, d):
        return min(2 ** (6 + d), self.max_filters)

    def down_kernel(self, d):
        return max(2 ** (7 - d) + 1, 9)

    def up_filters(self, u):
        return min(2 ** (7 + (self.depth - u + 1)), self.max_filters)

    def up_kernel(self, u):
        return max(2 ** (7 - (self.depth - u + 1)) + 1, 9)

    def bottleneck_filters(self):
        return min(512, self.max_filters)

    def tfilm_block_len(self, time_dim):
        return time_dim // self.tfilm_blocks

    def time_dims(self):
        """Time extent entering each TFiLM site: after down blocks 1..K,
        then after the bottleneck conv."""
        return [self.patch_length // 2 ** d for d in range(1, self.depth + 2)]

    def validate(self):
        if self.depth < 0:
            raise ConfigInvariantViolation("depth must be >= 0")
        div = 2 ** (self.depth + 1)
        if self.patch_length % div != 0:
            raise ConfigInvariantViolation(
                f"patch_length {self.patch_length} not divisible by 2^(K+1) = {div}"
            )
        for t in self.time_dims():
            if t % self.tfilm_blocks != 0 or t // self.tfilm_blocks < 1:
                raise ConfigInvariantViolation(
                    f"TFiLM block length {t}/{self.tfilm_blocks} is not a "
                    "positive integer"
                )
        for u in range(1, self.depth + 1):
            if self.up_filters(u) % 2 != 0:
                raise ConfigInvariantViolation(
                    f"upsampling block {u} has odd filter count "
                    f"{self.up_filters(u)}; subpixel(2) needs an even count"
                )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigInvariantViolation("dropout_rate must be in [0, 1)")

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(d):
        return ModelConfig(**d)


@dataclass
class _Stage:
    name: str
    conv: Conv1dParams
    tfilm: TfilmLayerParams | None = None
    dropout_rate: float = 0.0
    dropout_id: int = 0


class Model:
    """Built network: ordered stages plus the skip/residual wiring."""

    def __init__(self, cfg, down, bottleneck, up, final, seed):
        self.cfg = cfg
        self.down = down            # list[_Stage]
        self.bottleneck = bottleneck
        self.up = up                # list[_Stage]
        self.final = final
        self.seed = seed

    # -- parameters -------------------------------------------------------------

    def named_params(self):
        out = []

        def add_conv(prefix, p):
            out.append((f"{prefix}.weight", p.weight))
            out.append((f"{prefix}.bias", p.bias))

        def add_tfilm(prefix, p):
            names = ["w_i", "w_f", "w_o", "w_g", "u_i", "u_f", "u_o", "u_g",
                     "b_i", "b_f", "b_o", "b_g"]
            for nm in names:
                out.append((f"{prefix}.lstm.{nm}", getattr(p.lstm, nm)))
            if p.lstm.reverse is not None:
                for nm in names:
                    out.append((f"{prefix}.lstm.rev.{nm}", getattr(p.lstm.reverse, nm)))
            out.append((f"{prefix}.proj_w", p.proj_w))
            out.append((f"{prefix}.proj_b", p.proj_b))

        for stage in self.down + [self.bottleneck] + self.up + [self.final]:
            add_conv(f"{stage.name}.conv", stage.conv)
            if stage.tfilm is not None:
                add_tfilm(f"{stage.name}.tfilm", stage.tfilm)
        return out

    def params(self):
        return [p for _, p in self.named_params()]

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()

    # -- forward ----------------------------------------------------------------

    def _check_length(self, t):
        cfg = self.cfg
        if t % 2 ** (cfg.depth + 1) != 0:
            raise LengthInvariantViolation(
                f"input length {t} not divisible by 2^(K+1)"
            )
        if cfg.use_tfilm:
            for stage, t_d in zip(
                self.down + [self.bottleneck],
                (t // 2 ** d for d in range(1, cfg.depth + 2)),
            ):
                b = stage.tfilm.block_len if stage.tfilm else 1
                if t_d % b != 0:
                    raise LengthInvariantViolation(
                        f"length {t}: internal extent {t_d} not divisible by "
                        f"TFiLM block length {b} at {stage.name}"
                    )

    def _dropout(self, x, stage, mode, dropout_seed, step):
        if stage.dropout_rate <= 0.0:
            return x
        rng = np.random.default_rng((dropout_seed, stage.dropout_id, step))
        return dropout(x, stage.dropout_rate, rng=rng, mode=mode)

    def forward(self, x: Tensor, mode="eval", dropout_seed=0, step=0) -> Tensor:
        """Map (N, T, k) inputs to (N, T, 1) outputs."""
        if x.ndim != 3:
            raise ShapeMismatch("forward", x.shape, ("N", "T", "k"))
        n, t, c = x.shape
        if c != self.cfg.input_channels:
            raise ShapeMismatch("forward", x.shape, ("N", t, self.cfg.input_channels))
        self._check_length(t)

        skips = []
        h = x
        for stage in self.down:
            h = conv1d(h, stage.conv)
            h = self._dropout(h, stage, mode, dropout_seed, step)
            h = h.relu()
            if stage.tfilm is not None:
                h = tfilm_forward(h, stage.tfilm)
            skips.append(h)

        stage = self.bottleneck
        h = conv1d(h, stage.conv)
        h = self._dropout(h, stage, mode, dropout_seed, step)
        h = h.relu()
        if stage.tfilm is not None:
            h = tfilm_forward(h, stage.tfilm)

        for u, stage in enumerate(self.up, start=1):
            h = conv1d(h, stage.conv)
            h = self._dropout(h, stage, mode, dropout_seed, step)
            h = h.relu()
            h = subpixel_shuffle(h, 2)
            if self.cfg.use_skip_stacking:
                h = concat([h, skips[self.cfg.depth - u]], axis=2)

        h = conv1d(h, self.final.conv)
        h = subpixel_shuffle(h, 2)
        if self.cfg.use_residual:
            h = h + x[:, :, 0:1]
        return h


def build_model(cfg: ModelConfig, seed: int = 0) -> Model:
    """Deterministically construct and initialize the network."""
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    dropout_id = 0

    def next_id():
        nonlocal dropout_id
        dropout_id += 1
        return dropout_id

    time_dims = cfg.time_dims()
    channels = cfg.input_channels
    down = []
    skip_channels = []
    for d in range(1, cfg.depth + 1):
        conv = init_conv_params(
            cfg.down_filters(d), channels, cfg.down_kernel(d), rng,
            stride=2, dilation=cfg.dilation, padding="same",
        )
        channels = cfg.down_filters(d)
        tf = None
        if cfg.use_tfilm:
            tf = init_tfilm_params(
                channels, cfg.tfilm_block_len(time_dims[d - 1]), rng,
                bidirectional=cfg.bidirectional,
                pool_extent=cfg.pool_extent, pool_stride=cfg.pool_stride,
            )
        down.append(_Stage(f"down{d}", conv, tf, cfg.down_dropout, next_id()))
        skip_channels.append(channels)

    conv = init_conv_params(cfg.bottleneck_filters(), channels, 9, rng,
                            stride=2, padding="same")
    channels = cfg.bottleneck_filters()
    tf = None
    if cfg.use_tfilm:
        tf = init_tfilm_params(
            channels, cfg.tfilm_block_len(time_dims[cfg.depth]), rng,
            bidirectional=cfg.bidirectional,
            pool_extent=cfg.pool_extent, pool_stride=cfg.pool_stride,
        )
    bottleneck = _Stage("bottleneck", conv, tf, cfg.dropout_rate, next_id())

    up = []
    for u in range(1, cfg.depth + 1):
        conv = init_conv_params(cfg.up_filters(u), channels, cfg.up_kernel(u), rng,
                                stride=1, padding="same")
        channels = cfg.up_filters(u) // 2
        if cfg.use_skip_stacking:
            channels += skip_channels[cfg.depth - u]
        up.append(_Stage(f"up{u}", conv, None, cfg.up_dropout, next_id()))

    final_conv = init_conv_params(2, channels, 9, rng, stride=1, padding="same",
                                  zero=True)
    final = _Stage("final", final_conv)
    return Model(cfg, down, bottleneck, up, final, seed)


def count_params(model: Model) -> int:
    return sum(p.size for p in model.params())


# --- checkpoint serialization ---------------------------------------------------


def _canonical_config_json(cfg: ModelConfig) -> bytes:
    return json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")).encode()


def save_checkpoint(path, model: Model):
    """Binary checkpoint: magic, version, config JSON, then named float32
    parameter records."""
    named = model.named_params()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        cfg_json = _canonical_config_json(model.cfg)
        fh.write(struct.pack("<I", len(cfg_json)))
        fh.write(cfg_json)
        fh.write(struct.pack("<I", len(named)))
        for name, p in named:
            nm = name.encode()
            fh.write(struct.pack("<H", len(nm)))
            fh.write(nm)
            fh.write(struct.pack("<B", p.ndim))
            for extent in p.shape:
                fh.write(struct.pack("<I", extent))
            fh.write(np.asarray(p.data, dtype="<f4").tobytes())


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"expected {n} bytes, got {len(buf)}")
    return buf


def load_checkpoint(path) -> Model:
    """Rebuild the model from a checkpoint; verifies magic, version and
    that stored parameter names/shapes agree with the stored config."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != CHECKPOINT_MAGIC:
            raise BadMagic("not a TFLM checkpoint")
        (version,) = struct.unpack("<H", _read_exact(fh, 2))
        if version != CHECKPOINT_VERSION:
            raise BadMagic(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4))
        cfg = ModelConfig.from_dict(json.loads(_read_exact(fh, cfg_len).decode()))
        model = build_model(cfg, seed=0)
        expected = dict(model.named_params())
        (n_params,) = struct.unpack("<I", _read_exact(fh, 4))
        if n_params != len(expected):
            raise ShapeMismatch("checkpoint", (n_params,), (len(expected),))
        seen = set()
        for _ in range(n_params):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode()
            if name not in expected:
                raise BadMagic(f"unknown parameter {name!r} in checkpoint")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = tuple(
                struct.unpack("<I", _read_exact(fh, 4))[0] for _ in range(rank)
            )
            p = expected[name]
            if shape != p.shape:
                raise ShapeMismatch(f"checkpoint param {name}", shape, p.shape)
            count = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, 4 * count)
            p.data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
            seen.add(name)
        if seen != set(expected):
            raise TruncatedFile("checkpoint missing parameters")
    return model
