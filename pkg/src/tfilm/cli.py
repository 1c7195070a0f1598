"""Command line entry point.

Subcommands: synth, degrade, train, eval, upsample, impute, gradcheck.
Every run writes a resolved-config JSON next to its outputs so the exact
invocation can be replayed. Exit codes: 0 success, 1 usage error,
2 data/format error, 3 invariant or check failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import errors
from .checks import MODULES, run_gradchecks
from .data import (
    SignalAsset,
    make_pairs,
    make_patches,
    read_csv_signal,
    read_rawf32,
    read_wav,
    synth_signal,
    write_csv_signal,
    write_rawf32,
    write_wav,
    zero_mask,
)
from .dsp import degrade, spline_upsample
from .model import ModelConfig, build_model, load_checkpoint
from .tensor import Tensor
from .train import TrainConfig, evaluate, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECK = 3

_USAGE_ERRORS = (ValueError, errors.InvalidRate, errors.InvalidSpec,
                 errors.ConfigInvariantViolation)
_DATA_ERRORS = (OSError, json.JSONDecodeError, errors.BadMagic,
                errors.TruncatedFile, errors.UnsupportedWavEncoding,
                errors.EmptyDataset, errors.PatchTooLong, errors.TooShort,
                errors.LengthMismatch, errors.LengthInvariantViolation,
                errors.ShapeMismatch, errors.ChannelMismatch)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _set_threads(n):
    if n is None:
        n = os.environ.get("TFILM_THREADS")
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(int(n))


def _apply_overrides(config, pairs):
    for item in pairs or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        config[key.strip()] = value
    return config


def _emit_resolved(out_path, subcommand, config):
    """Reproducibility record: flags and config as actually used."""
    out = Path(out_path)
    target = out / "resolved_config.json" if out.is_dir() else (
        out.parent / (out.name + ".config.json"))
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(
        {"subcommand": subcommand, "config": config}, indent=2, sort_keys=True))


def _read_signal(path):
    p = Path(path)
    if p.suffix == ".wav":
        return read_wav(p)
    if p.suffix == ".csv":
        return read_csv_signal(p)
    return read_rawf32(p)


def _write_signal(path, asset):
    p = Path(path)
    if p.suffix == ".wav":
        write_wav(p, asset)
    elif p.suffix == ".csv":
        write_csv_signal(p, asset)
    else:
        write_rawf32(p, asset)


def _model_config(config):
    fields = {k.split(".", 1)[1]: v for k, v in config.items()
              if k.startswith("model.")}
    return ModelConfig.from_dict(fields) if fields else ModelConfig()


def _load_model(ckpt):
    return load_checkpoint(ckpt)


# --- subcommand bodies ----------------------------------------------------------


def _cmd_synth(args):
    spec = json.loads(Path(args.spec).read_text())
    asset = synth_signal(spec, seed=args.seed)
    _write_signal(args.out, asset)
    _emit_resolved(args.out, "synth", {"spec": spec, "seed": args.seed,
                                       "out": str(args.out)})
    return EXIT_OK


def _cmd_degrade(args):
    asset = _read_signal(getattr(args, "in"))
    low = degrade(asset.samples, args.r)
    out = low
    if args.upscale:
        out = spline_upsample(low, args.r)
    rate = asset.rate // args.r if not args.upscale and asset.rate else asset.rate
    _write_signal(args.out, SignalAsset(out, rate, {
        "source": str(getattr(args, "in")), "r": args.r, "upscale": args.upscale,
    }))
    _emit_resolved(args.out, "degrade", {
        "in": str(getattr(args, "in")), "r": args.r,
        "upscale": args.upscale, "out": str(args.out)})
    return EXIT_OK


def _load_dir_pairs(data_dir, r, patch_length, stride, seed):
    files = sorted(p for p in Path(data_dir).iterdir()
                   if p.suffix in (".raw", ".wav", ".csv"))
    if not files:
        raise errors.EmptyDataset(f"no signal files in {data_dir}")
    all_pairs = []
    datasets = []
    for f in files:
        asset = _read_signal(f)
        pair = make_pairs(asset, r)
        all_pairs.append(pair)
        datasets.append(make_patches(pair, patch_length, stride))
    from .data import PatchDataset
    merged = PatchDataset(
        [p for d in datasets for p in d.pairs], patch_length,
        stride or patch_length // 2,
        [o for d in datasets for o in d.offsets], seed)
    return all_pairs, merged


def _cmd_train(args):
    config = json.loads(Path(args.config).read_text()) if args.config else {}
    _apply_overrides(config, args.set)
    if args.seed is not None:
        config["train.seed"] = args.seed
    seed = int(config.get("train.seed", 0))
    r = int(config.get("data.r", 2))
    patch_length = int(config.get("data.patch_length", 8192))
    stride = config.get("data.stride")
    stride = int(stride) if stride is not None else None

    model_cfg = _model_config(config)
    if model_cfg.patch_length != patch_length:
        model_cfg = ModelConfig.from_dict(
            {**model_cfg.to_dict(), "patch_length": patch_length})
    model = build_model(model_cfg, seed=seed)

    _, dataset = _load_dir_pairs(args.data, r, patch_length, stride, seed)
    train_cfg = TrainConfig(
        epochs=int(config.get("train.epochs", 50)),
        lr=float(config.get("train.lr", 3e-4)),
        batch_size=int(config.get("train.batch_size", 16)),
        seed=seed,
        val_fraction=float(config.get("train.val_fraction", 0.1)),
        out_dir=args.out,
    )
    config.setdefault("data.r", r)
    config.setdefault("data.patch_length", patch_length)
    config.setdefault("train.seed", seed)
    for k, v in model_cfg.to_dict().items():
        config.setdefault(f"model.{k}", v)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    _emit_resolved(args.out, "train", config)
    run = train(model, dataset, train_cfg)
    if args.verbose:
        for e, (tl, vl) in enumerate(zip(run.epoch_losses, run.val_losses)):
            print(f"epoch {e:3d}  train {tl:.6e}  val {vl:.6e}")
    print(f"trained {run.steps} steps, best val loss {run.best_val_loss:.6e}")
    return EXIT_OK


def _cmd_eval(args):
    model = _load_model(args.ckpt)
    r = args.r
    pairs, _ = _load_dir_pairs(args.data, r, model.cfg.patch_length, None, 0)
    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    eval_pairs = [(x.samples, y.samples) for x, y in pairs]
    report = evaluate(model, eval_pairs, metrics=metrics)
    report.to_csv(args.out)
    _emit_resolved(args.out, "eval", {
        "ckpt": str(args.ckpt), "data": str(args.data), "r": r,
        "metrics": list(metrics), "out": str(args.out)})
    print(report.format_table())
    return EXIT_OK


def _cmd_upsample(args):
    model = _load_model(args.ckpt)
    asset = _read_signal(getattr(args, "in"))
    expanded = spline_upsample(asset.samples, args.r)
    usable = (expanded.shape[0] // model.cfg.patch_length) * model.cfg.patch_length
    if usable == 0:
        raise errors.TooShort(
            f"input expands to {expanded.shape[0]} samples, "
            f"shorter than one patch ({model.cfg.patch_length})")
    out = np.empty((usable, 1))
    for start in range(0, usable, model.cfg.patch_length):
        chunk = expanded[start:start + model.cfg.patch_length]
        out[start:start + model.cfg.patch_length] = model.forward(
            Tensor(chunk[None]), mode="eval").data[0]
    rate = asset.rate * args.r if asset.rate else 0
    _write_signal(args.out, SignalAsset(out, rate, {
        "source": str(getattr(args, "in")), "r": args.r, "ckpt": str(args.ckpt)}))
    _emit_resolved(args.out, "upsample", {
        "ckpt": str(args.ckpt), "in": str(getattr(args, "in")),
        "r": args.r, "out": str(args.out)})
    return EXIT_OK


def _cmd_impute(args):
    model = _load_model(args.ckpt)
    asset = _read_signal(getattr(args, "in"))
    x = asset.samples[:, 0]
    masked, mask = zero_mask(x, args.rate, seed=args.seed)
    from .experiments import _impute_input
    inp = _impute_input(masked, mask)
    if model.cfg.input_channels == 1:
        inp = inp[:, 0:1]  # spline-filled series only, no mask channel
    usable = (inp.shape[0] // model.cfg.patch_length) * model.cfg.patch_length
    if usable == 0:
        raise errors.TooShort("input shorter than one model patch")
    out = masked.copy()
    for start in range(0, usable, model.cfg.patch_length):
        chunk = inp[start:start + model.cfg.patch_length]
        pred = model.forward(Tensor(chunk[None]), mode="eval").data[0, :, 0]
        out[start:start + model.cfg.patch_length] = pred
    out[~mask] = x[~mask]  # observed samples pass through untouched
    _write_signal(args.out, SignalAsset(out, asset.rate, {
        "source": str(getattr(args, "in")), "rate": args.rate,
        "seed": args.seed, "ckpt": str(args.ckpt)}))
    _emit_resolved(args.out, "impute", {
        "ckpt": str(args.ckpt), "in": str(getattr(args, "in")),
        "rate": args.rate, "seed": args.seed, "out": str(args.out)})
    return EXIT_OK


def _cmd_gradcheck(args):
    passed, results = run_gradchecks(args.module)
    for name, report in results:
        status = "PASS" if report.passed else "FAIL"
        print(f"{name:<24} {status}  max rel err {report.max_rel_error:.3e}")
        if args.verbose:
            for p in report.params:
                note = f" ({p.excluded} excluded)" if p.excluded else ""
                print(f"    {p.name}: {p.max_rel_error:.3e}{note}")
    return EXIT_OK if passed else EXIT_CHECK


# --- parser ---------------------------------------------------------------------


def _build_parser():
    parser = _Parser(prog="tfilm", description=__doc__)
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS worker threads (env TFILM_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic signal")
    p.add_argument("--spec", required=True, help="generator spec JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("degrade", help="low-pass and decimate a signal")
    p.add_argument("--in", required=True)
    p.add_argument("-r", type=int, required=True, help="decimation ratio")
    p.add_argument("--upscale", action="store_true",
                   help="spline re-expansion back to the original length")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("train", help="train a model on a directory of signals")
    p.add_argument("--config", help="JSON config with flat dotted keys")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against targets")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("-r", type=int, default=2)
    p.add_argument("--metrics", default="snr,lsd")
    p.add_argument("--out", required=True, help="report CSV path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("upsample", help="super-resolve a signal with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", required=True)
    p.add_argument("-r", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_upsample)

    p = sub.add_parser("impute", help="fill randomly zeroed samples")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--module", default="all", choices=MODULES + ("all",))
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_OK
    _set_threads(args.threads)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except errors.TfilmError as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
