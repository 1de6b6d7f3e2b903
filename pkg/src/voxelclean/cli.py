"""Command-line interface: ``voxelclean <command> [flags]``.

Volumes ending in ``.nii`` are NIfTI-1; any other path is read as headerless
little-endian float32 and needs ``--dims X,Y,Z``.
"""
from __future__ import annotations

import argparse
import contextlib
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cnn import ArchConfig, TrainConfig, TrainingError, WeightFileError, load_weights, save_weights, train
from .io import NiftiError, read_volume, write_volume
from .metrics import MetricConfig, foreground, psnr, rmse, ssim
from .noisegen import (NoiseField, PhantomSpec, add_gaussian, add_rician, make_modulation_field,
                       make_phantom, sigma_for_level)
from .pbcnn import PatchSampler
from .pipeline import denoise
from .rinlm import RinlmConfig
from .volume import Volume

METRICS = {"psnr", "ssim", "rmse"}
VOLUME_SUFFIXES = (".nii", ".raw", ".bin", ".img")


class CliError(Exception):
    """A user-facing failure, reported as one line and a nonzero exit."""


# --- flag parsing helpers -----------------------------------------------------

def _range(text: str) -> tuple[float, float]:
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or A:B, got {text!r}") from None
    if len(values) == 1:
        values *= 2
    if len(values) != 2 or not all(np.isfinite(values)) or values[0] > values[1]:
        raise argparse.ArgumentTypeError(f"expected A:B with A <= B, got {text!r}")
    return values[0], values[1]


def _dims(text: str) -> tuple[int, int, int]:
    try:
        dims = tuple(int(p) for p in text.replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y,Z, got {text!r}") from None
    if len(dims) == 1:
        dims *= 3
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive sizes, got {text!r}")
    return dims


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _metric_list(text: str) -> list[str]:
    names = [n.strip().lower() for n in text.split(",") if n.strip()]
    unknown = sorted(set(names) - METRICS)
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"unknown metric(s) {unknown}; choose from {sorted(METRICS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxelclean", description="Two-stage CNN + guided NLM MRI denoiser.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="cap on BLAS worker threads (default: $VOXELCLEAN_THREADS or library default)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("phantom", help="write a synthetic clean volume")
    p.add_argument("--size", type=_dims, default=(64, 64, 64), help="N or X,Y,Z (default 64)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("add-noise", help="corrupt a volume with Gaussian or Rician noise")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=("gaussian", "rician"), default="gaussian")
    p.add_argument("--level", type=_range, required=True, help="percent of peak, P or A:B (drawn by seed)")
    p.add_argument("--spatial", type=_range, default=(1.0, 1.0), help="modulation LO:HI (default 1:1)")
    p.add_argument("--profile", choices=("ramp", "radial"), default="ramp")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--peak", type=float, default=255.0)
    p.add_argument("--sigma-out", help="write the ground-truth sigma field")
    p.add_argument("--dims", type=_dims)

    p = sub.add_parser("train", help="train the patch CNN on clean volumes")
    p.add_argument("--data", required=True, help="directory of clean .nii or raw volumes")
    p.add_argument("--out", required=True, help="weight file to write")
    p.add_argument("--epochs", type=_positive_int, default=300)
    p.add_argument("--batch", type=_positive_int, default=128)
    p.add_argument("--loss", choices=("mse", "mae", "mix"), default="mix")
    p.add_argument("--norm", choices=("instance", "batch"), default="instance")
    p.add_argument("--patience", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--filters", type=_positive_int, default=64)
    p.add_argument("--blocks", type=int, default=7)
    p.add_argument("--level", type=_range, default=(1.0, 9.0), help="training noise range A:B percent")
    p.add_argument("--patches-per-epoch", type=_positive_int, default=1024)
    p.add_argument("--val-patches", type=_positive_int, default=256)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--log", help="loss log path (default: OUT with .loss.csv)")
    p.add_argument("--dims", type=_dims, help="dims of raw training volumes")

    p = sub.add_parser("denoise", help="denoise a volume with a trained model")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("pbcnn", "pri-pbcnn"), default="pri-pbcnn")
    p.add_argument("--offset", type=int, choices=(3, 6, 12), default=3)
    p.add_argument("--rician", action="store_true")
    p.add_argument("--residual-out")
    p.add_argument("--sigma-out")
    p.add_argument("--clamp-nonneg", action="store_true")
    p.add_argument("--search-radius", type=_positive_int, default=RinlmConfig.search_radius)
    p.add_argument("--h-scale", type=float, default=RinlmConfig.h_scale)
    p.add_argument("--dims", type=_dims)
    p.add_argument("--guide", help=argparse.SUPPRESS)

    p = sub.add_parser("estimate-noise", help="print the global noise level")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--rician", action="store_true")
    p.add_argument("--mask-threshold", type=float, default=None,
                   help="only voxels of the input above T (default: whole volume)")
    p.add_argument("--offset", type=int, choices=(3, 6, 12), default=3)
    p.add_argument("--sigma-out")
    p.add_argument("--dims", type=_dims)

    p = sub.add_parser("evaluate", help="compare a test volume against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--mask-threshold", type=float, default=10.0)
    p.add_argument("--peak", type=float, default=255.0)
    p.add_argument("--metrics", type=_metric_list, default=["psnr", "ssim", "rmse"])
    p.add_argument("--dims", type=_dims)
    return parser


# --- file helpers -------------------------------------------------------------

def _read(path: str, dims) -> Volume:
    if not Path(path).is_file():
        raise CliError(f"input file not found: {path}")
    return read_volume(path, dims)


def _write(vol: Volume, data: np.ndarray, path: str) -> None:
    write_volume(vol.with_data(np.asarray(data, dtype=np.float32)), path)


def _load_model(path: str):
    if not Path(path).is_file():
        raise CliError(f"model file not found: {path}")
    return load_weights(path)


def _check_out_dir(*paths):
    for path in paths:
        if path is not None:
            parent = Path(path).resolve().parent
            if not parent.is_dir():
                raise CliError(f"output directory does not exist: {parent}")


# --- commands -----------------------------------------------------------------

def cmd_phantom(args) -> None:
    _check_out_dir(args.out)
    if min(args.size) < 16:
        raise CliError(f"phantom size must be at least 16 per axis, got {args.size}")
    _write(Volume(np.zeros(args.size, np.float32)), make_phantom(PhantomSpec(dims=args.size, seed=args.seed)),
           args.out)


def cmd_add_noise(args) -> None:
    lo, hi = args.spatial
    if args.level[0] < 0 or lo <= 0:
        raise CliError("noise level must be >= 0 and spatial modulation > 0")
    _check_out_dir(args.out, args.sigma_out)
    vol = _read(args.inp, args.dims)
    rng = np.random.default_rng(args.seed)
    level = args.level[0] if args.level[0] == args.level[1] else rng.uniform(*args.level)
    sigma = sigma_for_level(level, args.peak) * make_modulation_field(vol.dims, lo, hi, args.profile)
    field = NoiseField(sigma, args.model)
    data = np.asarray(vol.data, dtype=np.float64)
    noisy = add_gaussian(data, field, args.seed) if args.model == "gaussian" else add_rician(data, field, args.seed)
    _write(vol, noisy, args.out)
    if args.sigma_out:
        _write(vol, sigma, args.sigma_out)


def _volume_files(directory: str) -> list[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise CliError(f"training data directory not found: {directory}")
    files = sorted(p for p in root.iterdir() if p.is_file() and p.suffix in VOLUME_SUFFIXES)
    if not files:
        raise CliError(f"no volumes ({', '.join(VOLUME_SUFFIXES)}) in {directory}")
    return files


def cmd_train(args) -> None:
    if not 0.0 <= args.val_fraction < 1.0:
        raise CliError(f"--val-fraction must be in [0, 1), got {args.val_fraction}")
    if args.lr <= 0 or args.blocks < 0 or args.level[0] < 0:
        raise CliError("--lr must be positive, --blocks and --level non-negative")
    log = args.log or str(Path(args.out).with_suffix(".loss.csv"))
    _check_out_dir(args.out, log)
    volumes = [np.asarray(read_volume(str(p), args.dims).data, dtype=np.float64)
               for p in _volume_files(args.data)]

    # deterministic volume-level split; a lone volume serves both roles
    order = np.random.default_rng(args.seed).permutation(len(volumes))
    n_val = int(round(args.val_fraction * len(volumes)))
    n_val = min(max(n_val, 1 if args.val_fraction > 0 else 0), len(volumes) - 1)
    val_vols = [volumes[i] for i in order[:n_val]] or volumes
    train_vols = [volumes[i] for i in order[n_val:]]

    sampler = PatchSampler(train_vols, args.patches_per_epoch, args.level)
    val_sampler = PatchSampler(val_vols, args.val_patches, args.level)
    validation = val_sampler(0, np.random.default_rng(args.seed + 1))
    arch = ArchConfig(filters=args.filters, blocks=args.blocks, norm=args.norm)
    cfg = TrainConfig(batch_size=args.batch, max_epochs=args.epochs, lr=args.lr, loss=args.loss,
                      patience=args.patience, seed=args.seed)

    def report(epoch, tr, va):
        print(f"epoch={epoch} train_loss={tr:.6g} val_loss={va:.6g}", flush=True)

    result = train(sampler, validation, cfg, arch, callback=report)
    save_weights(result.weights, args.out)
    result.write_log(log)
    print(f"best_epoch={result.best_epoch}")


def _rinlm_config(args) -> RinlmConfig:
    return RinlmConfig(search_radius=args.search_radius, h_scale=args.h_scale)


def cmd_denoise(args) -> None:
    if args.h_scale <= 0:
        raise CliError(f"--h-scale must be positive, got {args.h_scale}")
    _check_out_dir(args.out, args.residual_out, args.sigma_out)
    vol = _read(args.inp, args.dims)
    guide = None
    weights = None
    if args.guide:
        guide = _read(args.guide, args.dims).data
        if guide.shape != vol.data.shape:
            raise CliError(f"dimension mismatch: guide {guide.shape} vs input {vol.data.shape}")
    else:
        weights = _load_model(args.model)
    result = denoise(vol.data, weights, args.method, args.offset, args.rician, _rinlm_config(args), guide=guide)
    out = result.denoised
    if args.clamp_nonneg:
        out = np.maximum(out, 0.0)
    _write(vol, out, args.out)
    if args.residual_out:
        _write(vol, result.residual, args.residual_out)
    if args.sigma_out:
        _write(vol, result.sigma_map, args.sigma_out)


def cmd_estimate_noise(args) -> None:
    _check_out_dir(args.sigma_out)
    vol = _read(args.inp, args.dims)
    weights = _load_model(args.model)
    mask = None
    if args.mask_threshold is not None:
        mask = np.asarray(vol.data) > args.mask_threshold
        if not mask.any():
            raise CliError(f"no voxel above mask threshold {args.mask_threshold}")
    result = denoise(vol.data, weights, "pbcnn", args.offset, args.rician, mask=mask)
    print(f"sigma={result.global_sigma:.6g}")
    if args.sigma_out:
        _write(vol, result.sigma_map, args.sigma_out)


def cmd_evaluate(args) -> None:
    if args.peak <= 0:
        raise CliError(f"--peak must be positive, got {args.peak}")
    ref = _read(args.ref, args.dims).data
    test = _read(args.test, args.dims).data
    if ref.shape != test.shape:
        raise CliError(f"dimension mismatch: ref {ref.shape} vs test {test.shape}")
    mask = foreground(ref, args.mask_threshold)
    if not mask.any():
        raise CliError(f"no reference voxel above mask threshold {args.mask_threshold}")
    cfg = MetricConfig(peak=args.peak, mask=mask)
    funcs = {"psnr": lambda: psnr(ref, test, cfg), "ssim": lambda: ssim(ref, test, cfg),
             "rmse": lambda: rmse(ref, test, mask)}
    for name in args.metrics:
        print(f"{name}={funcs[name]():.6f}")


COMMANDS = {
    "phantom": cmd_phantom,
    "add-noise": cmd_add_noise,
    "train": cmd_train,
    "denoise": cmd_denoise,
    "estimate-noise": cmd_estimate_noise,
    "evaluate": cmd_evaluate,
}


def _thread_limit(requested):
    if requested is None:
        env = os.environ.get("VOXELCLEAN_THREADS")
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise CliError(f"VOXELCLEAN_THREADS must be an integer, got {env!r}") from None
            if requested < 1:
                raise CliError(f"VOXELCLEAN_THREADS must be >= 1, got {requested}")
    if requested is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=requested)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _thread_limit(args.threads):
            COMMANDS[args.command](args)
    except CliError as exc:
        print(f"voxelclean {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except WeightFileError as exc:
        print(f"voxelclean {args.command}: model error: {exc}", file=sys.stderr)
        return 1
    except NiftiError as exc:
        print(f"voxelclean {args.command}: NIfTI error: {exc}", file=sys.stderr)
        return 1
    except TrainingError as exc:
        print(f"voxelclean {args.command}: training failed: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"voxelclean {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
