"""Command-line entry point: ``mfh <command> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io as mio
from .errors import MfhError
from .extractor import ExtractorConfig
from .fab import FabVariant
from .freq_transform import COEFF, MODES, SPATIAL, DctPlan, dct2, dct2_naive_blocks, patchify, preprocess
from .model import ModelConfig, ModelParams, stream_features
from .pgm import read_pgm, write_pgm


def _shared(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model / preprocessing")
    g.add_argument("--patch-size", type=int, default=8, help="DCT block size n")
    g.add_argument("--retain", type=int, default=5, help="high-frequency retention m")
    g.add_argument("--channels", type=int, default=256)
    g.add_argument("--mlp-layers", type=int, default=6)
    g.add_argument("--dropout", type=float, default=0.3)
    g.add_argument("--pe-scale", type=float, default=1.0)
    g.add_argument("--reduction", type=int, default=16, help="channel attention squeeze ratio")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--invert", action="store_true", help="map v to 1-v after reading (white-background scans)")
    g.add_argument("--freq-mode", choices=MODES, default=COEFF)
    g.add_argument("--no-channel-att", action="store_true")
    g.add_argument("--no-pos-enc", action="store_true")
    g.add_argument("--no-fab", action="store_true")
    g.add_argument("--fab-variant", default="concat+learnable", help="attention+vectors, e.g. add+unit")
    g.add_argument("--no-figure", action="store_true", help="skip the PNG rendered next to the output")


def build_config(args) -> ModelConfig:
    """Validate every flag; raises before any output is touched."""
    ext = ExtractorConfig(
        channels=args.channels,
        patch_size=args.patch_size,
        num_blocks=args.mlp_layers,
        reduction=args.reduction,
        dropout=args.dropout,
        pe_scale=args.pe_scale,
    )
    return ModelConfig(
        extractor=ext,
        retain=args.retain,
        freq_mode=args.freq_mode,
        channel_att=not args.no_channel_att,
        pos_enc=not args.no_pos_enc,
        fab=not args.no_fab,
        fab_variant=FabVariant.parse(args.fab_variant),
    )


def _figure_path(out) -> Path:
    return Path(out).with_suffix(".png")


def _plotting():
    from . import plotting  # matplotlib import is deferred to commands that draw

    return plotting


def cmd_preprocess(args, cfg):
    img = read_pgm(args.input, args.invert)
    fi = preprocess(img, cfg.extractor.patch_size, cfg.retain, cfg.freq_mode)
    mio.save_tensor(args.output, fi.data)
    print(f"{args.output}: {'x'.join(map(str, fi.data.shape))} {fi.mode} n={fi.n} m={fi.m}")


def cmd_viz(args, cfg):
    img = read_pgm(args.input, args.invert)
    fi = preprocess(img, cfg.extractor.patch_size, cfg.retain, SPATIAL)
    write_pgm(fi.data, args.output)
    if not args.no_figure:
        _plotting().plot_preprocess(
            img, {f"retained m={cfg.retain}": fi.data}, _figure_path(args.output), f"n={fi.n}"
        )
    print(args.output)


def _pgm_files(directory):
    files = sorted(Path(directory).glob("*.pgm"))
    if not files:
        raise MfhError(f"no .pgm files in {directory}")
    return files


def cmd_sweep(args, cfg):
    from .ablation import SWEEP_FIELDS, retention_sweep, write_rows_csv

    images = [read_pgm(f, args.invert) for f in _pgm_files(args.input_dir)]
    rows = retention_sweep(images, cfg, steps=args.steps, seed=args.seed)
    write_rows_csv(rows, SWEEP_FIELDS, args.output)
    if not args.no_figure:
        _plotting().plot_sweep(rows, _figure_path(args.output))
    print(args.output)


def cmd_init_weights(args, cfg):
    mio.save_weights(args.output, ModelParams.init(cfg, args.seed).named())
    print(args.output)


def cmd_forward(args, cfg):
    tensors = mio.load_weights(args.weights)
    params = ModelParams.from_named(cfg, tensors)
    img = read_pgm(args.input, args.invert)
    feats = stream_features(params, img)
    mio.save_tensor(args.output, feats[args.what])
    print(f"{args.output}: {args.what} {'x'.join(map(str, feats[args.what].shape))}")


def cmd_gradcheck(args, cfg):
    from .autograd import BLOCKS, reports_to_json
    from .gradcheck import check_block

    blocks = args.blocks or list(BLOCKS)
    reports = []
    for b in blocks:
        for s in range(args.seed, args.seed + args.seeds):
            reports.append(
                check_block(
                    b, s, channels=cfg.extractor.channels, patch_size=cfg.extractor.patch_size, size=args.size,
                    eps=args.eps, threshold=args.threshold, variant=cfg.fab_variant,
                )
            )
    text = reports_to_json(reports)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    failed = [f"{r.block}/seed{r.seed}" for r in reports if not r.passed]
    worst = max(r.max_rel_error for r in reports)
    print(f"{len(reports) - len(failed)}/{len(reports)} passed, worst relative error {worst:.3e}", file=sys.stderr)
    return 1 if failed else 0


def cmd_train_toy(args, cfg):
    from .training import train_toy, write_trace_csv

    trace = train_toy(dataset_seed=args.seed, steps=args.steps, lr=args.lr, init_seed=args.seed, config=cfg)
    write_trace_csv(trace, args.output)
    if not args.no_figure:
        _plotting().plot_trace(trace, _figure_path(args.output))
    print(f"{args.output}: loss {trace[0]:.6f} -> {trace[-1]:.6f} over {len(trace)} steps")


def bench(size: int = 512, n: int = 8, repeats: int = 3, seed: int = 0) -> dict:
    """Time naive vs separable DCT over every block of a ``size x size`` image.

    Agreement is checked first; timings are the best of ``repeats``.
    """
    img = np.random.default_rng(seed).random((1, size, size))
    blocks = patchify(img, n)
    plan = DctPlan.create(n)
    err = float(np.max(np.abs(dct2_naive_blocks(blocks) - dct2(blocks, plan))))
    if err > 1e-9:
        raise MfhError(f"naive and separable DCT disagree by {err:.3e}; refusing to time")

    def best(fn):
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return min(times)

    t_naive = best(lambda: dct2_naive_blocks(blocks))
    t_sep = best(lambda: dct2(blocks, plan))
    p = blocks.shape[0]
    return {
        "size": size,
        "n": n,
        "patches": p,
        "max_abs_diff": err,
        "naive_s": t_naive,
        "separable_s": t_sep,
        "naive_patches_per_s": p / t_naive,
        "separable_patches_per_s": p / t_sep,
        "speedup": t_naive / t_sep,
        "mult_ratio": n**4 / (2 * n**3),
    }


def cmd_bench(args, cfg):
    r = bench(args.size, cfg.extractor.patch_size, args.repeats, args.seed)
    lines = [
        f"image {r['size']}x{r['size']}, n={r['n']}, {r['patches']} patches, max |diff| {r['max_abs_diff']:.2e}",
        f"{'path':<10} {'seconds':>10} {'patches/s':>14}",
        f"{'naive':<10} {r['naive_s']:>10.5f} {r['naive_patches_per_s']:>14.0f}",
        f"{'separable':<10} {r['separable_s']:>10.5f} {r['separable_patches_per_s']:>14.0f}",
        f"speedup {r['speedup']:.2f}x (multiply ratio {r['mult_ratio']:.0f}:1)",
    ]
    print("\n".join(lines))
    if args.output:
        Path(args.output).write_text(json.dumps(r, indent=2) + "\n")


def cmd_ablate(args, cfg):
    from .ablation import ABLATION_FIELDS, run_ablation, write_rows_csv

    rows = run_ablation(cfg, steps=args.steps, seed=args.seed, count=args.count)
    write_rows_csv(rows, ABLATION_FIELDS, args.output)
    if not args.no_figure:
        _plotting().plot_ablation(rows, _figure_path(args.output))
    print(args.output)


# the toy-scale commands default to a desk-size model
_TOY = dict(channels=16, mlp_layers=2, reduction=4)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfh", description="Frequency-domain feature pipeline for handwritten math images.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        _shared(sp)
        sp.set_defaults(func=fn)
        return sp

    sp = add("preprocess", cmd_preprocess, "blockwise DCT + high-frequency retention, dumped as MFHT")
    sp.add_argument("input")
    sp.add_argument("output")

    sp = add("viz", cmd_viz, "spatial reconstruction of the retained frequencies as PGM")
    sp.add_argument("input")
    sp.add_argument("output")

    sp = add("sweep", cmd_sweep, "retained energy and toy loss for m = 1..n, as CSV")
    sp.add_argument("input_dir")
    sp.add_argument("output")
    sp.add_argument("--steps", type=int, default=20, help="toy training steps per m (0 skips training)")
    sp.set_defaults(**_TOY)

    sp = add("init-weights", cmd_init_weights, "write seeded initial weights as MFHW")
    sp.add_argument("output")

    sp = add("forward", cmd_forward, "dump K, T or fused features as MFHT")
    sp.add_argument("input")
    sp.add_argument("weights")
    sp.add_argument("output")
    sp.add_argument("--what", choices=("k", "t", "fused"), default="fused")

    sp = add("gradcheck", cmd_gradcheck, "finite-difference gradient report as JSON")
    sp.add_argument("--output", "-o")
    sp.add_argument("--blocks", nargs="*")
    sp.add_argument("--seeds", type=int, default=5)
    sp.add_argument("--size", type=int, default=16)
    sp.add_argument("--eps", type=float, default=1e-6)
    sp.add_argument("--threshold", type=float, default=1e-4)
    sp.set_defaults(channels=8, patch_size=4, retain=3, reduction=4)

    sp = add("train-toy", cmd_train_toy, "seeded toy training, loss trace as CSV")
    sp.add_argument("output")
    sp.add_argument("--steps", type=int, default=300)
    sp.add_argument("--lr", type=float, default=0.3)
    sp.set_defaults(**_TOY)

    sp = add("bench", cmd_bench, "naive vs separable DCT timing")
    sp.add_argument("--size", type=int, default=512)
    sp.add_argument("--repeats", type=int, default=3)
    sp.add_argument("--output", "-o", help="also write the numbers as JSON")

    sp = add("ablate", cmd_ablate, "retention, patch size, component and FAB-variant grids as CSV")
    sp.add_argument("output")
    sp.add_argument("--steps", type=int, default=20)
    sp.add_argument("--count", type=int, default=16, help="toy images per run")
    sp.set_defaults(**_TOY)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return args.func(args, cfg) or 0
    except (MfhError, ValueError, OSError) as exc:
        print(f"mfh {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
