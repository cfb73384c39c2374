"""``posrgan`` command line: degrade, train, infer, eval, params, selfcheck.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 numerical failure (a NaN or Inf stopped the run).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, ContractError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("posrgan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _cmd_degrade(args) -> int:
    from .imaging import degrade, load_image, save_image
    from .patches import write_manifest

    src, dst = Path(args.input), Path(args.out)
    if not src.is_dir():
        raise UsageError(f"input directory {src} does not exist")
    files = sorted(p for p in src.iterdir() if p.suffix.lower() == ".png")
    if not files:
        log.warning("no PNG files in %s", src)
    dst.mkdir(parents=True, exist_ok=True)
    written, failed = [], []
    for p in files:
        try:
            lr = degrade(load_image(p), args.scale, antialias=args.antialias)
            save_image(lr, dst / p.name)
            written.append(p.name)
        except OSError as exc:
            failed.append(f"{p}: {exc}")
    write_manifest(written, dst / "manifest.txt", header=f"degraded x{args.scale} from {src}")
    for line in failed:
        print(f"error: {line}", file=sys.stderr)
    print(f"degraded {len(written)} image(s) into {dst}")
    return EXIT_IO if failed else EXIT_OK


_TRAIN_FLAGS = {
    "iterations": int, "batch_size": int, "lr_initial": float, "seed": int, "num_blocks": int, "channels": int,
    "scale": int, "manifest": str, "output_dir": str, "stage1_checkpoint": str, "synthetic_patches": int,
    "patch_size": int, "checkpoint_every": int, "log_every": int, "lam": float, "eta_pixel": float,
    "eta_feature": float, "disc_channels": int,
}


def _cmd_train(args) -> int:
    from .trainer import load_config, make_trainer

    if args.stage == 1 and args.region is not None:
        raise UsageError("--region selects stage-2 loss weights and cannot be combined with --stage 1")
    overrides = {k: getattr(args, k) for k in _TRAIN_FLAGS}
    overrides["stage"] = args.stage
    overrides["region"] = args.region
    config = load_config(args.config, overrides)
    if config.stage == 2 and not config.stage1_checkpoint:
        raise UsageError("--stage 2 requires a stage-1 checkpoint (--stage1-checkpoint or stage1_checkpoint in the config)")
    if config.stage == 2 and not Path(config.stage1_checkpoint).is_file():
        raise UsageError(f"stage-1 checkpoint {config.stage1_checkpoint} not found")
    trainer = make_trainer(config, resume=args.resume)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    print(f"stage={config.stage} weights lam={config.lam:g} eta_pixel={config.eta_pixel:g} "
          f"eta_feature={config.eta_feature:g} iterations={config.iterations} data={len(trainer.data)} patches",
          flush=True)
    logfile = (out / "train.log").open("a", encoding="utf-8")

    def emit(line: str) -> None:
        print(line, flush=True)
        logfile.write(line + "\n")

    try:
        ckpt = trainer.run(emit=emit)
    finally:
        logfile.close()
    from .checkpoint import save_checkpoint

    final = save_checkpoint(ckpt, out / f"stage{config.stage}_final.ckpt")
    print(f"wrote {final}")
    return EXIT_OK


def _cmd_infer(args) -> int:
    from .imaging import load_image, save_image
    from .trainer import infer

    sr = infer(args.ckpt, load_image(args.input), tile=args.tile, overlap=args.overlap)
    save_image(sr, args.out)
    print(f"wrote {args.out} ({sr.width}x{sr.height})")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .trainer import evaluate

    if args.ckpt is None and args.sr_dir is None:
        raise UsageError("eval needs --ckpt or --sr-dir")
    for p in (args.ckpt, args.manifest):
        if p is not None and not Path(p).is_file():
            print(f"error: {p} not found", file=sys.stderr)
            return EXIT_IO
    rows = evaluate(args.ckpt, args.manifest, args.out, border=args.border, y_only=args.y_only, sr_dir=args.sr_dir,
                    scale=args.scale)
    for r in rows:
        print(f"{r.image}: psnr={r.report_psnr():.3f} ssim={r.ssim:.4f} rmse={r.rmse:.3f} region={r.region}")
    print(f"wrote {args.out} ({len(rows)} rows)")
    return EXIT_OK


def _cmd_params(args) -> int:
    from .generator import GeneratorSpec

    spec = GeneratorSpec.variant(args.blocks, args.channels, share=not args.no_share,
                                 attention=not args.no_attention, scale=args.scale)
    n = spec.num_parameters()
    print(f"blocks={args.blocks} channels={args.channels} shared={not args.no_share} "
          f"attention={not args.no_attention} parameters={n} ({n / 1e6:.2f}M)")
    return EXIT_OK


def _cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck

    return EXIT_OK if run_selfcheck(print) else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="posrgan", description="Super-resolution training and evaluation kit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    d = sub.add_parser("degrade", help="bicubic-downscale a directory of PNGs")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--scale", type=int, default=4)
    d.add_argument("--antialias", action=argparse.BooleanOptionalAction, default=True)
    d.set_defaults(func=_cmd_degrade)

    t = sub.add_parser("train", help="run stage-1 or stage-2 training")
    t.add_argument("--config")
    t.add_argument("--stage", type=int, choices=(1, 2), required=True)
    t.add_argument("--region", type=int, choices=(1, 2, 3))
    t.add_argument("--resume")
    for name, kind in _TRAIN_FLAGS.items():
        t.add_argument("--" + name.replace("_", "-"), dest=name, type=kind)
    t.set_defaults(func=_cmd_train)

    i = sub.add_parser("infer", help="upscale one image with a trained generator")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--in", dest="input", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--tile", type=int, default=128)
    i.add_argument("--overlap", type=int, default=8)
    i.set_defaults(func=_cmd_infer)

    e = sub.add_parser("eval", help="score a manifest of HR images and write a CSV report")
    e.add_argument("--ckpt")
    e.add_argument("--manifest", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--border", type=int, default=4)
    e.add_argument("--y-only", action=argparse.BooleanOptionalAction, default=True)
    e.add_argument("--sr-dir", help="score existing images from this directory instead of running a generator")
    e.add_argument("--scale", type=int, default=4)
    e.set_defaults(func=_cmd_eval)

    c = sub.add_parser("params", help="count generator parameters")
    c.add_argument("--blocks", type=int, default=128)
    c.add_argument("--channels", type=int, default=64)
    c.add_argument("--scale", type=int, default=4)
    c.add_argument("--no-share", action="store_true")
    c.add_argument("--no-attention", action="store_true")
    c.set_defaults(func=_cmd_params)

    s = sub.add_parser("selfcheck", help="gradient, metric and kernel self-tests")
    s.set_defaults(func=_cmd_selfcheck)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
