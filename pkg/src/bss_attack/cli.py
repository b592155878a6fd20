"""Command-line entry point: ``bss-attack <command> --config FILE``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from . import harness
from .bss import TargetLengthMode
from .config import ExperimentConfig, load_config
from .data import load_dataset
from .errors import BssError
from .model import load_checkpoint
from .rng import substream


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI experiment file (defaults built in)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--threads", type=int, help="worker threads for per-sample attacks")
    p.add_argument("--grad-mode", choices=["exact", "image-space"])
    p.add_argument("--target-length-mode", choices=[m.value for m in TargetLengthMode])
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bss-attack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="attack the configured samples with one method")
    _common(p)
    p.add_argument("--method", default="bss")
    p.add_argument("--n", type=int, default=10, help="number scale N")
    p.add_argument("--samples", type=int)
    p.add_argument("--save-images", action="store_true", help="write adversarial PNGs and raw deltas")

    p = sub.add_parser("sweep", help="unified number-scale sweep over methods")
    _common(p)
    p.add_argument("--timing", action="store_true", help="fill wall_ms in results.csv")

    p = sub.add_parser("ablate", help="BSS ablation variants at one number scale")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--timing", action="store_true")

    p = sub.add_parser("train", help="train the surrogate and target networks")
    _common(p)

    p = sub.add_parser("transform-preview", help="write BSS transforms of one image as PNGs")
    _common(p)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--n", type=int, default=8)

    p = sub.add_parser("saliency", help="write input-gradient saliency PNGs")
    _common(p)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, out=args.out, threads=args.threads,
                              grad_mode=args.grad_mode, target_length_mode=args.target_length_mode,
                              samples=getattr(args, "samples", None))


def _report(table, ws, out, timing=False) -> None:
    csv_path, json_path = harness.write_results(table, ws, out, timing)
    print(table.format())
    for w in table.warnings:
        print(f"warning: {w}")
    print(f"budget violations: {table.budget_violations()}")
    print(f"wrote {csv_path} and {json_path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "train":
            out = args.out or Path(cfg.surrogate).parent
            harness.train_models(cfg, out, progress=lambda name, rec: print(
                f"{name}: heldout accuracy {rec['heldout_accuracy']:.4f} ({rec['seconds']} s)"))
            print(f"wrote checkpoints to {out}")
        elif args.command == "sweep":
            ws = harness.prepare(cfg)
            _report(harness.run_sweep(ws), ws, cfg.out, args.timing)
        elif args.command == "ablate":
            ws = harness.prepare(cfg)
            _report(harness.run_ablation(ws, args.n), ws, cfg.out, args.timing)
        elif args.command == "attack":
            ws = harness.prepare(cfg)
            table = harness.run_cells(ws, [(args.method, args.n)])
            _report(table, ws, cfg.out)
            if args.save_images:
                harness.save_adversarials(table.cells[0].adversarial, ws.images, Path(cfg.out) / "images")
        elif args.command == "transform-preview":
            data = load_dataset(cfg.dataset)
            img = data.images[args.index]
            bss = harness.bss_config_for(cfg, min(img.shape[1:]))
            paths = harness.transform_preview(img, bss, args.n, substream(cfg.seed, "preview", args.index), cfg.out)
            print(f"wrote {len(paths)} images to {cfg.out}")
        elif args.command == "saliency":
            data = load_dataset(cfg.dataset)
            model = load_checkpoint(cfg.surrogate)
            out = Path(cfg.out)
            for i in range(args.index, args.index + args.count):
                harness.saliency_dump(model, data.images[i], int(data.labels[i]), out / f"saliency_{i:04d}.png")
            print(f"wrote {args.count} saliency maps to {out}")
    except BssError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
