"""Unified number-scale sweep: every method at N in {1, 5, 10, 20} on the same samples."""
import argparse
from dataclasses import replace
from pathlib import Path

from bss_attack import harness
from bss_attack.config import load_config

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=ROOT / "configs" / "default.ini")
    parser.add_argument("--seeds", type=int, nargs="+", default=[42])
    parser.add_argument("--samples", type=int)
    parser.add_argument("--out", type=Path, default=ROOT / "results" / "sweep")
    args = parser.parse_args()
    cfg = load_config(args.config).with_overrides(samples=args.samples)
    for seed in args.seeds:
        ws = harness.prepare(replace(cfg, seed=seed))
        table = harness.run_sweep(ws)
        print(f"seed {seed}\n{table.format()}\n", flush=True)
        harness.write_results(table, ws, args.out / f"seed{seed}", timing=True)
