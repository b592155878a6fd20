"""Ablation of the BSS variants (one or two axes, constrained or random points)."""
import argparse
import time
from dataclasses import replace
from pathlib import Path

from bss_attack import harness
from bss_attack.config import load_config

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=ROOT / "configs" / "default.ini")
    parser.add_argument("--seeds", type=int, nargs="+", default=[42])
    parser.add_argument("--n", type=int, default=10)
    parser.add_argument("--out", type=Path, default=ROOT / "results" / "ablation")
    args = parser.parse_args()
    cfg = load_config(args.config)
    for seed in args.seeds:
        ws = harness.prepare(replace(cfg, seed=seed))
        start = time.perf_counter()
        table = harness.run_ablation(ws, args.n)
        print(f"seed {seed} ({time.perf_counter() - start:.0f} s)\n{table.format()}", flush=True)
        for c in table.cells:
            print(f"  {c.method:<10} black-box mean {c.black_box_mean(table.targets):.1f}")
        harness.write_results(table, ws, args.out / f"seed{seed}", timing=True)
