"""Train the surrogate and the two target networks into checkpoints/."""
import argparse
from pathlib import Path

from bss_attack.config import load_config
from bss_attack.harness import train_models

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=ROOT / "configs" / "default.ini")
    parser.add_argument("--out", type=Path, default=ROOT / "checkpoints")
    args = parser.parse_args()
    record = train_models(load_config(args.config), args.out,
                          progress=lambda name, r: print(f"{name}: heldout {r['heldout_accuracy']:.4f}", flush=True))
    print(f"wrote {len(record['models'])} checkpoints to {args.out}")
