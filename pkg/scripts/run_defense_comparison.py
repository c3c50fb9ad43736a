#!/usr/bin/env python3
"""Run every defense on the identical seeded class-poison stream and
write comparison.csv / comparison.txt plus a console summary.

Usage: python3 scripts/run_defense_comparison.py [--out runs/comparison]
                                                 [--seeds 1 2 3 ...]
"""

import argparse
from pathlib import Path

from stdlens.config import load_config
from stdlens.metrics import compare_defenses, comparison_table, comparison_to_csv

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs/class_poison.yaml"))
    ap.add_argument("--out", default="runs/comparison")
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(1, 6)))
    ap.add_argument("--defenses", nargs="+",
                    default=["stdlens", "spatial", "spectral", "none"])
    args = ap.parse_args()

    cfg = load_config(args.config)
    rows = compare_defenses(cfg, args.defenses, args.seeds, eval_every=10)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(comparison_to_csv(rows))
    table = comparison_table(rows)
    (out / "comparison.txt").write_text(table + "\n")
    print(table)
    print(f"\nwrote {out / 'comparison.csv'}")


if __name__ == "__main__":
    main()
