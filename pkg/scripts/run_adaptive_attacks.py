#!/usr/bin/env python3
"""Sweep the adaptive attack knobs (beta skip, gamma dilution, delayed
onset) against the three-tier defense and print one summary row per run.

Usage: python3 scripts/run_adaptive_attacks.py [--seeds 1 2 3]
"""

import argparse
import dataclasses
from pathlib import Path

from stdlens.config import load_config, validate_config
from stdlens.metrics import run_experiment

ROOT = Path(__file__).resolve().parent.parent

VARIANTS = [
    ("baseline", {}),
    ("beta=0.10", {"beta": 0.10}),
    ("gamma=0.6", {"gamma": 0.6}),
    ("onset=50", {"onset_round": 50}),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs/class_poison.yaml"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    args = ap.parse_args()

    base = load_config(args.config)
    print(f"{'variant':<12} {'seed':>4} {'recall':>7} {'precision':>10} "
          f"{'purge':>6} {'fp':>3}")
    for name, overrides in VARIANTS:
        for seed in args.seeds:
            cfg = validate_config(dataclasses.replace(
                base,
                federation=dataclasses.replace(base.federation, master_seed=seed),
                attack=dataclasses.replace(base.attack, **overrides)))
            _, _, score = run_experiment(cfg, eval_every=10)
            prec = ("n/a" if score.precision_at_max_recall is None
                    else f"{score.precision_at_max_recall:.3f}")
            purge = "never" if score.time_to_purge is None else score.time_to_purge
            print(f"{name:<12} {seed:>4} {score.max_recall:>7.3f} {prec:>10} "
                  f"{purge:>6} {score.false_positives:>3}")


if __name__ == "__main__":
    main()
