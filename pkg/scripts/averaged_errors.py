"""Averaged attitude error (after 2 s) for every preset and observer.

Usage: python3 scripts/averaged_errors.py [--seed S] [--observers agas gas cf]
"""

import argparse

from hybrid_attitude.config import PRESETS, preset
from hybrid_attitude.harness import averaged_error, run_scenario


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--observers", nargs="+", default=["agas", "gas", "cf"])
    args = parser.parse_args()

    print("preset  " + "".join(f"{name:>10}" for name in args.observers))
    for name in PRESETS:
        cells = []
        for observer in args.observers:
            record = run_scenario(preset(name, observer=observer, seed=args.seed), audit=False)
            cells.append(f"{averaged_error(record):10.4f}")
        print(f"{name:<8}" + "".join(cells), flush=True)


if __name__ == "__main__":
    main()
