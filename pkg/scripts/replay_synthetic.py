"""Write a synthetic tag log, replay it through each observer and report the RMSE.

Usage: python3 scripts/replay_synthetic.py [--pixel-noise PX] [--out-dir DIR]
"""

import argparse
from pathlib import Path

from hybrid_attitude.harness import emit_csv
from hybrid_attitude.vision import ReplayConfig, parse_tag_log, replay, synthetic_tag_log, write_tag_log


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--duration", type=float, default=10.0)
    parser.add_argument("--pixel-noise", type=float, default=0.5)
    parser.add_argument("--depth-noise", type=float, default=0.002)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", type=Path, default=Path("replay_out"))
    args = parser.parse_args()

    args.out_dir.mkdir(parents=True, exist_ok=True)
    log, _ = synthetic_tag_log(
        duration=args.duration, pixel_noise=args.pixel_noise, depth_noise=args.depth_noise, seed=args.seed
    )
    path = write_tag_log(log, args.out_dir / "tags.log")
    log = parse_tag_log(path)
    for observer in ("agas", "gas", "cf"):
        record = replay(log, ReplayConfig(observer=observer))
        emit_csv(record, args.out_dir / f"replay_{observer}.csv")
        rmse = record.column("rmse")[1:]
        tail = rmse[len(rmse) // 2:]
        print(f"{observer:>5}: first {rmse[0]:.4f}  mean over second half {tail.mean():.4f}")


if __name__ == "__main__":
    main()
