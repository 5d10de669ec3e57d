"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 observer contract violation,
3 I/O error (including unreadable or malformed logs).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .config import OBSERVERS, PRESETS, ConfigError, format_params, load_config, preset
from .harness import averaged_error, design_for, emit_csv, run_scenario
from .observers import ContractViolation
from .sensing import VectorObservationSet
from .vision import ReplayConfig, TagLogError, parse_tag_log, replay, synthetic_tag_log, write_tag_log

EXIT_OK, EXIT_CONFIG, EXIT_CONTRACT, EXIT_IO = 0, 1, 2, 3


def _scenario(args):
    cfg = load_config(args.config) if args.config else preset(args.preset)
    overrides = {}
    if getattr(args, "observer", None):
        overrides["observer"] = args.observer
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        overrides["duration"] = args.duration
    return replace(cfg, **overrides).validate() if overrides else cfg.validate()


def _summary(record) -> dict:
    err = record.column("attitude_error_deg")
    return {
        "observer": record.meta["observer"],
        "seed": record.meta["seed"],
        "averaged_error_deg": averaged_error(record) if record.column("t")[-1] >= 2.0 else float("nan"),
        "final_error_deg": float(err[-1]),
        "jumps": int(record.rows[-1][1]),
    }


def cmd_run(args) -> int:
    cfg = _scenario(args)
    record = run_scenario(cfg, audit=False)
    out = args.out or cfg.out
    if out:
        emit_csv(record, out)
    print(json.dumps(_summary(record)))
    return EXIT_OK


def cmd_design_params(args) -> int:
    cfg = _scenario(args)
    params = design_for(cfg, VectorObservationSet(cfg.vectors, cfg.weights))
    if args.json:
        print(json.dumps(params.to_dict(), indent=2))
    else:
        print(format_params(params), end="")
    return EXIT_OK


def cmd_replay(args) -> int:
    log = parse_tag_log(args.log)
    record = replay(log, ReplayConfig(observer=args.observer))
    if args.out:
        emit_csv(record, args.out)
    rm = record.column("rmse")
    print(json.dumps({"observer": args.observer, "tags": len(log.tags), "final_rmse": float(rm[-1]) if len(rm) > 1 else None}))
    return EXIT_OK


def cmd_make_log(args) -> int:
    log, _ = synthetic_tag_log(
        duration=args.duration, pixel_noise=args.pixel_noise, depth_noise=args.depth_noise, seed=args.seed
    )
    write_tag_log(log, args.out)
    return EXIT_OK


def _sweep_one(job):
    name, seed, observer, extra = job
    record = run_scenario(preset(name, observer=observer, seed=seed, **extra), audit=False)
    return (name, seed), _summary(record)


def sweep(presets, seeds, observer: str, jobs: int = 1, duration: float | None = None) -> list[dict]:
    """Independent seeded runs, merged by ``(preset, seed)`` whatever the completion order."""
    extra = {} if duration is None else {"duration": duration}
    work = [(p, s, observer, extra) for p in presets for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, work))
    else:
        results = [_sweep_one(w) for w in work]
    return [dict(preset=key[0], **summary) for key, summary in sorted(results, key=lambda kv: kv[0])]


def cmd_sweep(args) -> int:
    rows = sweep(args.presets, range(args.seeds), args.observer, args.jobs, args.duration)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybrid-attitude", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_source(p):
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--preset", choices=PRESETS)
        g.add_argument("--config", type=Path)

    p = sub.add_parser("run", help="simulate one scenario and write its CSV")
    scenario_source(p)
    p.add_argument("--observer", choices=OBSERVERS)
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="override the simulated time (s)")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("design-params", help="print the designed switching parameters")
    scenario_source(p)
    p.add_argument("--json", action="store_true", help="print JSON instead of key = value lines")
    p.set_defaults(func=cmd_design_params)

    p = sub.add_parser("replay", help="run an observer over a recorded tag log")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--observer", choices=OBSERVERS, default="agas")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("make-log", help="write a synthetic tag log")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--pixel-noise", type=float, default=0.0)
    p.add_argument("--depth-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_log)

    p = sub.add_parser("sweep", help="seeded runs over presets, merged by (preset, seed)")
    p.add_argument("--presets", nargs="+", choices=PRESETS, default=["test1", "test2"])
    p.add_argument("--seeds", type=int, default=10, help="seeds 0 .. N-1")
    p.add_argument("--observer", choices=OBSERVERS, default="cf")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--duration", type=float, help="override the simulated time (s)")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (OSError, TagLogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
