"""Command-line entry point.

Run a configured sweep and write the metrics CSV, or compare two
single-cell configs and write a per-agent gain file:

    peerkit --config sweep.json --out results.csv
    peerkit --config sweep.json --validate-only
    peerkit --gain baseline.json richer.json --out gain.csv
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import PeerKitError
from .harness import (
    ExperimentConfig,
    config_cells,
    emit_gain_data,
    load_config,
    run_sweep,
)

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peerkit",
        description="Deterministic peer-selection simulation sweeps.",
    )
    parser.add_argument("--config", metavar="PATH", help="sweep config (JSON)")
    parser.add_argument(
        "--gain",
        nargs=2,
        metavar=("A_CONFIG", "B_CONFIG"),
        help="emit the per-agent selection gain of config B over config A",
    )
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--trials", type=int, help="override the config trial count")
    parser.add_argument("--out", metavar="PATH", help="output file path")
    parser.add_argument("--threads", type=int, default=1, help="worker processes")
    parser.add_argument(
        "--validate-only",
        action="store_true",
        help="expand and validate the grid, run nothing",
    )
    return parser


def _load_with_overrides(path: str, args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(path)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.trials is not None:
        config = replace(config, trials=args.trials)
    return config


def _frequencies_for(config: ExperimentConfig, threads: int, label: str):
    cells = config_cells(config)
    if len(cells) != 1 or len(config.mechanisms) != 1:
        raise PeerKitError(
            f"gain config {label} must describe exactly one cell and one "
            f"mechanism (got {len(cells)} cells, {len(config.mechanisms)} mechanisms)"
        )
    rows = run_sweep(config, threads=threads, collect_freq=True)
    row = rows[0]
    if row.infeasible or row.frequencies is None:
        raise PeerKitError(f"gain config {label} is infeasible")
    return row.frequencies


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config and not args.gain:
        parser.error("either --config or --gain is required")
    try:
        if args.gain:
            cfg_a = _load_with_overrides(args.gain[0], args)
            cfg_b = _load_with_overrides(args.gain[1], args)
            if args.validate_only:
                config_cells(cfg_a)
                config_cells(cfg_b)
                print("both gain configs are valid")
                return 0
            if not args.out:
                parser.error("--gain requires --out")
            freq_a = _frequencies_for(cfg_a, args.threads, "A")
            freq_b = _frequencies_for(cfg_b, args.threads, "B")
            emit_gain_data(freq_a, freq_b, args.out)
            print(f"wrote gain data to {args.out}")
            return 0

        config = _load_with_overrides(args.config, args)
        cells = config_cells(config)
        if args.validate_only:
            print(f"config is valid: {len(cells)} cells x "
                  f"{len(config.mechanisms)} mechanisms, {config.trials} trials")
            return 0
        if not cells:
            print("warning: empty grid, nothing to run")
            return 0
        out = args.out or config.out
        if not out:
            parser.error("--out is required (or set `out` in the config)")
        rows = run_sweep(config, threads=args.threads, out=out)
        infeasible = sum(1 for r in rows if r.infeasible)
        note = f" ({infeasible} infeasible)" if infeasible else ""
        print(f"wrote {len(rows)} rows to {out}{note}")
        return 0
    except PeerKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
