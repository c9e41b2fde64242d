"""Config-driven experiment runner.

A configuration describes a grid over pipeline parameters plus a mechanism
list; the sweep evaluates every grid cell with paired randomness: within a
trial, every mechanism sees the same rankings and the same clustering, and
the ranking stream is keyed only by (seed, n, phi, trial) so that cells
differing in budget or staging parameters stay paired trial-by-trial too.

Output is a CSV with one row per cell and mechanism. The whole sweep is a
pure function of (config, seed): reruns are byte-identical, serial or
parallel.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .assign import Clustering, make_clusters
from .errors import InfeasibilityError, InvalidInputError
from .metrics import gain_curve, negative_borda, positive_borda, precision_at_k
from .noise import sample_mallows_batch
from .rng import stream
from .twostage import (
    MECHANISMS,
    RankingProfile,
    TwoStageParams,
    run_single_stage,
    run_two_stage,
)

__all__ = [
    "ExperimentConfig",
    "Cell",
    "ResultRow",
    "load_config",
    "config_cells",
    "run_cell",
    "run_sweep",
    "write_rows_csv",
    "emit_gain_data",
    "CSV_HEADER",
]

CSV_HEADER = (
    "n,k,m,f,h,l,c,phi,mechanism,trials,"
    "precision_mean,precision_stderr,posborda_mean,posborda_stderr,"
    "negborda_mean,negborda_stderr"
)

# Trials are accumulated in fixed-size chunks and the chunk partials merged
# in order, so parallel and serial runs sum floats identically.
_TRIAL_CHUNK = 256


@dataclass(frozen=True)
class Cell:
    """One grid point: a full parameter combination."""

    n: int
    k: int
    m: int
    f: int
    h: int
    l: int
    c: int
    phi: float

    def key(self) -> tuple:
        return (self.n, self.k, self.m, self.f, self.h, self.l, self.c, self.phi)

    def params(self) -> TwoStageParams:
        return TwoStageParams(
            n=self.n, k=self.k, m=self.m, phi=self.phi,
            f=self.f, h=self.h, l=self.l, c=self.c,
        )


@dataclass
class ExperimentConfig:
    """Grid specification; scalar fields apply to every cell."""

    n: int
    k: list[int]
    m: list[int]
    phi: list[float]
    mechanisms: list[str]
    f: list[float] = field(default_factory=lambda: [0])
    h: list[float] = field(default_factory=lambda: [0])
    l: list[int] = field(default_factory=lambda: [0])
    c: list[int] = field(default_factory=lambda: [1])
    trials: int = 10_000
    seed: int = 0
    pool_stage1: bool = True
    two_stage: bool = False
    out: str | None = None


def _as_list(value: object) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a flat JSON config; grid keys accept scalars or arrays."""
    raw = json.loads(Path(path).read_text())
    known = {
        "n", "k", "m", "f", "h", "l", "c", "phi", "mechanisms",
        "trials", "seed", "pool_stage1", "two_stage", "out",
    }
    unknown = set(raw) - known
    if unknown:
        raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
    for required in ("n", "k", "m", "phi", "mechanisms"):
        if required not in raw:
            raise InvalidInputError(f"config is missing required key {required!r}")
    cfg = ExperimentConfig(
        n=int(raw["n"]),
        k=[int(v) for v in _as_list(raw["k"])],
        m=[int(v) for v in _as_list(raw["m"])],
        phi=[float(v) for v in _as_list(raw["phi"])],
        mechanisms=[str(v) for v in _as_list(raw["mechanisms"])],
        f=[float(v) for v in _as_list(raw.get("f", [0]))],
        h=[float(v) for v in _as_list(raw.get("h", [0]))],
        l=[int(v) for v in _as_list(raw.get("l", [0]))],
        c=[int(v) for v in _as_list(raw.get("c", [1]))],
        trials=int(raw.get("trials", 10_000)),
        seed=int(raw.get("seed", 0)),
        pool_stage1=bool(raw.get("pool_stage1", True)),
        two_stage=bool(raw.get("two_stage", False)),
        out=raw.get("out"),
    )
    for mechanism in cfg.mechanisms:
        if mechanism not in MECHANISMS:
            raise InvalidInputError(f"unknown mechanism {mechanism!r}")
    if cfg.trials < 0 or cfg.seed < 0:
        raise InvalidInputError("trials and seed must be non-negative")
    return cfg


def _resolve_fraction(value: float, base: int, name: str) -> int:
    """Grid values in (0, 1) are read as fractions of their base quantity
    (f of m, h of k), rounded to the nearest integer, at least 1."""
    if value == 0:
        return 0
    if 0 < value < 1:
        return max(1, round(value * base))
    if value != int(value):
        raise InvalidInputError(f"{name} must be an integer or a fraction in (0,1)")
    return int(value)


def config_cells(config: ExperimentConfig) -> list[Cell]:
    """Expand the grid; every cell is validated before anything runs.

    With ``two_stage`` off the staging dimensions collapse to zero, so
    duplicate cells are dropped after resolution.
    """
    cells: list[Cell] = []
    seen: set[tuple] = set()
    for k, m, phi, f_raw, h_raw, l in itertools.product(
        config.k, config.m, config.phi, config.f, config.h, config.l
    ):
        for c in config.c:
            f = _resolve_fraction(f_raw, m, "f") if config.two_stage else 0
            h = _resolve_fraction(h_raw, k, "h") if config.two_stage else 0
            l_eff = l if config.two_stage else 0
            cell = Cell(n=config.n, k=k, m=m, f=f, h=h, l=l_eff, c=c, phi=phi)
            if cell.key() in seen:
                continue
            seen.add(cell.key())
            cell.params().validate()
            cells.append(cell)
    return cells


@dataclass
class ResultRow:
    """Aggregated metrics for one (cell, mechanism) pair."""

    cell: Cell
    mechanism: str
    trials: int
    precision_mean: float
    precision_stderr: float
    posborda_mean: float
    posborda_stderr: float
    negborda_mean: float
    negborda_stderr: float
    infeasible: bool = False
    frequencies: dict[int, float] | None = None

    def key(self) -> tuple:
        return (*self.cell.key(), self.mechanism)

    def csv_fields(self) -> list[str]:
        c = self.cell
        stats = [
            self.precision_mean, self.precision_stderr,
            self.posborda_mean, self.posborda_stderr,
            self.negborda_mean, self.negborda_stderr,
        ]
        return (
            [str(c.n), str(c.k), str(c.m), str(c.f), str(c.h), str(c.l), str(c.c)]
            + [f"{c.phi:.6f}", self.mechanism, str(self.trials)]
            + [("nan" if self.infeasible else f"{v:.6f}") for v in stats]
        )


class _Accumulator:
    """Order-stable metric sums for one mechanism."""

    __slots__ = ("count", "sums", "sumsqs", "freq", "infeasible")

    def __init__(self, n: int, collect_freq: bool):
        self.count = 0
        self.sums = [0.0, 0.0, 0.0]
        self.sumsqs = [0.0, 0.0, 0.0]
        self.freq = np.zeros(n, dtype=np.int64) if collect_freq else None
        self.infeasible = False

    def add(self, values: tuple[float, float, float], selected: frozenset[int]) -> None:
        self.count += 1
        for i, v in enumerate(values):
            self.sums[i] += v
            self.sumsqs[i] += v * v
        if self.freq is not None:
            self.freq[list(selected)] += 1

    def merge(self, other: "_Accumulator") -> None:
        self.count += other.count
        self.infeasible = self.infeasible or other.infeasible
        for i in range(3):
            self.sums[i] += other.sums[i]
            self.sumsqs[i] += other.sumsqs[i]
        if self.freq is not None and other.freq is not None:
            self.freq += other.freq

    def mean_stderr(self, i: int) -> tuple[float, float]:
        if self.count == 0:
            return (float("nan"), float("nan"))
        mean = self.sums[i] / self.count
        if self.count < 2:
            return (mean, 0.0)
        var = max(0.0, (self.sumsqs[i] - self.sums[i] ** 2 / self.count) / (self.count - 1))
        return (mean, math.sqrt(var / self.count))


def _trial_inputs(
    cell: Cell, seed: int, trial: int
) -> tuple[RankingProfile, Clustering | None]:
    rank_rng = stream(seed, "rankings", cell.n, cell.phi, trial)
    orders = RankingProfile(
        sample_mallows_batch(np.arange(cell.n), cell.phi, rank_rng, size=cell.n)
    )
    clustering = (
        make_clusters(cell.n, cell.c, stream(seed, "clusters", cell.n, cell.c, trial))
        if cell.c > 1
        else None
    )
    return orders, clustering


def _run_trial_chunk(
    cell: Cell,
    mechanisms: Sequence[str],
    seed: int,
    trial_lo: int,
    trial_hi: int,
    pool_stage1: bool,
    two_stage: bool,
    collect_freq: bool,
    probe: Callable | None = None,
) -> dict[str, _Accumulator]:
    params = cell.params()
    accs = {mech: _Accumulator(cell.n, collect_freq) for mech in mechanisms}
    staged = two_stage and cell.f > 0
    for trial in range(trial_lo, trial_hi):
        orders, clustering = _trial_inputs(cell, seed, trial)
        if probe is not None:
            probe(trial, clustering)
        for mechanism in mechanisms:
            acc = accs[mechanism]
            if acc.infeasible:
                continue
            run_rng = stream(seed, "run", cell.n, cell.c, trial)
            try:
                if staged:
                    result, _ = run_two_stage(
                        mechanism, params, orders, clustering, run_rng,
                        pool_stage1=pool_stage1,
                    )
                else:
                    result = run_single_stage(
                        mechanism, params, orders, clustering, run_rng
                    )
            except InfeasibilityError:
                acc.infeasible = True
                continue
            values = (
                precision_at_k(result.selected, cell.k),
                positive_borda(result.selected, cell.k),
                negative_borda(result.selected, cell.k, cell.n),
            )
            acc.add(values, result.selected)
    return accs


def _rows_from_accumulators(
    cell: Cell, mechanisms: Sequence[str], accs: Mapping[str, _Accumulator]
) -> list[ResultRow]:
    rows = []
    for mechanism in mechanisms:
        acc = accs[mechanism]
        if acc.infeasible:
            rows.append(
                ResultRow(
                    cell=cell, mechanism=mechanism, trials=0,
                    precision_mean=float("nan"), precision_stderr=float("nan"),
                    posborda_mean=float("nan"), posborda_stderr=float("nan"),
                    negborda_mean=float("nan"), negborda_stderr=float("nan"),
                    infeasible=True,
                )
            )
            continue
        p_mean, p_se = acc.mean_stderr(0)
        pb_mean, pb_se = acc.mean_stderr(1)
        nb_mean, nb_se = acc.mean_stderr(2)
        freq = None
        if acc.freq is not None and acc.count:
            freq = {i: acc.freq[i] / acc.count for i in range(cell.n)}
        rows.append(
            ResultRow(
                cell=cell, mechanism=mechanism, trials=acc.count,
                precision_mean=p_mean, precision_stderr=p_se,
                posborda_mean=pb_mean, posborda_stderr=pb_se,
                negborda_mean=nb_mean, negborda_stderr=nb_se,
                frequencies=freq,
            )
        )
    return rows


def run_cell(
    cell: Cell,
    mechanisms: Sequence[str],
    trials: int,
    seed: int,
    *,
    pool_stage1: bool = True,
    two_stage: bool = True,
    collect_freq: bool = False,
    probe: Callable | None = None,
) -> list[ResultRow]:
    """Evaluate one grid cell: every mechanism on identical per-trial
    rankings and clusterings, metrics aggregated over all trials."""
    cell.params().validate()
    merged = {m: _Accumulator(cell.n, collect_freq) for m in mechanisms}
    for lo in range(0, trials, _TRIAL_CHUNK):
        hi = min(trials, lo + _TRIAL_CHUNK)
        part = _run_trial_chunk(
            cell, mechanisms, seed, lo, hi, pool_stage1, two_stage,
            collect_freq, probe,
        )
        for m in mechanisms:
            merged[m].merge(part[m])
    return _rows_from_accumulators(cell, mechanisms, merged)


def _sweep_task(args: tuple) -> tuple[int, int, dict[str, _Accumulator]]:
    cell_idx, lo, hi, cell, mechanisms, seed, pool_stage1, two_stage = args
    accs = _run_trial_chunk(
        cell, mechanisms, seed, lo, hi, pool_stage1, two_stage, collect_freq=False
    )
    return cell_idx, lo, accs


def run_sweep(
    config: ExperimentConfig,
    threads: int = 1,
    out: str | Path | None = None,
    collect_freq: bool = False,
) -> list[ResultRow]:
    """Run the full grid; rows come back sorted by cell key and mechanism.

    With ``threads > 1`` trial chunks run in worker processes; the chunked,
    fixed-order accumulation makes the output identical to a serial run.
    """
    cells = config_cells(config)
    out_path = Path(out) if out is not None else None
    if out_path is not None:
        # fail before any trial runs, not after
        try:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.touch()
        except OSError as exc:
            raise InvalidInputError(f"cannot write to {out_path}: {exc}") from exc
    rows: list[ResultRow] = []
    if threads <= 1 or len(cells) == 0:
        for cell in cells:
            rows.extend(
                run_cell(
                    cell, config.mechanisms, config.trials, config.seed,
                    pool_stage1=config.pool_stage1, two_stage=config.two_stage,
                    collect_freq=collect_freq,
                )
            )
    else:
        tasks = []
        for idx, cell in enumerate(cells):
            for lo in range(0, config.trials, _TRIAL_CHUNK):
                hi = min(config.trials, lo + _TRIAL_CHUNK)
                tasks.append(
                    (idx, lo, hi, cell, tuple(config.mechanisms), config.seed,
                     config.pool_stage1, config.two_stage)
                )
        partials: dict[int, dict[int, dict[str, _Accumulator]]] = {}
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for cell_idx, lo, accs in pool.map(_sweep_task, tasks):
                partials.setdefault(cell_idx, {})[lo] = accs
        for idx, cell in enumerate(cells):
            merged = {m: _Accumulator(cell.n, False) for m in config.mechanisms}
            for lo in sorted(partials.get(idx, {})):
                for m in config.mechanisms:
                    merged[m].merge(partials[idx][lo][m])
            rows.extend(_rows_from_accumulators(cell, config.mechanisms, merged))
    rows.sort(key=lambda r: r.key())
    if out_path is not None:
        write_rows_csv(rows, out_path)
    return rows


def write_rows_csv(rows: Iterable[ResultRow], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        for row in rows:
            writer.writerow(row.csv_fields())


def emit_gain_data(
    freq_a: Mapping[int, float], freq_b: Mapping[int, float], path: str | Path
) -> None:
    """Write the per-agent selection-probability gain of b over a as CSV."""
    delta = gain_curve(freq_a, freq_b)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["agent_index", "delta"])
        for agent in sorted(delta):
            writer.writerow([str(agent), f"{delta[agent]:.6f}"])
