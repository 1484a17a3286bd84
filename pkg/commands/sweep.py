"""
commands/sweep.py
-----------------
Handles `crosspulse.py sweep`: one run per (scenario, t_max, seed) cell.

- Cells are independent worlds; `--jobs N` fans them out over a process pool.
- Rows are always emitted sorted by (scenario, t_max, seed), so parallel and
  serial output are byte-identical.
- `--summary` replaces the raw rows with per-(scenario, t_max) medians of
  awt_ev / awt_cv / awt_all (the six plot series when both scenarios run).
"""

from __future__ import annotations
from argparse import Namespace
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence
import logging
import math

import numpy as np
from scipy.stats import spearmanr

from commands.run import config_from_args, emit, rules_for, summary_csv
from core.config import Scenario, SimConfig
from core.errors import ConfigError
from core.metrics import MetricsRecord, summary_row
from core.simulator import run
from core.utils import csv_text, fmt_compact, parse_float_range, parse_int_list

log = logging.getLogger(__name__)

DEFAULT_T_MAX_VALUES: tuple[float, ...] = tuple(float(t) for t in range(15, 91, 5))
SUMMARY_HEADER: tuple[str, ...] = ("scenario", "t_max", "seeds", "median_awt_ev", "median_awt_cv", "median_awt_all")


@dataclass(frozen=True)
class SweepSpec:
    base_config: SimConfig
    t_max_values: tuple[float, ...] = DEFAULT_T_MAX_VALUES
    scenarios: tuple[Scenario, ...] = (Scenario.S1_PRIORITY, Scenario.S2_NO_PRIORITY)
    seeds: tuple[int, ...] = (1,)

    def __post_init__(self) -> None:
        if not self.t_max_values:
            raise ConfigError("sweep needs at least one t_max value", key="t_max_values")
        if any(not t > 0 for t in self.t_max_values):
            raise ConfigError("sweep t_max values must be > 0", key="t_max_values")
        if not self.scenarios:
            raise ConfigError("sweep needs at least one scenario", key="scenarios")
        if not self.seeds:
            raise ConfigError("sweep needs at least one seed", key="seeds")

    def cells(self) -> list[SimConfig]:
        cells = [
            self.base_config.with_overrides(scenario=s, t_max=t, seed=seed).validate()
            for s in self.scenarios for t in self.t_max_values for seed in self.seeds
        ]
        return sorted(cells, key=lambda c: (c.scenario.value, c.t_max, c.seed))


def run_cell(cfg: SimConfig) -> MetricsRecord:
    return run(cfg, rules=rules_for(cfg))


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[tuple[SimConfig, MetricsRecord]]:
    cells = spec.cells()
    log.info("sweep: %d cells, jobs=%d", len(cells), jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run_cell, cells))
    else:
        records = [run_cell(c) for c in cells]
    return list(zip(cells, records))


def sweep_rows(results: Sequence[tuple[SimConfig, MetricsRecord]]) -> list[list]:
    return [summary_row(rec, cfg.scenario.value, cfg.t_max, cfg.seed) for cfg, rec in results]


def median_rows(results: Sequence[tuple[SimConfig, MetricsRecord]]) -> list[list]:
    groups: dict[tuple[str, float], list[MetricsRecord]] = {}
    for cfg, rec in results:
        groups.setdefault((cfg.scenario.value, cfg.t_max), []).append(rec)
    rows = []
    for (scenario, t_max), recs in sorted(groups.items()):
        rows.append([
            scenario, fmt_compact(t_max), len(recs),
            float(np.median([r.awt_ev for r in recs])),
            float(np.median([r.awt_cv for r in recs])),
            float(np.median([r.awt_all for r in recs])),
        ])
    return rows


def trend_correlation(results: Sequence[tuple[SimConfig, MetricsRecord]], scenario: Scenario) -> float:
    """Spearman rho between t_max and median awt_all for one scenario (nan if either is constant)."""
    per_t: dict[float, list[float]] = {}
    for cfg, rec in results:
        if cfg.scenario is scenario:
            per_t.setdefault(cfg.t_max, []).append(rec.awt_all)
    ts = sorted(per_t)
    medians = [float(np.median(per_t[t])) for t in ts]
    if len(set(ts)) < 2 or len(set(medians)) < 2:
        return math.nan
    return float(spearmanr(ts, medians)[0])


def spec_from_args(args: Namespace) -> SweepSpec:
    cfg = config_from_args(args)
    try:
        t_values = tuple(parse_float_range(args.t_max_values)) if getattr(args, "t_max_values", None) \
            else DEFAULT_T_MAX_VALUES
        seeds = tuple(parse_int_list(args.seeds)) if getattr(args, "seeds", None) else (cfg.seed,)
    except ValueError as e:
        raise ConfigError(f"bad sweep list: {e}", key="seeds") from None
    try:
        scenarios = tuple(Scenario(s.strip().lower()) for s in args.scenarios.split(",")) \
            if getattr(args, "scenarios", None) else (Scenario.S1_PRIORITY, Scenario.S2_NO_PRIORITY)
    except ValueError:
        raise ConfigError(f"scenarios: expected s1 and/or s2, got {args.scenarios!r}", key="scenarios") from None
    return SweepSpec(cfg, t_values, scenarios, seeds)


def handle_sweep(args: Namespace) -> int:
    spec = spec_from_args(args)
    results = run_sweep(spec, jobs=max(1, int(getattr(args, "jobs", 1) or 1)))
    for s in spec.scenarios:
        log.info("sweep trend %s: spearman(t_max, median awt_all) = %.3f", s.value, trend_correlation(results, s))
    if getattr(args, "summary", False):
        emit(csv_text(SUMMARY_HEADER, median_rows(results)), getattr(args, "out", None))
    else:
        emit(summary_csv(sweep_rows(results)), getattr(args, "out", None))
    return 0
