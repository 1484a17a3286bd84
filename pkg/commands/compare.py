"""
commands/compare.py
-------------------
Handles `crosspulse.py compare`: the adaptive controller against the
FixedCycle / GreedyLongest baselines on paired arrival streams (same seed,
same arrivals), one row per (controller, seed) plus a median row per
controller.
"""

from __future__ import annotations
from argparse import Namespace
from typing import Sequence
import logging

import numpy as np

from commands.run import config_from_args, emit, rules_for
from core.config import ControllerKind, SimConfig
from core.errors import ConfigError
from core.metrics import MetricsRecord, lane_wait_table
from core.simulator import run
from core.utils import csv_text, parse_int_list

log = logging.getLogger(__name__)

COMPARE_HEADER: tuple[str, ...] = (
    "controller", "seed", "awt_all", "awt_cv", "awt_ev", "throughput", "max_lane_wait", "empty_green_grants",
)
_MEDIAN_COLUMNS = ("awt_all", "awt_cv", "awt_ev", "throughput", "max_lane_wait", "empty_green_grants")


def compare_controllers(base: SimConfig, seeds: Sequence[int],
                        kinds: Sequence[ControllerKind]) -> list[tuple[ControllerKind, int, MetricsRecord]]:
    out = []
    for kind in kinds:
        for seed in seeds:
            cfg = base.with_overrides(controller=kind, seed=seed).validate()
            rec = run(cfg, rules=rules_for(cfg))
            log.debug("%s seed=%s worst lane waits %s", kind.value, seed, lane_wait_table(rec))
            out.append((kind, seed, rec))
    return out


def _values(rec: MetricsRecord) -> list:
    return [rec.awt_all, rec.awt_cv, rec.awt_ev, rec.throughput, rec.worst_lane_wait, rec.empty_green_grants]


def compare_rows(results: Sequence[tuple[ControllerKind, int, MetricsRecord]]) -> list[list]:
    rows = [[kind.value, seed, *_values(rec)] for kind, seed, rec in results]
    kinds = list(dict.fromkeys(kind for kind, _, _ in results))
    for kind in kinds:
        table = np.array([_values(rec) for k, _, rec in results if k is kind], dtype=float)
        rows.append([kind.value, "median", *(float(v) for v in np.median(table, axis=0))])
    return rows


def kinds_from_args(args: Namespace) -> list[ControllerKind]:
    baseline = getattr(args, "baseline", None)
    if not baseline:
        return [ControllerKind.ADAPTIVE, ControllerKind.FIXED, ControllerKind.GREEDY]
    try:
        kind = ControllerKind(baseline)
    except ValueError:
        raise ConfigError(f"baseline: expected fixed|greedy, got {baseline!r}", key="baseline") from None
    if kind is ControllerKind.ADAPTIVE:
        raise ConfigError("baseline: expected fixed|greedy, got 'adaptive'", key="baseline")
    return [ControllerKind.ADAPTIVE, kind]


def handle_compare(args: Namespace) -> int:
    cfg = config_from_args(args)
    try:
        seeds = parse_int_list(args.seeds) if getattr(args, "seeds", None) else [cfg.seed]
    except ValueError as e:
        raise ConfigError(f"bad seed list: {e}", key="seeds") from None
    results = compare_controllers(cfg, seeds, kinds_from_args(args))
    emit(csv_text(COMPARE_HEADER, compare_rows(results)), getattr(args, "out", None))
    return 0
