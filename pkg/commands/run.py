"""
commands/run.py
---------------
Handles `crosspulse.py run`:
- Builds the SimConfig from defaults → env → --config file → flags.
- Runs one simulation (optionally with a rule-change script).
- Prints the summary CSV (header + one row) to stdout, or writes it to --out.
- Optionally writes the per-vehicle log (--log) and the signal trace (--trace).

Also home of the flag → config-override plumbing shared by sweep/compare.
"""

from __future__ import annotations
from argparse import Namespace
from typing import Any, Optional
import logging
import sys

from core.config import CONFIG_KEYS, SimConfig, load_config
from core.metrics import SUMMARY_HEADER, VEHICLE_HEADER, MetricsRecord, summary_row, vehicle_rows
from core.scheduler import RuleChange, load_rule_script
from core.simulator import TRACE_HEADER, World, run
from core.utils import csv_text, write_csv, write_text

log = logging.getLogger(__name__)


def overrides_from_args(args: Namespace) -> dict[str, Any]:
    """Flag values the user actually passed, keyed by config key."""
    return {k: getattr(args, k) for k in CONFIG_KEYS if getattr(args, k, None) is not None}


def config_from_args(args: Namespace) -> SimConfig:
    return load_config(getattr(args, "config", None), overrides=overrides_from_args(args))


def rules_for(cfg: SimConfig) -> list[RuleChange]:
    return load_rule_script(cfg.rules) if cfg.rules else []


def emit(text: str, out: Optional[str]) -> None:
    if out:
        write_text(out, text)
    else:
        sys.stdout.write(text)


def summary_csv(rows: list[list]) -> str:
    return csv_text(SUMMARY_HEADER, rows)


def run_one(cfg: SimConfig, trace: bool = False) -> tuple[MetricsRecord, World]:
    world = World(cfg, rules=rules_for(cfg), trace=trace)
    return run(cfg, world=world), world


def handle_run(args: Namespace) -> int:
    cfg = config_from_args(args)
    rec, world = run_one(cfg, trace=bool(getattr(args, "trace", None)))

    emit(summary_csv([summary_row(rec, cfg.scenario.value, cfg.t_max, cfg.seed)]), getattr(args, "out", None))
    if getattr(args, "log", None):
        write_csv(args.log, VEHICLE_HEADER, vehicle_rows(rec))
        log.info("per-vehicle log: %s (%d rows)", args.log, rec.throughput)
    if getattr(args, "trace", None):
        write_csv(args.trace, TRACE_HEADER, world.trace_rows or [])
        log.info("signal trace: %s", args.trace)
    return 0
