"""
crosspulse.py
-------------
Command-line entrypoint for CrossPulse.

What this file does:
- Builds the argparse tree for the subcommands: run, sweep, compare, verify.
- Adds one `--<key>` flag per config key (dashes for underscores), so any
  value in a config file can be overridden from the command line.
- Configures logging once (`--verbose` → DEBUG, CROSSPULSE_LOG_LEVEL overrides).
- Delegates all work to commands/*; maps library and I/O errors to exit codes
  (config errors → 2, other CrossPulse errors and failed writes → 1).

Examples:
    python crosspulse.py run --t-max 30 --scenario s1 --seed 1
    python crosspulse.py sweep --seeds 1:10 --jobs 4 --out data/out/sweep.csv
    python crosspulse.py compare --seeds 1:5 --baseline fixed
    python crosspulse.py verify
"""

from __future__ import annotations
from typing import Callable, Optional, Sequence
import argparse
import logging
import sys

from commands.compare import handle_compare
from commands.run import handle_run
from commands.sweep import handle_sweep
from commands.verify import handle_verify
from core.config import CONFIG_KEYS
from core.errors import ConfigError, CrossPulseError
from core.utils import env_str

Handler = Callable[[argparse.Namespace], int]


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _common(with_config: bool = True) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    p.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    p.add_argument("--out", metavar="PATH", help="write the CSV/JSON result here instead of stdout")
    if with_config:
        p.add_argument("--config", metavar="PATH", help="flat key=value config file")
        group = p.add_argument_group("config overrides")
        for key in CONFIG_KEYS:
            group.add_argument(_flag(key), dest=key, metavar="VALUE", default=None)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crosspulse",
        description="Queue-state signal control for a 12-movement intersection: simulate, sweep, compare, verify.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p_run = sub.add_parser("run", parents=[common], allow_abbrev=False, help="one simulation, summary CSV")
    p_run.add_argument("--log", metavar="PATH", help="per-vehicle CSV log")
    p_run.add_argument("--trace", metavar="PATH", help="per-step CSV of the 12 queue states")
    p_run.set_defaults(handler=handle_run)

    p_sweep = sub.add_parser("sweep", parents=[common], allow_abbrev=False, help="T_max × scenario × seed grid")
    p_sweep.add_argument("--seeds", metavar="LIST", help="'1,2,3' or '1:10'")
    p_sweep.add_argument("--t-max-values", dest="t_max_values", metavar="LIST", help="'15:90:5' or '15,30,60'")
    p_sweep.add_argument("--scenarios", metavar="LIST", help="'s1,s2' (default both)")
    p_sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    p_sweep.add_argument("--summary", action="store_true", help="per-(scenario, t_max) medians instead of rows")
    p_sweep.set_defaults(handler=handle_sweep)

    p_cmp = sub.add_parser("compare", parents=[common], allow_abbrev=False, help="adaptive vs baselines")
    p_cmp.add_argument("--seeds", metavar="LIST", help="'1,2,3' or '1:10'")
    p_cmp.add_argument("--baseline", choices=["fixed", "greedy"], help="only this baseline (default both)")
    p_cmp.set_defaults(handler=handle_compare)

    p_ver = sub.add_parser("verify", parents=[_common(with_config=False)], allow_abbrev=False,
                           help="embedded oracle checks")
    p_ver.add_argument("--data-dir", dest="data_dir", metavar="DIR", help="fixture directory (default data/)")
    p_ver.set_defaults(handler=handle_verify)
    return parser


def setup_logging(verbose: bool) -> None:
    level_name = env_str("CROSSPULSE_LOG_LEVEL") or ("DEBUG" if verbose else "WARNING")
    level = getattr(logging, level_name.upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    handler: Handler = args.handler
    try:
        return handler(args)
    except ConfigError as e:
        where = f" [{e.key}]" if e.key else ""
        print(f"❌ config error{where}: {e}", file=sys.stderr)
        return 2
    except CrossPulseError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"❌ I/O error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
