"""
commands/verify.py
------------------
Handles `crosspulse.py verify`: runs the embedded oracle checks
(core/oracles.run_checks) and reports one line per check plus a total.
Exit 0 only when every check passes. `--out PATH` also writes the report
as JSON.
"""

from __future__ import annotations
from argparse import Namespace
from dataclasses import asdict
import sys

from core.oracles import CheckResult, run_checks
from core.utils import save_json


def format_report(results: list[CheckResult]) -> str:
    lines = [f"{'✅' if r.passed else '❌'} {r.name}: {r.detail}" for r in results]
    ok = sum(r.passed for r in results)
    mark = "✅" if ok == len(results) else "❌"
    lines.append(f"{mark} verify: {ok}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"


def handle_verify(args: Namespace) -> int:
    results = run_checks(data_dir=getattr(args, "data_dir", None))
    sys.stdout.write(format_report(results))
    if getattr(args, "out", None):
        save_json(args.out, {
            "passed": sum(r.passed for r in results),
            "total": len(results),
            "checks": [asdict(r) for r in results],
        })
    return 0 if all(r.passed for r in results) else 1
