"""
core/utils.py
--------------
Project-wide utilities:
- Project paths (ROOT, DATA_DIR) and fixture names
- Atomic text / JSON / CSV writes (temp file + os.replace)
- Stable number formatting for byte-identical CSV output
- Env reader and list parsers used by the CLI
"""

from __future__ import annotations
from pathlib import Path
from typing import Any, Iterable, Sequence
import csv
import io
import json
import logging
import os
import tempfile

log = logging.getLogger(__name__)

# -------- Paths --------

ROOT: Path = Path(__file__).resolve().parents[1]
DATA_DIR: Path = ROOT / "data"

CONFLICT_FIXTURE = "conflict_matrix.txt"
PHASE_GROUPS_FIXTURE = "phase_groups.txt"

# -------- Env helpers --------

def env_str(key: str, default: str = "") -> str:
    v = os.getenv(key)
    return v.strip() if v else default

# -------- Parsing helpers --------

def parse_int_list(text: str) -> list[int]:
    """'1,2,3' → [1, 2, 3]; 'a:b' → range a..b inclusive."""
    out: list[int] = []
    for tok in (t.strip() for t in text.split(",")):
        if not tok:
            continue
        if ":" in tok:
            lo, hi = tok.split(":", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(tok))
    return out


def parse_float_range(text: str) -> list[float]:
    """'15,30,45' → list; 'start:stop:step' → inclusive arithmetic range."""
    text = text.strip()
    if text.count(":") == 2:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValueError(f"step must be > 0 in {text!r}")
        n = int(round((stop - start) / step))
        return [start + i * step for i in range(n + 1) if start + i * step <= stop + 1e-9]
    return [float(t) for t in text.split(",") if t.strip()]

# -------- Formatting --------

def fmt_num(v: Any) -> str:
    """Ints verbatim, floats with 6 decimals and '.' separator."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def fmt_compact(v: float) -> str:
    """Short form for parameters such as t_max (30 → '30', 27.5 → '27.5')."""
    return f"{v:g}"

# -------- Atomic writes --------

def write_text(path: str | Path, text: str, atomic: bool = True) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    if not atomic:
        p.write_text(text, encoding="utf-8", newline="")
        return
    tmp_fd, tmp_path = tempfile.mkstemp(prefix=p.name, dir=str(p.parent))
    try:
        with os.fdopen(tmp_fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_path, p)  # atomic on most OSes
    except Exception:
        try:
            os.remove(tmp_path)
        except OSError:
            pass
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """CSV with a header row, ',' delimiter, '\\n' line endings, formatted numbers."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_num(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    write_text(path, csv_text(header, rows))
    log.debug("wrote %s", path)

# -------- JSON output --------

def save_json(path: str | Path, obj: Any) -> None:
    write_text(path, json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True) + "\n")
