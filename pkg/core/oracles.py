"""
core/oracles.py
---------------
Independent re-implementations used to check the library, plus the named
check suite behind `crosspulse.py verify`.

The oracles are written straight from the post-conditions, not from the
production code paths:
- brute_force_greedy: one sequential scan in (state desc, lane index) order.
- brute_force_counts: explicit per-pair distance loop.
- *_decimal: 50-digit re-evaluation of the queue formulas.
"""

from __future__ import annotations
from dataclasses import dataclass
from decimal import Decimal, localcontext
from pathlib import Path
from typing import Callable, Sequence
import logging
import math

import numpy as np

from core.baselines import check_phase_groups, fixed_cycle_groups, load_phase_groups
from core.config import SimConfig
from core.errors import CrossPulseError
from core.model import LANES, LANE_COUNT, ConflictRelation, LaneId, default_conflict_relation, load_conflict_fixture
from core.perception import CalibrationLine, DetectionBox, OccupancyMask, assign_and_count, mask_density
from core.queues import DwellParams, QueueObservation, dwell_time, time_to_empty
from core.scheduler import ConflictMatrix, apply_rule_change, new_matrix, proportional_reset, select_open_set
from core.utils import CONFLICT_FIXTURE, DATA_DIR, PHASE_GROUPS_FIXTURE

log = logging.getLogger(__name__)

# -------- Oracles --------

def brute_force_greedy(diagonal: Sequence[int], can_open: Callable[[LaneId], bool],
                       relation: ConflictRelation) -> frozenset[LaneId]:
    table = relation.table
    running = [i for i in range(LANE_COUNT) if diagonal[i] < 0]
    blocked = set(running)
    for i in running:
        blocked.update(j for j in range(LANE_COUNT) if table[i, j])
    order = sorted((i for i in range(LANE_COUNT) if i not in blocked), key=lambda i: (-diagonal[i], i))
    chosen: list[int] = []
    for i in order:
        if can_open(LANES[i]) and all(not table[i, j] for j in chosen):
            chosen.append(i)
    return frozenset(LANES[i] for i in chosen)


def brute_force_counts(boxes: Sequence[DetectionBox], lines: Sequence[CalibrationLine]) -> list[int]:
    counts = [0] * (len(lines) // 2)
    for box in boxes:
        cx = box.x0 + box.width / 2
        cy = box.y0 - box.height / 2
        best_j, best_d = 0, math.inf
        for j, line in enumerate(lines):
            (x1, y1), (x2, y2) = line.p1, line.p2
            a, b = y2 - y1, x1 - x2
            c = -a * x1 - b * y1
            d = abs(a * cx + b * cy + c) / math.sqrt(a * a + b * b)
            if d < best_d - 1e-12:
                best_j, best_d = j, d
        counts[best_j // 2] += 1
    return counts


def dwell_time_decimal(x_prev: float, params: DwellParams) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = 50
        a, lo, hi = Decimal(params.a), Decimal(params.y_min), Decimal(params.y_max)
        return lo + (hi - lo) * (a ** Decimal(x_prev))


def time_to_empty_decimal(obs: QueueObservation, v_cross: float) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = 50
        free = (1 - Decimal(obs.exit_density)) * Decimal(obs.exit_length_m)
        occ = Decimal(obs.entry_density) * Decimal(obs.entry_length_m)
        return max(Decimal(0), min(free, occ)) / Decimal(v_cross)


def rel_err(actual: float, expected: Decimal) -> float:
    if expected == 0:
        return abs(actual)
    return float(abs(Decimal(actual) - expected) / abs(expected))

# -------- Random inputs --------

def random_diagonals(rng: np.random.Generator, n: int) -> list[tuple[int, ...]]:
    return [tuple(int(v) for v in rng.integers(-1, 6, size=LANE_COUNT)) for _ in range(n)]


def random_scene(rng: np.random.Generator, n_lanes: int = 3, n_boxes: int = 8
                 ) -> tuple[list[DetectionBox], list[CalibrationLine]]:
    lines: list[CalibrationLine] = []
    x = 0.0
    for _ in range(n_lanes):
        left = x
        x += float(rng.uniform(20, 60))
        skew_l, skew_r = rng.uniform(-15, 15, size=2)
        lines.append(CalibrationLine((left, 0.0), (left + float(skew_l), 200.0)))
        lines.append(CalibrationLine((x, 0.0), (x + float(skew_r), 200.0)))
    boxes = [
        DetectionBox(float(rng.uniform(0, x)), float(rng.uniform(10, 200)),
                     float(rng.uniform(2, 20)), float(rng.uniform(2, 20)))
        for _ in range(n_boxes)
    ]
    return boxes, lines


def random_mask(rng: np.random.Generator) -> OccupancyMask:
    h, w = (int(v) for v in rng.integers(1, 30, size=2))
    bits = (rng.random((h, w)) < rng.random()).astype(np.uint8)
    x0, y0 = int(rng.integers(0, w)), int(rng.integers(0, h))
    rw, rh = int(rng.integers(1, w - x0 + 1)), int(rng.integers(1, h - y0 + 1))
    return OccupancyMask(bits, (x0, y0, rw, rh))

# -------- Check suite --------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _check(name: str, fn: Callable[[], str]) -> CheckResult:
    try:
        return CheckResult(name, True, fn())
    except AssertionError as e:
        return CheckResult(name, False, str(e) or "assertion failed")
    except CrossPulseError as e:
        return CheckResult(name, False, f"{type(e).__name__}: {e}")


def _fixture_fidelity(data_dir: Path) -> str:
    loaded = load_conflict_fixture(data_dir / CONFLICT_FIXTURE)
    assert loaded == default_conflict_relation(), "conflict fixture differs from the built-in table"
    return f"{len(loaded.conflict_pairs())} conflicting pairs"


def _table_shape() -> str:
    rel = default_conflict_relation()
    assert len(rel.conflict_pairs()) == 28, f"expected 28 pairs, got {len(rel.conflict_pairs())}"
    for lane in LANES:
        want = 2 if lane.direction.value == "R" else 6
        assert rel.degree(lane) == want, f"{lane.name} has {rel.degree(lane)} conflicts, expected {want}"
    return "right turns 2, others 6"


def _phase_groups(data_dir: Path) -> str:
    rel = default_conflict_relation()
    groups = load_phase_groups(data_dir / PHASE_GROUPS_FIXTURE)
    check_phase_groups(groups, rel)
    assert groups == fixed_cycle_groups(rel), "phase groups fixture differs from the greedy partition"
    return f"{len(groups)} groups"


def _scheduler_oracle(n_diagonals: int, seed: int) -> str:
    rng = np.random.default_rng(seed)
    rel = default_conflict_relation()
    n = 0
    for diag in random_diagonals(rng, n_diagonals):
        m = ConflictMatrix(rel, diag)
        for mask in range(1 << LANE_COUNT):
            def can_open(lane: LaneId, mask=mask) -> bool:
                return bool(mask >> int(lane) & 1)
            got = select_open_set(m, can_open).open_set
            want = brute_force_greedy(diag, can_open, rel)
            assert got == want, f"diag={diag} mask={mask:03x}: {sorted(got)} != {sorted(want)}"
            n += 1
    return f"{n} selections"


def _worked_example() -> str:
    diag = [0] * LANE_COUNT
    for lane, s in ((LaneId.EL, 4), (LaneId.EF, 3), (LaneId.ER, 2), (LaneId.SR, 1)):
        diag[int(lane)] = s
    got = select_open_set(ConflictMatrix(default_conflict_relation(), tuple(diag)), lambda _: True).open_set
    want = {LaneId.EL, LaneId.EF, LaneId.ER, LaneId.SR}
    assert got == want, f"got {sorted(l.name for l in got)}"
    return "EL EF ER SR"


def _dwell_oracle(n: int, seed: int) -> str:
    rng = np.random.default_rng(seed)
    p = DwellParams()
    assert dwell_time(0.0, p) == p.y_max, "x=0 must give y_max"
    assert abs(dwell_time(1e4, p) - p.y_min) < 1e-6, "large x must approach y_min"
    worst = 0.0
    for x in rng.uniform(0, 200, size=n):
        worst = max(worst, rel_err(dwell_time(float(x), p), dwell_time_decimal(float(x), p)))
    assert worst <= 1e-9, f"max relative error {worst:.3e}"
    return f"max rel err {worst:.1e}"


def _time_to_empty_oracle(n: int, seed: int) -> str:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for d_in, d_out, l_in, l_out, v in zip(rng.random(n), rng.random(n), rng.uniform(1, 500, n),
                                           rng.uniform(1, 500, n), rng.uniform(0.5, 30, n)):
        obs = QueueObservation(float(d_in), float(l_in), float(d_out), float(l_out))
        worst = max(worst, rel_err(time_to_empty(obs, float(v)), time_to_empty_decimal(obs, float(v))))
    assert worst <= 1e-9, f"max relative error {worst:.3e}"
    return f"max rel err {worst:.1e}"


def _reset_examples() -> str:
    for x, t_max, want in ((5, 30, 0), (60, 30, 2), (30, 30, 0), (50, 30, 2), (120, 30, 3)):
        got = int(proportional_reset(x, t_max))
        assert got == want, f"proportional_reset({x}, {t_max}) = {got}, expected {want}"
    return "5 cases"


def _geometry_oracle(n: int, seed: int) -> str:
    rng = np.random.default_rng(seed)
    for _ in range(n):
        boxes, lines = random_scene(rng)
        got, want = assign_and_count(boxes, lines), brute_force_counts(boxes, lines)
        assert got == want, f"{got} != {want}"
        assert sum(got) == len(boxes), "count conservation"
    return f"{n} scenes"


def _mask_oracle(n: int, seed: int) -> str:
    rng = np.random.default_rng(seed)
    for _ in range(n):
        m = random_mask(rng)
        x0, y0, w, h = m.roi
        direct = sum(int(m.bits[y, x]) for y in range(y0, y0 + h) for x in range(x0, x0 + w)) / (w * h)
        assert mask_density(m) == direct, f"{mask_density(m)} != {direct}"
    return f"{n} masks"


def _line_example() -> str:
    a, b, c = CalibrationLine((0, 0), (0, 10)).coefficients
    assert (abs(a), b, c) == (1.0, 0.0, 0.0), f"got {(a, b, c)}"
    return "x=0 → (1, 0, 0)"


def _short_run() -> SimConfig:
    return SimConfig(steps=300, seed=7)


def _determinism() -> str:
    from core.simulator import run
    a, b = run(_short_run()), run(_short_run())
    assert a == b and a.per_vehicle_log == b.per_vehicle_log, "two identical runs differ"
    return f"throughput {a.throughput}"


def _safety() -> str:
    from core.simulator import run
    rec = run(_short_run())
    assert rec.collisions == 0, f"{rec.collisions} collisions"
    assert rec.empty_green_grants == 0, f"{rec.empty_green_grants} empty greens"
    return f"{rec.grants} grants"


def _rule_round_trip() -> str:
    m = new_matrix()
    back = apply_rule_change(apply_rule_change(m, LaneId.WR, LaneId.WF, True), LaneId.WR, LaneId.WF, False)
    assert back == m, "set-then-clear did not restore the relation"
    return "WR/WF"


def run_checks(data_dir: str | Path | None = None, n_diagonals: int = 10, n_random: int = 1000,
               seed: int = 2024) -> list[CheckResult]:
    d = Path(data_dir) if data_dir is not None else DATA_DIR
    checks: list[tuple[str, Callable[[], str]]] = [
        ("conflict_fixture", lambda: _fixture_fidelity(d)),
        ("conflict_table_shape", _table_shape),
        ("phase_groups_fixture", lambda: _phase_groups(d)),
        ("scheduler_vs_greedy_oracle", lambda: _scheduler_oracle(n_diagonals, seed)),
        ("scheduler_worked_example", _worked_example),
        ("dwell_time_oracle", lambda: _dwell_oracle(n_random, seed)),
        ("time_to_empty_oracle", lambda: _time_to_empty_oracle(n_random, seed)),
        ("proportional_reset", _reset_examples),
        ("lane_assignment_oracle", lambda: _geometry_oracle(n_random, seed)),
        ("mask_density_oracle", lambda: _mask_oracle(n_random, seed)),
        ("line_coefficients", _line_example),
        ("run_determinism", _determinism),
        ("run_safety", _safety),
        ("rule_change_round_trip", _rule_round_trip),
    ]
    results = [_check(name, fn) for name, fn in checks]
    for r in results:
        log.debug("check %s: %s (%s)", r.name, "ok" if r.passed else "FAIL", r.detail)
    return results
