"""Protocol-scale checks. Deselected by default; run with `pytest -m slow`."""

import math

import numpy as np
import pytest

from commands.compare import compare_controllers
from commands.sweep import SweepSpec, run_sweep, trend_correlation
from core.config import ControllerKind, Scenario, SimConfig
from core.model import LANE_COUNT, LANES, LaneId, default_conflict_relation
from core.oracles import (
    brute_force_greedy, dwell_time_decimal, random_diagonals, rel_err, time_to_empty_decimal,
)
from core.queues import DwellParams, QueueObservation, dwell_time, time_to_empty
from core.scheduler import ConflictMatrix, select_open_set
from core.simulator import run

pytestmark = pytest.mark.slow

SEEDS = tuple(range(1, 11))


@pytest.fixture(scope="module")
def full_sweep():
    return run_sweep(SweepSpec(SimConfig(), seeds=SEEDS), jobs=4)


def test_sweep_is_collision_free_and_never_grants_empty_greens(full_sweep):
    assert len(full_sweep) == 16 * 2 * len(SEEDS)
    assert sum(rec.collisions for _, rec in full_sweep) == 0
    assert sum(rec.empty_green_grants for _, rec in full_sweep) == 0


def test_t_max_is_inert_at_default_geometry(full_sweep):
    # the longest possible X is 10 s, below the smallest swept cap
    for s in (Scenario.S1_PRIORITY, Scenario.S2_NO_PRIORITY):
        assert math.isnan(trend_correlation(full_sweep, s))


def test_emergency_priority_helps_emergency_vehicles():
    def medians(scenario):
        recs = [run(SimConfig(t_max=30, scenario=scenario, seed=s)) for s in SEEDS]
        return np.median([r.awt_ev for r in recs]), np.median([r.awt_cv for r in recs])

    ev1, cv1 = medians(Scenario.S1_PRIORITY)
    ev2, cv2 = medians(Scenario.S2_NO_PRIORITY)
    assert ev1 < ev2
    assert cv1 <= 1.25 * cv2


def test_adaptive_throughput_not_below_fixed_cycle():
    best = {}
    for t_max in (15.0, 30.0):
        results = compare_controllers(SimConfig(t_max=t_max), SEEDS, [ControllerKind.ADAPTIVE, ControllerKind.FIXED])
        for kind in (ControllerKind.ADAPTIVE, ControllerKind.FIXED):
            median = float(np.median([rec.throughput for k, _, rec in results if k is kind]))
            best[kind] = max(best.get(kind, 0.0), median)
    assert best[ControllerKind.ADAPTIVE] >= best[ControllerKind.FIXED]


def test_greedy_longest_starves_a_light_lane():
    # WF, NF and SL conflict pairwise; the two heavy lanes saturate
    weights = tuple(10.0 if l in (LaneId.WF, LaneId.NF) else 1.0 if l is LaneId.SL else 0.0 for l in LANES)
    base = SimConfig(lambda_cv=2.52, lambda_ev=0.0, lane_weights=weights,
                     scenario=Scenario.S2_NO_PRIORITY, steps=1800, seed=5)
    greedy = run(base.with_overrides(controller=ControllerKind.GREEDY))
    adaptive = run(base)
    sl = int(LaneId.SL)
    assert greedy.max_lane_wait[sl] >= 2 * adaptive.max_lane_wait[sl]
    assert adaptive.collisions == greedy.collisions == 0


def test_more_demand_more_throughput():
    low = run(SimConfig(lambda_cv=0.2, seed=3))
    high = run(SimConfig(lambda_cv=0.8, seed=3))
    assert high.throughput > low.throughput


def test_scheduler_matches_exhaustive_greedy():
    rng = np.random.default_rng(7)
    rel = default_conflict_relation()
    for diag in random_diagonals(rng, 200):
        m = ConflictMatrix(rel, diag)
        for mask in range(1 << LANE_COUNT):
            def can_open(lane, mask=mask):
                return bool(mask >> int(lane) & 1)
            assert select_open_set(m, can_open).open_set == brute_force_greedy(diag, can_open, rel)


def test_formulas_match_high_precision():
    rng = np.random.default_rng(11)
    p = DwellParams()
    assert dwell_time(0.0, p) == p.y_max
    assert abs(dwell_time(1e4, p) - p.y_min) < 1e-6
    for x in rng.uniform(0, 200, size=100_000):
        assert rel_err(dwell_time(float(x), p), dwell_time_decimal(float(x), p)) <= 1e-9
    n = 100_000
    for d_in, d_out, l_in, l_out, v in zip(rng.random(n), rng.random(n), rng.uniform(1, 500, n),
                                           rng.uniform(1, 500, n), rng.uniform(0.5, 30, n)):
        obs = QueueObservation(float(d_in), float(l_in), float(d_out), float(l_out))
        assert rel_err(time_to_empty(obs, float(v)), time_to_empty_decimal(obs, float(v))) <= 1e-9


@pytest.mark.parametrize("lam", [0.2, 0.4, 0.8])
def test_doubling_demand_does_not_lower_waiting_time(lam):
    def median_awt(rate):
        return float(np.median([run(SimConfig(lambda_cv=rate, seed=s)).awt_all for s in range(1, 6)]))

    assert median_awt(2 * lam) >= median_awt(lam)
