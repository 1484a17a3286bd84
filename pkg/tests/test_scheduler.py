import numpy as np
import pytest

from core.config import Scenario, SimConfig
from core.errors import FixtureError, IllegalCase, InvariantViolation
from core.model import LANES, LANE_COUNT, LaneId
from core.oracles import brute_force_greedy, random_diagonals
from core.queues import DwellParams, QueueDynamics, QueueObservation, QueueState, dwell_time, tick
from core.scheduler import (
    AdaptiveController, ConflictMatrix, RuleChange, apply_rule_change, end_green, grant_green,
    new_matrix, parse_rule_script, proportional_reset, select_open_set, update_matrix,
)
from tests.conftest import make_obs

PARAMS = DwellParams()


def diag(**states):
    d = [0] * LANE_COUNT
    for name, s in states.items():
        d[int(LaneId[name])] = s
    return tuple(d)


def queues(**states):
    return {l: QueueDynamics(l, state=states.get(l.name, 0)) for l in LANES}


def always(_):
    return True

# -------- matrix --------

def test_update_matrix_copies_states(relation):
    m = update_matrix(new_matrix(relation), queues(ER=-1, NR=-1, SF=3))
    assert m.diagonal == diag(ER=-1, NR=-1, SF=3)
    assert m.relation is relation
    assert update_matrix(m, queues(ER=-1, NR=-1, SF=3)) == m


def test_update_matrix_all_zero(relation):
    assert update_matrix(new_matrix(relation), queues()).diagonal == (0,) * LANE_COUNT


def test_diagonal_domain_checked(relation):
    with pytest.raises(InvariantViolation):
        ConflictMatrix(relation, (6,) + (0,) * 11)
    with pytest.raises(InvariantViolation):
        ConflictMatrix(relation, (0,) * 11)

# -------- selection --------

def test_running_lanes_and_their_conflicts_are_excluded(relation):
    # ER and NR green, SF waiting at 3: SF is the next queue to open
    m = ConflictMatrix(relation, diag(ER=-1, NR=-1, SF=3))
    got = select_open_set(m, always).open_set
    assert LaneId.SF not in got  # SF conflicts with ER
    assert got.isdisjoint({LaneId.ER, LaneId.NR} | relation.conflicting_with(LaneId.ER)
                          | relation.conflicting_with(LaneId.NR))


def test_next_queue_after_running_pair(relation):
    m = ConflictMatrix(relation, diag(ER=-1, NR=-1, SR=3))
    res = select_open_set(m, always)
    assert res.seed is LaneId.SR
    assert relation.is_conflict_free(res.open_set | {LaneId.ER, LaneId.NR})


def test_worked_example(relation):
    m = ConflictMatrix(relation, diag(EL=4, EF=3, ER=2, SR=1))
    res = select_open_set(m, always)
    assert res.open_set == {LaneId.EL, LaneId.EF, LaneId.ER, LaneId.SR}
    assert res.order == (LaneId.EL, LaneId.EF, LaneId.ER, LaneId.SR)


def test_nothing_openable(relation):
    res = select_open_set(new_matrix(relation), lambda _: False)
    assert res.open_set == frozenset()
    assert res.marked_wa == frozenset(LANES)
    assert res.matrix.diagonal == (5,) * LANE_COUNT


def test_blocked_high_priority_lane_is_marked(relation):
    m = ConflictMatrix(relation, diag(EL=4, WF=2))
    res = select_open_set(m, lambda lane: lane is not LaneId.EL)
    assert res.marked_wa == {LaneId.EL}
    assert res.matrix.state(LaneId.EL) == 5
    assert res.seed is LaneId.WF
    assert m.state(LaneId.EL) == 4  # input untouched


def test_tie_goes_to_lower_index(relation):
    m = ConflictMatrix(relation, diag(WF=4, EL=4))
    got = select_open_set(m, always).open_set
    assert LaneId.WF in got and LaneId.EL not in got


def test_waiting_active_outranks_level_four(relation):
    m = ConflictMatrix(relation, diag(WF=4, EL=5))
    assert select_open_set(m, always).seed is LaneId.EL


def test_result_is_maximal(relation):
    rng = np.random.default_rng(11)
    for d in random_diagonals(rng, 30):
        mask = rng.random(LANE_COUNT) < 0.6
        res = select_open_set(ConflictMatrix(relation, d), lambda l: bool(mask[int(l)]))
        if not res.open_set:
            continue
        assert relation.is_conflict_free(res.open_set)
        running = [l for l in LANES if d[int(l)] < 0]
        blocked = set(running).union(*(relation.conflicting_with(l) for l in running)) if running else set()
        assert res.open_set.isdisjoint(blocked)
        for lane in LANES:
            if lane in res.open_set or lane in blocked or not mask[int(lane)]:
                continue
            assert not relation.is_conflict_free(res.open_set | {lane})
        openable = [l for l in LANES if l not in blocked and mask[int(l)]]
        assert res.seed == min(openable, key=lambda l: (-d[int(l)], int(l)))


def test_matches_greedy_oracle_on_all_masks(relation):
    rng = np.random.default_rng(5)
    for d in random_diagonals(rng, 2):
        m = ConflictMatrix(relation, d)
        for mask in range(1 << LANE_COUNT):
            def can_open(lane, mask=mask):
                return bool(mask >> int(lane) & 1)
            assert select_open_set(m, can_open).open_set == brute_force_greedy(d, can_open, relation)

# -------- green lifecycle --------

def test_grant_green_budgets(relation):
    qs = queues(WF=5)
    m = update_matrix(new_matrix(relation), qs)
    phase = grant_green(m, {LaneId.WF, LaneId.WR}, qs, now=10, t_max=30,
                        x_values={LaneId.WF: 50.0, LaneId.WR: 5.0})
    assert phase.budget == {LaneId.WF: 30.0, LaneId.WR: 5.0}
    assert phase.truncated == {LaneId.WF}
    assert qs[LaneId.WF].state == QueueState.ACTIVE  # WA → A
    assert qs[LaneId.WR].state == QueueState.ACTIVE
    assert phase.ends_at(LaneId.WR) == 15


def test_grant_green_rejects_unsafe_sets(relation):
    qs = queues(EL=-1)
    m = update_matrix(new_matrix(relation), qs)
    with pytest.raises(InvariantViolation):
        grant_green(m, {LaneId.WF, LaneId.NF}, qs, 0, 30, {l: 1.0 for l in LANES})
    with pytest.raises(InvariantViolation):
        grant_green(m, {LaneId.WR}, qs, 0, 30, {l: 1.0 for l in LANES})  # WR conflicts with running EL
    with pytest.raises(InvariantViolation):
        grant_green(m, set(), qs, 0, 30, {})


@pytest.mark.parametrize("x, t_max, level", [(5, 30, 0), (60, 30, 2), (30, 30, 0), (1000, 30, 4), (0, 30, 0)])
def test_proportional_reset(x, t_max, level):
    assert proportional_reset(x, t_max) == level


def test_end_green_resets_and_starts_cycle(relation):
    qs = queues()
    m = new_matrix(relation)
    phase = grant_green(m, {LaneId.WF, LaneId.WR}, qs, 0, 30, {LaneId.WF: 60.0, LaneId.WR: 5.0})
    end_green(phase, qs, now=5, params=PARAMS, lanes=[LaneId.WR])
    assert qs[LaneId.WR].state == QueueState.LEVEL_0
    assert qs[LaneId.WF].state == QueueState.ACTIVE
    end_green(phase, qs, now=30, params=PARAMS, lanes=[LaneId.WF])
    assert qs[LaneId.WF].state == QueueState.LEVEL_2
    assert qs[LaneId.WF].cycle_index == 1
    assert qs[LaneId.WF].dwell_y == pytest.approx(dwell_time(60.0, PARAMS))
    with pytest.raises(InvariantViolation):
        end_green(phase, qs, now=30, params=PARAMS, lanes=[LaneId.SL])

# -------- rule changes --------

def test_rule_change_forbids_co_opening(relation):
    m = apply_rule_change(new_matrix(relation), LaneId.WR, LaneId.WF, True)
    assert m.relation.conflicts(LaneId.WR, LaneId.WF)
    got = select_open_set(m, always).open_set
    assert not {LaneId.WR, LaneId.WF} <= got


def test_rule_change_clear_and_round_trip(relation):
    m = new_matrix(relation).with_states({LaneId.SF: 3})
    cleared = apply_rule_change(m, LaneId.WF, LaneId.EL, False)
    assert not cleared.relation.conflicts(LaneId.WF, LaneId.EL)
    assert cleared.diagonal == m.diagonal
    assert apply_rule_change(cleared, LaneId.WF, LaneId.EL, True) == m
    with pytest.raises(IllegalCase):
        apply_rule_change(m, LaneId.WF, LaneId.WF, True)


def test_parse_rule_script():
    rules = parse_rule_script("# header\n20 wr wf conflict\n\n10 WF EL clear  # lift\n")
    assert rules == [RuleChange(10, LaneId.WF, LaneId.EL, False), RuleChange(20, LaneId.WR, LaneId.WF, True)]


@pytest.mark.parametrize("text", ["5 WR WF", "x WR WF clear", "5 WR QQ clear", "5 WR WF maybe", "5 WR WR clear"])
def test_parse_rule_script_errors(text):
    with pytest.raises(FixtureError, match="line 2"):
        parse_rule_script("# ok\n" + text)

# -------- adaptive controller --------

def test_adaptive_controller_grants_and_expires():
    ctl = AdaptiveController(SimConfig())
    obs = make_obs({LaneId.WF: 2, LaneId.EL: 1})
    counts = {l: 0 for l in LANES} | {LaneId.WF: 2, LaneId.EL: 1}
    grants = ctl.refresh(0, obs, counts)
    assert [g.lane for g in grants] == [LaneId.WF]   # EL conflicts with WF; WF wins the tie by index
    assert grants[0].budget == pytest.approx(1.0)
    assert ctl.refresh(0.5, obs, counts) == []        # budget not yet spent
    later = ctl.refresh(1, make_obs({LaneId.EL: 1}), counts)
    assert LaneId.WF not in ctl.grants
    assert [g.lane for g in later] == [LaneId.EL]


def test_emergency_notice_only_with_priority():
    s1 = AdaptiveController(SimConfig(scenario=Scenario.S1_PRIORITY))
    s2 = AdaptiveController(SimConfig(scenario=Scenario.S2_NO_PRIORITY))
    s1.notify_emergency(LaneId.NL)
    s2.notify_emergency(LaneId.NL)
    assert s1.queues[LaneId.NL].emergency_flag
    assert not s2.queues[LaneId.NL].emergency_flag


def test_clearance_holds_conflicting_lanes():
    ctl = AdaptiveController(SimConfig(clearance_s=3.0))
    obs = make_obs({LaneId.WF: 1})
    counts = {l: 0 for l in LANES} | {LaneId.WF: 1}
    ctl.refresh(0, obs, counts)
    obs = make_obs({LaneId.EL: 1})
    counts = {l: 0 for l in LANES} | {LaneId.EL: 1}
    assert ctl.refresh(1, obs, counts) == []          # WF just ended, EL conflicts with it
    assert ctl.refresh(2, obs, counts) == []
    assert ctl.refresh(3, obs, counts) == []
    assert [g.lane for g in ctl.refresh(4, obs, counts)] == [LaneId.EL]


def test_queue_updates_do_not_depend_on_lane_order():
    rng = np.random.default_rng(17)
    cfg = SimConfig()
    ctl = AdaptiveController(cfg)
    shuffled = AdaptiveController(cfg)
    for lane in (LaneId.WR, LaneId.EF):
        ctl.notify_emergency(lane)
        shuffled.notify_emergency(lane)
    for t in range(120):
        obs = {
            lane: QueueObservation(float(rng.random()), 100.0, float(rng.random()), 100.0, bool(rng.random() < 0.05))
            for lane in LANES
        }
        ctl.update_queues(float(t), obs)
        for i in rng.permutation(LANE_COUNT):
            lane = LANES[int(i)]
            tick(shuffled.queues[lane], float(t), obs[lane], cfg.emergency_priority)
        assert ctl.queues == shuffled.queues
    assert any(q.state != QueueState.LEVEL_0 for q in ctl.queues.values())
