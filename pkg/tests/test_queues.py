import numpy as np
import pytest

from core.errors import ConfigError, DomainError
from core.model import LaneId
from core.queues import (
    I_MAX, DwellParams, QueueDynamics, QueueObservation, QueueState, activate, dwell_time,
    handle_emergency, mark_waiting_active, observe, start_cycle, tick, time_to_empty,
    update_internal_state,
)

PARAMS = DwellParams()


def obs(d_in=0.5, d_out=0.0, emergency=False):
    return QueueObservation(d_in, 100.0, d_out, 100.0, emergency)


# -------- formulas --------

def test_time_to_empty_examples():
    assert time_to_empty(QueueObservation(0.5, 100, 0.2, 100), 10) == pytest.approx(5.0)
    assert time_to_empty(QueueObservation(0.0, 100, 0.2, 100), 10) == 0.0
    assert time_to_empty(QueueObservation(0.7, 100, 1.0, 100), 10) == 0.0


def test_time_to_empty_bounded_and_validated():
    assert time_to_empty(QueueObservation(1.0, 80, 0.0, 60), 10) == pytest.approx(6.0)
    with pytest.raises(ConfigError):
        time_to_empty(obs(), 0.0)


def test_observation_clamps_densities():
    o = observe(150.0, 100.0, -5.0, 100.0)
    assert o.entry_density == 1.0 and o.exit_density == 0.0
    with pytest.raises(ConfigError):
        QueueObservation(0.1, 0.0, 0.1, 100.0)


def test_dwell_time_examples():
    assert dwell_time(0.0, PARAMS) == 15.0
    assert dwell_time(10.0, PARAMS) == pytest.approx(0.5 + 14.5 * 0.9 ** 10, abs=1e-9)
    assert dwell_time(10.0, PARAMS) == pytest.approx(5.556, abs=1e-3)
    assert dwell_time(1000.0, PARAMS) == pytest.approx(0.5, abs=1e-6)


def test_dwell_time_strictly_decreasing():
    xs = [0.0, 0.1, 1.0, 5.0, 10.0, 30.0]
    ys = [dwell_time(x, PARAMS) for x in xs]
    assert all(a > b for a, b in zip(ys, ys[1:]))
    assert all(PARAMS.y_min < y <= PARAMS.y_max for y in ys)


def test_dwell_time_rejects_negative():
    with pytest.raises(DomainError):
        dwell_time(-1.0, PARAMS)


@pytest.mark.parametrize("kwargs", [{"a": 1.0}, {"a": 0.0}, {"y_min": 0.0}, {"y_min": 5.0, "y_max": 5.0}])
def test_dwell_params_validation(kwargs):
    with pytest.raises(ConfigError):
        DwellParams(**kwargs)

# -------- automaton --------

def test_internal_state_increments_after_dwell():
    q = QueueDynamics(LaneId.NF, state=QueueState.LEVEL_2, dwell_y=5.0, level_timer_start=0.0)
    assert update_internal_state(q, 4.0, obs(0.3)) == QueueState.LEVEL_2
    assert update_internal_state(q, 5.0, obs(0.3)) == QueueState.LEVEL_3
    assert q.level_timer_start == 5.0


def test_internal_state_caps_at_four():
    q = QueueDynamics(LaneId.NF, state=QueueState.LEVEL_4, dwell_y=1.0)
    assert update_internal_state(q, 10.0, obs(0.5)) == QueueState.LEVEL_4


def test_internal_state_needs_vehicles():
    q = QueueDynamics(LaneId.NF, state=QueueState.LEVEL_1, dwell_y=1.0)
    assert update_internal_state(q, 10.0, obs(0.0)) == QueueState.LEVEL_1


@pytest.mark.parametrize("state", [QueueState.ACTIVE, QueueState.WAITING_ACTIVE])
def test_controller_states_untouched(state):
    q = QueueDynamics(LaneId.NF, state=state, dwell_y=1.0)
    assert update_internal_state(q, 100.0, obs(0.9)) == state


@pytest.mark.parametrize("before, after", [
    (QueueState.LEVEL_2, QueueState.LEVEL_4),
    (QueueState.LEVEL_0, QueueState.LEVEL_4),
    (QueueState.LEVEL_4, QueueState.WAITING_ACTIVE),
    (QueueState.ACTIVE, QueueState.ACTIVE),
    (QueueState.WAITING_ACTIVE, QueueState.WAITING_ACTIVE),
])
def test_handle_emergency(before, after):
    q = QueueDynamics(LaneId.EL, state=before, emergency_flag=True)
    assert handle_emergency(q) == after
    assert q.emergency_flag is False


def test_tick_emergency_respects_priority_switch():
    q = QueueDynamics(LaneId.EL, state=QueueState.LEVEL_1, dwell_y=100.0)
    assert tick(q, 0.0, obs(0.2, emergency=True), emergency_priority=False) == QueueState.LEVEL_1
    assert tick(q, 0.0, obs(0.2, emergency=True), emergency_priority=True) == QueueState.LEVEL_4


def test_monotone_escalation_within_four_dwells():
    q = QueueDynamics.fresh(LaneId.SR, PARAMS)
    seen = []
    for t in range(0, int(4 * PARAMS.y_max) + 1):
        seen.append(tick(q, float(t), obs(0.1)))
    assert seen == sorted(seen)
    assert seen[-1] == QueueState.LEVEL_4


def test_start_cycle_recomputes_dwell():
    q = QueueDynamics.fresh(LaneId.SR, PARAMS)
    activate(q)
    start_cycle(q, x_prev=30.0, params=PARAMS, now=42.0)
    assert q.state == QueueState.LEVEL_0
    assert q.cycle_index == 1
    assert q.dwell_y == pytest.approx(dwell_time(30.0, PARAMS))
    assert q.level_timer_start == 42.0 and q.last_empty_time_x == 30.0
    start_cycle(q, x_prev=0.0, params=PARAMS, now=50.0, reset_state=QueueState.LEVEL_2)
    assert q.cycle_index == 2 and q.state == QueueState.LEVEL_2 and q.dwell_y == PARAMS.y_max


def test_waiting_active_never_overrides_green():
    q = QueueDynamics(LaneId.WR, state=QueueState.LEVEL_3)
    assert mark_waiting_active(q) == QueueState.WAITING_ACTIVE
    activate(q)
    assert mark_waiting_active(q) == QueueState.ACTIVE


def test_state_encoding():
    assert int(QueueState.ACTIVE) == -1 and int(QueueState.WAITING_ACTIVE) == I_MAX + 1
    assert QueueState.LEVEL_3.is_internal and not QueueState.ACTIVE.is_internal


@pytest.mark.parametrize("seed", range(5))
def test_random_interleavings_stay_in_state_domain(seed):
    rng = np.random.default_rng(seed)
    q = QueueDynamics.fresh(LaneId.NF, PARAMS)
    now = 0.0
    for _ in range(2000):
        op = int(rng.integers(5))
        if op == 0:
            now += float(rng.uniform(0, 20))
            tick(q, now, obs(float(rng.random()), float(rng.random()), bool(rng.random() < 0.2)),
                 emergency_priority=bool(rng.random() < 0.8))
        elif op == 1:
            q.emergency_flag = bool(rng.random() < 0.5)
            handle_emergency(q)
        elif op == 2:
            activate(q)
        elif op == 3:
            mark_waiting_active(q)
        else:
            start_cycle(q, x_prev=float(rng.uniform(0, 60)), params=PARAMS, now=now,
                        reset_state=QueueState(int(rng.integers(0, I_MAX + 1))))
        assert -1 <= int(q.state) <= I_MAX + 1
        assert q.dwell_y >= PARAMS.y_min
