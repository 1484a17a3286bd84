"""
core/queues.py
--------------
Per-queue controller automaton.

Each entry queue runs the same loop independently:
- escalate its internal level 0..4 every Y_i seconds while vehicles are present,
- jump to level 4 / Waiting-Active when an emergency vehicle is seen,
- go Active when the scheduler grants green, and start a new cycle when the
  green ends (Y_i recomputed from the previous cycle's time-to-empty X).

No queue ever reads another queue's state; the scheduler reads all of them
through a matrix snapshot.
"""

from __future__ import annotations
from dataclasses import dataclass
from enum import IntEnum
import math

from core.errors import ConfigError, DomainError
from core.model import LaneId

# -------- States --------

class QueueState(IntEnum):
    ACTIVE = -1          # green
    LEVEL_0 = 0
    LEVEL_1 = 1
    LEVEL_2 = 2
    LEVEL_3 = 3
    LEVEL_4 = 4
    WAITING_ACTIVE = 5   # earned green, blocked

    @property
    def is_internal(self) -> bool:
        return 0 <= self <= I_MAX


I_MAX = 4

# -------- Parameters & observations --------

@dataclass(frozen=True)
class DwellParams:
    """Y = y_min + (y_max - y_min) * a ** X_prev."""
    a: float = 4.5 / 5
    y_min: float = 0.5
    y_max: float = 15.0

    def __post_init__(self) -> None:
        if not 0 < self.a < 1:
            raise ConfigError(f"dwell a must be in (0, 1), got {self.a}", key="dwell_a")
        if not self.y_min > 0:
            raise ConfigError(f"dwell y_min must be > 0, got {self.y_min}", key="dwell_y_min")
        if not (self.y_max > self.y_min and math.isfinite(self.y_max)):
            raise ConfigError(f"dwell y_max must be finite and > y_min, got {self.y_max}", key="dwell_y_max")


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else 1.0 if v > 1.0 else float(v)


@dataclass(frozen=True)
class QueueObservation:
    """What the camera facing one entry queue reports at time t."""
    entry_density: float
    entry_length_m: float
    exit_density: float
    exit_length_m: float
    emergency_present: bool = False

    def __post_init__(self) -> None:
        if not self.entry_length_m > 0:
            raise ConfigError(f"entry length must be > 0, got {self.entry_length_m}", key="lane_length_m")
        if not self.exit_length_m > 0:
            raise ConfigError(f"exit length must be > 0, got {self.exit_length_m}", key="exit_length_m")
        object.__setattr__(self, "entry_density", _clamp01(self.entry_density))
        object.__setattr__(self, "exit_density", _clamp01(self.exit_density))


def observe(entry_occupied_m: float, entry_length_m: float,
            exit_occupied_m: float, exit_length_m: float,
            emergency_present: bool = False) -> QueueObservation:
    """Densities from vehicle footprints: occupied length over lane length."""
    return QueueObservation(
        entry_density=entry_occupied_m / entry_length_m if entry_length_m > 0 else 0.0,
        entry_length_m=entry_length_m,
        exit_density=exit_occupied_m / exit_length_m if exit_length_m > 0 else 0.0,
        exit_length_m=exit_length_m,
        emergency_present=emergency_present,
    )

# -------- Formulas --------

def time_to_empty(obs: QueueObservation, v_cross: float) -> float:
    """
    X = min((1 - d_O) * L_O, d_I * L_I) / V.
    Zero when the entry queue is empty or the exit queue is full.
    """
    if not v_cross > 0:
        raise ConfigError(f"crossing speed must be > 0, got {v_cross}", key="v_cross")
    free_exit = (1.0 - obs.exit_density) * obs.exit_length_m
    occupied_entry = obs.entry_density * obs.entry_length_m
    return max(0.0, min(free_exit, occupied_entry)) / v_cross


def dwell_time(x_prev: float, params: DwellParams) -> float:
    """Seconds between level increments, shrinking as the last discharge grows."""
    if x_prev < 0:
        raise DomainError(f"x_prev must be >= 0, got {x_prev}")
    return params.y_min + (params.y_max - params.y_min) * params.a ** x_prev

# -------- Automaton --------

@dataclass
class QueueDynamics:
    lane: LaneId
    state: QueueState = QueueState.LEVEL_0
    cycle_index: int = 0
    dwell_y: float = 15.0
    level_timer_start: float = 0.0
    emergency_flag: bool = False
    last_empty_time_x: float = 0.0

    def __post_init__(self) -> None:
        self.state = QueueState(self.state)

    @classmethod
    def fresh(cls, lane: LaneId, params: DwellParams, now: float = 0.0) -> "QueueDynamics":
        # no history: X_prev = 0, so the first cycle dwells y_max
        return cls(lane=lane, dwell_y=dwell_time(0.0, params), level_timer_start=now)


def update_internal_state(q: QueueDynamics, now: float, obs: QueueObservation) -> QueueState:
    """ChangeLevel + IncreaseStatus. Active and Waiting-Active are left alone."""
    q.state = QueueState(q.state)
    if not q.state.is_internal:
        return q.state
    if now - q.level_timer_start >= q.dwell_y and obs.entry_density != 0:
        q.state = QueueState(min(int(q.state) + 1, I_MAX))
        q.level_timer_start = now
    return q.state


def handle_emergency(q: QueueDynamics) -> QueueState:
    """SetPriority + ResetEvent: levels 0..3 jump to 4, level 4 goes Waiting-Active."""
    if not q.emergency_flag:
        return q.state
    q.state = QueueState(q.state)
    if q.state.is_internal:
        q.state = QueueState.LEVEL_4 if q.state < I_MAX else QueueState.WAITING_ACTIVE
    q.emergency_flag = False
    return q.state


def tick(q: QueueDynamics, now: float, obs: QueueObservation, emergency_priority: bool = True) -> QueueState:
    """One pass of the per-queue loop: emergency first, otherwise level escalation."""
    if emergency_priority and obs.emergency_present:
        q.emergency_flag = True
    if emergency_priority and q.emergency_flag:
        return handle_emergency(q)
    q.emergency_flag = False
    return update_internal_state(q, now, obs)


def activate(q: QueueDynamics) -> QueueState:
    q.state = QueueState.ACTIVE
    return q.state


def mark_waiting_active(q: QueueDynamics) -> QueueState:
    if q.state != QueueState.ACTIVE:
        q.state = QueueState.WAITING_ACTIVE
    return q.state


def start_cycle(q: QueueDynamics, x_prev: float, params: DwellParams, now: float,
                reset_state: QueueState = QueueState.LEVEL_0) -> QueueDynamics:
    """Init(): new cycle after a green; Y_i = f(X_{i-1}), timer and Event reset."""
    q.cycle_index += 1
    q.last_empty_time_x = x_prev
    q.dwell_y = dwell_time(x_prev, params)
    q.state = QueueState(reset_state)
    q.level_timer_start = now
    q.emergency_flag = False
    return q
