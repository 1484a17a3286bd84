"""
core/scheduler.py
-----------------
The intersection matrix and the distributed selection algorithm.

Responsibilities:
- ConflictMatrix: static conflict relation + a diagonal of live queue states
  (Active = -1, levels 0..4, Waiting-Active = 5).
- update_matrix: copy every queue's state onto the diagonal.
- select_open_set: choose a conflict-free, greedily maximal set of queues to
  open, seeded by the highest-priority openable queue.
- grant_green / end_green: the green-phase lifecycle with the T_max cap and
  the proportional priority reset after a truncated green.
- apply_rule_change + rule-change scripts: hot edits of the conflict relation.

Everything here is a pure function over snapshots, except end_green/grant_green
which drive the per-queue automata they are handed.
"""

from __future__ import annotations
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Iterable, Mapping, Optional
import logging
import math

from core.errors import ConfigError, FixtureError, IllegalCase, InvariantViolation
from core.model import LANES, LANE_COUNT, ConflictRelation, LaneId, default_conflict_relation, lane_from_label
from core.queues import (
    I_MAX, DwellParams, QueueDynamics, QueueObservation, QueueState,
    activate, mark_waiting_active, start_cycle, tick, time_to_empty,
)

if TYPE_CHECKING:
    from core.config import SimConfig

log = logging.getLogger(__name__)

CanOpen = Callable[[LaneId], bool]

# -------- Matrix --------

_VALID_DIAGONAL = frozenset(int(s) for s in QueueState)


@dataclass(frozen=True)
class ConflictMatrix:
    relation: ConflictRelation
    diagonal: tuple[int, ...] = (0,) * LANE_COUNT

    def __post_init__(self) -> None:
        if len(self.diagonal) != LANE_COUNT:
            raise InvariantViolation(f"diagonal needs {LANE_COUNT} entries, got {len(self.diagonal)}")
        bad = [v for v in self.diagonal if int(v) not in _VALID_DIAGONAL]
        if bad:
            raise InvariantViolation(f"diagonal values out of range: {bad}")
        object.__setattr__(self, "diagonal", tuple(int(v) for v in self.diagonal))

    def state(self, lane: LaneId) -> int:
        return self.diagonal[int(lane)]

    def with_states(self, states: Mapping[LaneId, int]) -> "ConflictMatrix":
        diag = list(self.diagonal)
        for lane, s in states.items():
            diag[int(lane)] = int(s)
        return replace(self, diagonal=tuple(diag))

    @property
    def running(self) -> frozenset[LaneId]:
        return frozenset(l for l in LANES if self.diagonal[int(l)] < 0)


def new_matrix(relation: ConflictRelation | None = None) -> ConflictMatrix:
    return ConflictMatrix(relation or default_conflict_relation())


def update_matrix(m: ConflictMatrix, queues: Mapping[LaneId, QueueDynamics]) -> ConflictMatrix:
    """Copy each queue's current state onto the diagonal; the relation is untouched."""
    diag = tuple(int(queues[lane].state) if lane in queues else m.diagonal[int(lane)] for lane in LANES)
    if diag == m.diagonal:
        return m
    return replace(m, diagonal=diag)


def apply_rule_change(m: ConflictMatrix, a: LaneId, b: LaneId, conflict: bool) -> ConflictMatrix:
    """Swap a cell between compatible and conflicting; the diagonal is preserved."""
    if a == b:
        raise IllegalCase(f"cannot change the rule of {LaneId(a).name} against itself")
    return replace(m, relation=m.relation.with_entry(a, b, conflict))

# -------- Selection --------

@dataclass(frozen=True)
class SelectionResult:
    open_set: frozenset[LaneId]
    marked_wa: frozenset[LaneId]     # scanned before the seed and not openable
    matrix: ConflictMatrix           # diagonal carries the Waiting-Active marks
    order: tuple[LaneId, ...] = ()   # open_set in the order lanes were added

    @property
    def seed(self) -> Optional[LaneId]:
        return self.order[0] if self.order else None


def _rank(diag: tuple[int, ...]) -> Callable[[LaneId], tuple[int, int]]:
    # highest state first, ties by ascending lane index
    return lambda lane: (-diag[int(lane)], int(lane))


def forbidden_set(m: ConflictMatrix) -> set[LaneId]:
    """Queues currently running plus every queue in conflict with one of them."""
    blocked: set[LaneId] = set(m.running)
    for lane in m.running:
        blocked |= m.relation.conflicting_with(lane)
    return blocked


def greedy_fill(seed: LaneId, candidates: Iterable[LaneId], rank: Callable[[LaneId], tuple],
                can_open: CanOpen, relation: ConflictRelation) -> list[LaneId]:
    """Grow {seed} by repeatedly taking the best-ranked queue compatible with all chosen ones."""
    chosen = [seed]
    pool = {l for l in candidates if l != seed and not relation.conflicts(seed, l)}
    while pool:
        p = min(pool, key=rank)
        pool.discard(p)
        if can_open(p):
            chosen.append(p)
            pool = {l for l in pool if not relation.conflicts(p, l)}
    return chosen


def select_open_set(m: ConflictMatrix, can_open: CanOpen) -> SelectionResult:
    """
    Return the set of queues to open.

    1. RunList = running queues; S = RunList ∪ their conflicts.
    2. Scan Q \\ S by descending state: the first openable queue seeds the set;
       scanned queues that cannot open are marked Waiting-Active.
    3. Greedily add the best-ranked openable queue compatible with the set.

    An empty result means "no new phase this round".
    """
    rank = _rank(m.diagonal)
    forbidden = forbidden_set(m)
    order = sorted((l for l in LANES if l not in forbidden), key=rank)

    diag = list(m.diagonal)
    marked: list[LaneId] = []
    seed: Optional[LaneId] = None
    for q in order:
        forbidden.add(q)
        if can_open(q):
            seed = q
            break
        diag[int(q)] = int(QueueState.WAITING_ACTIVE)
        marked.append(q)

    marked_matrix = replace(m, diagonal=tuple(diag)) if marked else m
    if seed is None:
        return SelectionResult(frozenset(), frozenset(marked), marked_matrix)

    remaining = [l for l in LANES if l not in forbidden]
    chosen = greedy_fill(seed, remaining, rank, can_open, m.relation)
    return SelectionResult(frozenset(chosen), frozenset(marked), marked_matrix, tuple(chosen))

# -------- Green phases --------

@dataclass(frozen=True)
class GreenPhase:
    open_set: frozenset[LaneId]
    granted_at: float
    budget: Mapping[LaneId, float]           # min(X, T_max) per lane
    x_at_grant: Mapping[LaneId, float]
    t_max: float
    relation: ConflictRelation = field(repr=False, compare=False, default=None)

    @property
    def truncated(self) -> frozenset[LaneId]:
        return frozenset(l for l in self.open_set if self.x_at_grant[l] > self.t_max)

    def ends_at(self, lane: LaneId) -> float:
        return self.granted_at + self.budget[lane]


def proportional_reset(x: float, t_max: float) -> QueueState:
    """
    Level a queue returns to after its green: 0 when it was fully served,
    otherwise round(I_max * (1 - T_max / X)) (halves round up), within 0..I_max.
    """
    if x <= t_max or x <= 0:
        return QueueState.LEVEL_0
    level = math.floor(I_MAX * (1.0 - t_max / x) + 0.5)
    return QueueState(max(0, min(I_MAX, level)))


def grant_green(m: ConflictMatrix, open_set: Iterable[LaneId], queues: Mapping[LaneId, QueueDynamics],
                now: float, t_max: float, x_values: Mapping[LaneId, float]) -> GreenPhase:
    """Turn every member Active with budget min(X, T_max)."""
    members = frozenset(open_set)
    if not members:
        raise InvariantViolation("a green phase needs at least one queue")
    if not m.relation.is_conflict_free(members):
        raise InvariantViolation(f"conflicting queues in one phase: {sorted(l.name for l in members)}")
    running = m.running
    for lane in members:
        if lane in running:
            raise InvariantViolation(f"{lane.name} is already green")
        clash = m.relation.conflicting_with(lane) & running
        if clash:
            raise InvariantViolation(f"{lane.name} conflicts with running {sorted(l.name for l in clash)}")

    budget: dict[LaneId, float] = {}
    xs: dict[LaneId, float] = {}
    for lane in sorted(members):
        x = float(x_values[lane])
        xs[lane] = x
        budget[lane] = min(x, t_max)
        activate(queues[lane])
        if x > t_max:
            log.debug("t=%s %s green truncated: X=%.3f > T_max=%.3f", now, lane.name, x, t_max)
    log.debug("t=%s green %s", now, ",".join(l.name for l in sorted(members)))
    return GreenPhase(members, float(now), budget, xs, float(t_max), m.relation)


def end_green(phase: GreenPhase, queues: Mapping[LaneId, QueueDynamics], now: float,
              params: DwellParams, lanes: Iterable[LaneId] | None = None) -> list[QueueDynamics]:
    """Close the green of `lanes` (default: the whole phase) and start their next cycle."""
    ended: list[QueueDynamics] = []
    for lane in sorted(phase.open_set if lanes is None else lanes):
        if lane not in phase.open_set:
            raise InvariantViolation(f"{lane.name} is not part of this phase")
        x = phase.x_at_grant[lane]
        q = queues[lane]
        start_cycle(q, x_prev=x, params=params, now=now, reset_state=proportional_reset(x, phase.t_max))
        ended.append(q)
    return ended

# -------- Rule-change scripts --------

@dataclass(frozen=True)
class RuleChange:
    step: int
    a: LaneId
    b: LaneId
    conflict: bool


def parse_rule_script(text: str) -> list[RuleChange]:
    """
    One change per line: `<step> <laneA> <laneB> <conflict|clear>`.
    Blank lines and '#' comments are ignored. Result is ordered by step (stable).
    """
    out: list[RuleChange] = []
    for n, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 4:
            raise FixtureError(f"rule script line {n}: expected 4 fields, got {len(parts)}")
        step_s, a_s, b_s, verb = parts
        try:
            step = int(step_s)
        except ValueError:
            raise FixtureError(f"rule script line {n}: bad step {step_s!r}") from None
        if step < 0:
            raise FixtureError(f"rule script line {n}: step must be >= 0")
        verb = verb.lower()
        if verb not in {"conflict", "clear"}:
            raise FixtureError(f"rule script line {n}: expected conflict|clear, got {verb!r}")
        try:
            a, b = lane_from_label(a_s), lane_from_label(b_s)
        except ConfigError as e:
            raise FixtureError(f"rule script line {n}: {e}") from None
        if a == b:
            raise FixtureError(f"rule script line {n}: {a.name} paired with itself")
        out.append(RuleChange(step, a, b, verb == "conflict"))
    out.sort(key=lambda r: r.step)
    return out


def load_rule_script(path: str | Path) -> list[RuleChange]:
    p = Path(path)
    try:
        return parse_rule_script(p.read_text(encoding="utf-8"))
    except OSError as e:
        raise FixtureError(f"cannot read rule script {p}: {e}") from e

# -------- Controllers --------
# A controller owns the matrix, the 12 queue automata and the live grants.
# The simulator drives it once per step: update_queues → refresh → discharge.

@dataclass(frozen=True)
class Grant:
    """One lane's green: frozen budget and the relation it was checked against."""
    lane: LaneId
    granted_at: float
    budget: float
    x: float
    relation: ConflictRelation = field(repr=False, compare=False, default=None)
    phase: Optional[GreenPhase] = field(repr=False, compare=False, default=None)

    @property
    def truncated(self) -> bool:
        return self.x > self.budget

    @property
    def empty(self) -> bool:
        return self.x <= 0

    def remaining(self, now: float) -> float:
        return self.budget - (now - self.granted_at)


class SignalController:
    """Shared lifecycle: expire finished greens, then select when the cadence allows."""

    kind = "base"

    def __init__(self, config: "SimConfig", relation: ConflictRelation | None = None):
        self.config = config
        self.params: DwellParams = config.dwell
        self.matrix = new_matrix(relation)
        self.queues: dict[LaneId, QueueDynamics] = {l: QueueDynamics.fresh(l, self.params) for l in LANES}
        self.grants: dict[LaneId, Grant] = {}
        self.ended_at: dict[LaneId, float] = {}

    # ---- views ----

    @property
    def relation(self) -> ConflictRelation:
        return self.matrix.relation

    def active(self) -> frozenset[LaneId]:
        return frozenset(self.grants)

    def diagonal(self) -> tuple[int, ...]:
        return update_matrix(self.matrix, self.queues).diagonal

    def x_values(self, obs: Mapping[LaneId, QueueObservation]) -> dict[LaneId, float]:
        return {lane: time_to_empty(obs[lane], self.config.v_cross) for lane in LANES}

    def snapshot(self, now: float) -> ConflictMatrix:
        """Current states; lanes still inside their clearance interval count as running."""
        m = update_matrix(self.matrix, self.queues)
        clearing = {
            lane: QueueState.ACTIVE for lane, t in self.ended_at.items()
            if lane not in self.grants and now - t < self.config.clearance_s
        }
        return m.with_states(clearing) if clearing else m

    # ---- inputs ----

    def apply_rule_change(self, a: LaneId, b: LaneId, conflict: bool) -> None:
        self.matrix = apply_rule_change(self.matrix, a, b, conflict)
        log.debug("rule change %s/%s → %s", a.name, b.name, "conflict" if conflict else "clear")

    def notify_emergency(self, lane: LaneId) -> None:
        pass

    def update_queues(self, now: float, obs: Mapping[LaneId, QueueObservation]) -> None:
        pass

    # ---- lifecycle ----

    def refresh(self, now: float, obs: Mapping[LaneId, QueueObservation],
                counts: Mapping[LaneId, int]) -> list[Grant]:
        ended = self.expire(now, obs)
        if self.grants and not ended:
            return []
        granted = self.select(now, obs, counts)
        self.matrix = update_matrix(self.matrix, self.queues)
        return granted

    def expire(self, now: float, obs: Mapping[LaneId, QueueObservation]) -> list[LaneId]:
        done = [lane for lane, g in sorted(self.grants.items()) if self.finished(g, now, obs[lane])]
        for lane in done:
            self.release(self.grants.pop(lane), now)
            self.ended_at[lane] = now
        return done

    def finished(self, g: Grant, now: float, obs: QueueObservation) -> bool:
        return g.remaining(now) <= 0 or obs.entry_density == 0

    def release(self, g: Grant, now: float) -> None:
        start_cycle(self.queues[g.lane], x_prev=g.x, params=self.params, now=now)

    def select(self, now: float, obs: Mapping[LaneId, QueueObservation],
               counts: Mapping[LaneId, int]) -> list[Grant]:
        raise NotImplementedError

    def _grant(self, lane: LaneId, now: float, budget: float, x: float,
               phase: Optional[GreenPhase] = None) -> Grant:
        if lane in self.grants:
            raise InvariantViolation(f"{lane.name} is already green")
        clash = self.relation.conflicting_with(lane) & self.active()
        if clash:
            raise InvariantViolation(f"{lane.name} conflicts with running {sorted(l.name for l in clash)}")
        activate(self.queues[lane])
        g = Grant(lane, float(now), float(budget), float(x), self.relation, phase)
        self.grants[lane] = g
        return g


class AdaptiveController(SignalController):
    """The queue-state controller: per-queue levels, emergency preemption, matrix selection."""

    kind = "adaptive"

    def notify_emergency(self, lane: LaneId) -> None:
        if self.config.emergency_priority:
            self.queues[lane].emergency_flag = True

    def update_queues(self, now: float, obs: Mapping[LaneId, QueueObservation]) -> None:
        for lane in LANES:
            tick(self.queues[lane], now, obs[lane], self.config.emergency_priority)

    def release(self, g: Grant, now: float) -> None:
        end_green(g.phase, self.queues, now, self.params, lanes=[g.lane])

    def select(self, now: float, obs: Mapping[LaneId, QueueObservation],
               counts: Mapping[LaneId, int]) -> list[Grant]:
        xs = self.x_values(obs)
        m = self.snapshot(now)
        result = select_open_set(m, lambda lane: xs[lane] > 0)
        for lane in sorted(result.marked_wa):
            # an empty lane is only marked on the snapshot
            if obs[lane].entry_density > 0:
                mark_waiting_active(self.queues[lane])
        if not result.open_set:
            return []
        phase = grant_green(m, result.open_set, self.queues, now, self.config.t_max, xs)
        grants = [
            Grant(lane, float(now), phase.budget[lane], phase.x_at_grant[lane], phase.relation, phase)
            for lane in sorted(phase.open_set)
        ]
        self.grants.update((g.lane, g) for g in grants)
        return grants
