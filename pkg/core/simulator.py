"""
core/simulator.py
-----------------
Discrete-time world for one intersection (1 step = 1 s).

Each step:
  1. rule changes due this step are applied to the controller's relation
  2. Poisson arrivals (classic, then emergency) join their lane's tail,
     or are rejected as spillback when the lane is full
  3. per-lane observations: entry/exit densities, emergency presence
  4. queue automata tick
  5. the controller expires finished greens and may grant new ones
  6. green lanes discharge at v_cross / vehicle_length vehicles per second
     into their exit road while it has room
  7. exit roads drain at exit_drain_rate
  8. collision check, optional signal trace row

Randomness: three PCG64 streams spawned from one SeedSequence(seed), one each
for classic arrivals, emergency arrivals and lane choice. Arrivals never
depend on the controller, so different controllers see identical demand.
"""

from __future__ import annotations
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Iterable, Optional, Sequence
import logging

import numpy as np

from core.baselines import make_controller
from core.config import SimConfig
from core.errors import InvariantViolation
from core.metrics import MetricsCollector, MetricsRecord
from core.model import LANES, ConflictRelation, LaneId, Road, Vehicle, VehicleClass, exit_road
from core.queues import QueueObservation, observe
from core.scheduler import RuleChange, SignalController

log = logging.getLogger(__name__)

_EPS = 1e-9

# -------- Queues --------

@dataclass
class EntryQueueSim:
    lane: LaneId
    length_m: float
    vehicles: deque[Vehicle] = field(default_factory=deque)
    occupied_m: float = 0.0
    credit: float = 0.0          # fractional discharge carried between steps

    def __len__(self) -> int:
        return len(self.vehicles)

    def has_room(self, length_m: float) -> bool:
        return self.occupied_m + length_m <= self.length_m + _EPS

    def push(self, v: Vehicle) -> None:
        self.vehicles.append(v)
        self.occupied_m += v.length_m

    def pop(self) -> Vehicle:
        v = self.vehicles.popleft()
        self.occupied_m = max(0.0, self.occupied_m - v.length_m) if self.vehicles else 0.0
        return v

    @property
    def has_emergency(self) -> bool:
        return any(v.is_emergency for v in self.vehicles)


class ExitState(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass
class ExitQueueSim:
    road: Road
    length_m: float
    occupied_m: float = 0.0

    @property
    def state(self) -> ExitState:
        return ExitState.CLOSED if self.occupied_m >= self.length_m - _EPS else ExitState.OPEN

    @property
    def free_m(self) -> float:
        return max(0.0, self.length_m - self.occupied_m)

    def accept(self, length_m: float) -> None:
        self.occupied_m = min(self.length_m, self.occupied_m + length_m)

    def drain(self, meters: float) -> None:
        self.occupied_m = max(0.0, self.occupied_m - meters)

# -------- Randomness --------

@dataclass
class ArrivalStreams:
    cv: np.random.Generator
    ev: np.random.Generator
    lane: np.random.Generator


def make_streams(seed: int) -> ArrivalStreams:
    cv, ev, lane = (np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(3))
    return ArrivalStreams(cv=cv, ev=ev, lane=lane)

# -------- World --------

TRACE_HEADER: tuple[str, ...] = ("step",) + tuple(l.name for l in LANES)


class World:
    def __init__(self, config: SimConfig, controller: SignalController | None = None,
                 rules: Sequence[RuleChange] = (), relation: ConflictRelation | None = None,
                 trace: bool = False):
        self.config = config.validate()
        self.controller = controller or make_controller(config, relation)
        self.entries = {lane: EntryQueueSim(lane, config.lane_length_m) for lane in LANES}
        self.exits = {road: ExitQueueSim(road, config.exit_length_m) for road in Road}
        self.streams = make_streams(config.seed)
        w = np.asarray(config.lane_weights, dtype=float)
        self.lane_p = w / w.sum()
        self.rules = deque(sorted(rules, key=lambda r: r.step))
        self.metrics = MetricsCollector(config.metrics_first_n)
        self.now = 0
        self.next_id = 0
        self.trace_rows: Optional[list[list[int]]] = [] if trace else None

    # ---- step pieces ----

    def apply_rules(self, step: int) -> None:
        while self.rules and self.rules[0].step <= step:
            r = self.rules.popleft()
            self.controller.apply_rule_change(r.a, r.b, r.conflict)
            log.debug("t=%s applied rule %s %s %s", step, r.a.name, r.b.name, "conflict" if r.conflict else "clear")

    def admit(self, lane: LaneId, vclass: VehicleClass, step: int) -> Optional[Vehicle]:
        v = Vehicle(self.next_id, vclass, lane, step, self.config.vehicle_length_m)
        self.next_id += 1
        entry = self.entries[lane]
        if not entry.has_room(v.length_m):
            self.metrics.spillback_rejections += 1
            return None
        entry.push(v)
        self.metrics.arrivals_accepted += 1
        if v.is_emergency:
            self.controller.notify_emergency(lane)
        return v

    def spawn_arrivals(self, step: int) -> list[Vehicle]:
        cfg = self.config
        n_cv = int(self.streams.cv.poisson(cfg.lambda_cv))
        n_ev = int(self.streams.ev.poisson(cfg.lambda_ev))
        classes = [VehicleClass.CLASSIC] * n_cv + [VehicleClass.EMERGENCY] * n_ev
        if not classes:
            return []
        # one draw per generated vehicle, admitted or not
        picks = self.streams.lane.choice(len(LANES), size=len(classes), p=self.lane_p)
        rejected_before = self.metrics.spillback_rejections
        admitted = [v for v in (self.admit(LANES[int(i)], c, step) for i, c in zip(picks, classes)) if v]
        if self.metrics.spillback_rejections - rejected_before > 1:
            log.warning("t=%s spillback burst: %d arrivals rejected", step,
                        self.metrics.spillback_rejections - rejected_before)
        return admitted

    def observations(self) -> dict[LaneId, QueueObservation]:
        cfg = self.config
        out: dict[LaneId, QueueObservation] = {}
        for lane in LANES:
            entry = self.entries[lane]
            ex = self.exits[exit_road(lane)]
            out[lane] = observe(
                entry.occupied_m, cfg.lane_length_m, ex.occupied_m, cfg.exit_length_m,
                emergency_present=cfg.emergency_priority and entry.has_emergency,
            )
        return out

    def discharge(self, step: int) -> None:
        rate = self.config.discharge_rate
        grants = self.controller.grants
        for lane in LANES:
            entry = self.entries[lane]
            g = grants.get(lane)
            if g is None:
                entry.credit = 0.0
                continue
            remaining = g.remaining(step)
            if remaining <= 0:
                continue
            entry.credit += rate * min(1.0, remaining)
            ex = self.exits[exit_road(lane)]
            while entry.vehicles and entry.credit >= 1.0 - _EPS:
                head = entry.vehicles[0]
                if ex.free_m + _EPS < head.length_m:
                    break
                v = entry.pop()
                entry.credit -= 1.0
                v.depart(step)
                ex.accept(v.length_m)
                self.metrics.on_departure(v)
            if not entry.vehicles:
                entry.credit = 0.0
            entry.credit = min(entry.credit, 1.0)

    def drain_exits(self) -> None:
        for ex in self.exits.values():
            ex.drain(self.config.drain_rate)

    def check_collisions(self) -> int:
        n = 0
        for ga, gb in combinations(sorted(self.controller.grants.values(), key=lambda g: g.lane), 2):
            later = ga if ga.granted_at >= gb.granted_at else gb
            if later.relation.conflicts(ga.lane, gb.lane):
                n += 1
        if n:
            log.warning("t=%s %d conflicting greens", self.now, n)
        self.metrics.collisions += n
        return n

    def check_conservation(self) -> None:
        queued = sum(len(e) for e in self.entries.values())
        if self.metrics.arrivals_accepted != len(self.metrics.departures) + queued:
            raise InvariantViolation(
                f"t={self.now}: accepted {self.metrics.arrivals_accepted} != "
                f"departed {len(self.metrics.departures)} + queued {queued}"
            )

    # ---- driver ----

    def step(self) -> None:
        t = self.now
        self.apply_rules(t)
        self.spawn_arrivals(t)
        obs = self.observations()
        self.controller.update_queues(t, obs)
        counts = {lane: len(self.entries[lane]) for lane in LANES}
        self.metrics.on_grants(self.controller.refresh(t, obs, counts))
        self.discharge(t)
        self.drain_exits()
        self.check_collisions()
        self.check_conservation()
        if self.trace_rows is not None:
            self.trace_rows.append([t, *self.controller.diagonal()])
        self.now += 1

    def queued_vehicles(self) -> Iterable[Vehicle]:
        for lane in LANES:
            yield from self.entries[lane].vehicles

    def result(self) -> MetricsRecord:
        return self.metrics.record(self.queued_vehicles(), self.now)


def run(config: SimConfig, controller: SignalController | None = None,
        rules: Sequence[RuleChange] = (), relation: ConflictRelation | None = None,
        world: World | None = None) -> MetricsRecord:
    """Execute `config.steps` steps from an empty world and return its metrics."""
    w = world or World(config, controller=controller, rules=rules, relation=relation)
    log.info("run start: controller=%s scenario=%s t_max=%g seed=%s steps=%s",
             w.controller.kind, config.scenario.value, config.t_max, config.seed, config.steps)
    for _ in range(config.steps):
        w.step()
    rec = w.result()
    log.info("run end: throughput=%d awt_all=%.3f collisions=%d empty_greens=%d spillback=%d",
             rec.throughput, rec.awt_all, rec.collisions, rec.empty_green_grants, rec.spillback_rejections)
    return rec
