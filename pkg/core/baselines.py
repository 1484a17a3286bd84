"""
core/baselines.py
-----------------
Comparison controllers driving the same World as the adaptive one.

- FixedCycleController: round-robin over precomputed conflict-free phase
  groups, a fixed green of T_max per group, served whether or not the queues
  hold vehicles.
- GreedyLongestController: every round, serve the conflict-free set seeded by
  the queue holding the most vehicles. No internal levels, so a light lane
  facing heavy conflicting lanes can wait indefinitely.

Also holds the phase-group partition and its one-group-per-line fixture.
"""

from __future__ import annotations
from pathlib import Path
from typing import Iterable, Mapping, Sequence
import logging

from core.config import ControllerKind, SimConfig
from core.errors import ConfigError, FixtureError, InvariantViolation
from core.model import LANES, ConflictRelation, LaneId, lane_from_label
from core.queues import QueueObservation
from core.scheduler import (
    AdaptiveController, Grant, SignalController, forbidden_set, greedy_fill,
)

log = logging.getLogger(__name__)

# -------- Phase groups --------

def fixed_cycle_groups(relation: ConflictRelation) -> list[frozenset[LaneId]]:
    """
    Greedy partition in lane-index order: each lane joins the first group it is
    compatible with, otherwise opens a new group.
    """
    groups: list[list[LaneId]] = []
    for lane in LANES:
        for g in groups:
            if all(not relation.conflicts(lane, other) for other in g):
                g.append(lane)
                break
        else:
            groups.append([lane])
    return [frozenset(g) for g in groups]


def check_phase_groups(groups: Sequence[Iterable[LaneId]], relation: ConflictRelation) -> None:
    seen: list[LaneId] = []
    for g in groups:
        members = list(g)
        if not members:
            raise InvariantViolation("empty phase group")
        if not relation.is_conflict_free(members):
            raise InvariantViolation(f"phase group has conflicts: {sorted(l.name for l in members)}")
        seen.extend(members)
    if sorted(seen) != list(LANES):
        raise InvariantViolation("phase groups must cover every lane exactly once")


def dump_phase_groups(groups: Sequence[Iterable[LaneId]]) -> str:
    return "".join(" ".join(l.name for l in sorted(g)) + "\n" for g in groups)


def parse_phase_groups(text: str) -> list[frozenset[LaneId]]:
    groups: list[frozenset[LaneId]] = []
    for n, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            groups.append(frozenset(lane_from_label(tok) for tok in body.split()))
        except ConfigError as e:
            raise FixtureError(f"phase groups line {n}: {e}") from None
    return groups


def load_phase_groups(path: str | Path) -> list[frozenset[LaneId]]:
    p = Path(path)
    try:
        return parse_phase_groups(p.read_text(encoding="utf-8"))
    except OSError as e:
        raise FixtureError(f"cannot read phase groups {p}: {e}") from e

# -------- Controllers --------

class FixedCycleController(SignalController):
    kind = "fixed"

    def __init__(self, config: SimConfig, relation: ConflictRelation | None = None,
                 groups: Sequence[Iterable[LaneId]] | None = None):
        super().__init__(config, relation)
        self.groups = [frozenset(g) for g in groups] if groups is not None else fixed_cycle_groups(self.relation)
        check_phase_groups(self.groups, self.relation)
        self.cursor = 0

    def apply_rule_change(self, a: LaneId, b: LaneId, conflict: bool) -> None:
        super().apply_rule_change(a, b, conflict)
        self.groups = fixed_cycle_groups(self.relation)
        self.cursor %= len(self.groups)
        log.debug("phase groups recomputed: %s", dump_phase_groups(self.groups).strip().replace("\n", " | "))

    def finished(self, g: Grant, now: float, obs: QueueObservation) -> bool:
        # fixed timing: an empty queue keeps its green
        return g.remaining(now) <= 0

    def select(self, now: float, obs: Mapping[LaneId, QueueObservation],
               counts: Mapping[LaneId, int]) -> list[Grant]:
        group = self.groups[self.cursor]
        if group & forbidden_set(self.snapshot(now)):
            return []  # all-red until clearance runs out
        xs = self.x_values(obs)
        self.cursor = (self.cursor + 1) % len(self.groups)
        return [self._grant(lane, now, self.config.t_max, xs[lane]) for lane in sorted(group)]


class GreedyLongestController(SignalController):
    kind = "greedy"

    def select(self, now: float, obs: Mapping[LaneId, QueueObservation],
               counts: Mapping[LaneId, int]) -> list[Grant]:
        xs = self.x_values(obs)
        blocked = forbidden_set(self.snapshot(now))

        def rank(lane: LaneId) -> tuple[int, int]:
            return (-counts[lane], int(lane))

        def can_open(lane: LaneId) -> bool:
            return xs[lane] > 0

        order = sorted((l for l in LANES if l not in blocked and can_open(l)), key=rank)
        if not order:
            return []
        chosen = greedy_fill(order[0], order[1:], rank, can_open, self.relation)
        t_max = self.config.t_max
        return [self._grant(lane, now, min(xs[lane], t_max), xs[lane]) for lane in sorted(chosen)]


_CONTROLLERS: dict[ControllerKind, type[SignalController]] = {
    ControllerKind.ADAPTIVE: AdaptiveController,
    ControllerKind.FIXED: FixedCycleController,
    ControllerKind.GREEDY: GreedyLongestController,
}


def make_controller(config: SimConfig, relation: ConflictRelation | None = None) -> SignalController:
    return _CONTROLLERS[config.controller](config, relation)
