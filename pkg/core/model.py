"""
core/model.py
-------------
Intersection topology for a 4-way, right-hand-drive crossing.

Responsibilities:
- The 12 movement labels (LaneId) and their stable index order.
- Vehicles and vehicle classes.
- The static conflict relation between movements, its default contents and
  the '.'/'X'/'#' fixture format used to check it in.
- Turn geometry: which outgoing road a movement discharges into.
"""

from __future__ import annotations
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from core.errors import ConfigError, FixtureError, IllegalCase, InvariantViolation

# -------- Labels --------

class Road(str, Enum):
    N = "N"
    S = "S"
    E = "E"
    W = "W"


class Direction(str, Enum):
    L = "L"   # turn left
    F = "F"   # go forward
    R = "R"   # turn right


class LaneId(IntEnum):
    """An entry queue, named by (approach road, direction). Value = lane index."""
    WR = 0
    WF = 1
    WL = 2
    ER = 3
    EF = 4
    EL = 5
    NR = 6
    NF = 7
    NL = 8
    SR = 9
    SF = 10
    SL = 11

    @property
    def path(self) -> Road:
        return Road(self.name[0])

    @property
    def direction(self) -> Direction:
        return Direction(self.name[1])

    def __str__(self) -> str:
        return self.name


LANES: tuple[LaneId, ...] = tuple(LaneId)
LANE_COUNT = len(LANES)


def lane_index(lane: LaneId) -> int:
    return int(lane)


def lane_from_index(index: int) -> LaneId:
    try:
        return LaneId(index)
    except ValueError:
        raise ConfigError(f"lane index out of range: {index!r}") from None


def lane_from_label(text: str) -> LaneId:
    """Parse 'WF' / 'wf' / ' Wf ' into a LaneId."""
    label = (text or "").strip().upper()
    try:
        return LaneId[label]
    except KeyError:
        raise ConfigError(f"unknown lane label: {text!r}") from None


# Right-hand drive. A vehicle on approach P crosses to the opposite road when
# going forward; right turns take the road clockwise-before the opposite one.
_EXIT_ROAD: dict[tuple[Road, Direction], Road] = {
    (Road.W, Direction.F): Road.E, (Road.W, Direction.R): Road.S, (Road.W, Direction.L): Road.N,
    (Road.E, Direction.F): Road.W, (Road.E, Direction.R): Road.N, (Road.E, Direction.L): Road.S,
    (Road.N, Direction.F): Road.S, (Road.N, Direction.R): Road.W, (Road.N, Direction.L): Road.E,
    (Road.S, Direction.F): Road.N, (Road.S, Direction.R): Road.E, (Road.S, Direction.L): Road.W,
}


def exit_road(lane: LaneId) -> Road:
    """Outgoing road a movement discharges into."""
    return _EXIT_ROAD[(lane.path, lane.direction)]

# -------- Vehicles --------

class VehicleClass(str, Enum):
    CLASSIC = "classic"
    EMERGENCY = "emergency"


DEFAULT_VEHICLE_LENGTH_M = 5.0


@dataclass(slots=True)
class Vehicle:
    id: int
    vclass: VehicleClass
    lane: LaneId
    arrival_step: int
    length_m: float = DEFAULT_VEHICLE_LENGTH_M
    departure_step: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.length_m > 0:
            raise ConfigError(f"vehicle length must be > 0, got {self.length_m}", key="vehicle_length_m")
        if self.arrival_step < 0:
            raise ConfigError(f"arrival_step must be >= 0, got {self.arrival_step}")

    @property
    def is_emergency(self) -> bool:
        return self.vclass is VehicleClass.EMERGENCY

    @property
    def departed(self) -> bool:
        return self.departure_step is not None

    def depart(self, step: int) -> None:
        if step < self.arrival_step:
            raise InvariantViolation(
                f"vehicle {self.id} cannot depart at {step} before arriving at {self.arrival_step}"
            )
        self.departure_step = step

# -------- Conflict relation --------

# Transcription of the right-hand-drive conflict table: row → movements that
# may collide with it. Symmetry is checked when the relation is built.
_DEFAULT_CONFLICTS: dict[str, str] = {
    "WR": "EL NF",
    "WF": "EL NF NL SR SF SL",
    "WL": "ER EF NF NL SF SL",
    "ER": "WL SF",
    "EF": "WL NR NF NL SF SL",
    "EL": "WR WF NF NL SF SL",
    "NR": "EF SL",
    "NF": "WR WF WL EF EL SL",
    "NL": "WF WL EF EL SR SF",
    "SR": "WF NL",
    "SF": "WF WL ER EF EL NL",
    "SL": "WF WL EF EL NR NF",
}


class ConflictRelation:
    """
    Immutable 12×12 symmetric conflict table (True = the two movements may
    collide). The diagonal is not part of the relation: asking whether a
    movement conflicts with itself raises IllegalCase.
    """

    __slots__ = ("_table",)

    def __init__(self, table: np.ndarray | Iterable[Iterable[bool]]):
        arr = np.array(table, dtype=bool, copy=True)
        if arr.shape != (LANE_COUNT, LANE_COUNT):
            raise InvariantViolation(f"conflict table must be {LANE_COUNT}x{LANE_COUNT}, got {arr.shape}")
        np.fill_diagonal(arr, False)
        if not np.array_equal(arr, arr.T):
            bad = [(LANES[i].name, LANES[j].name) for i, j in zip(*np.nonzero(arr != arr.T)) if i < j]
            raise InvariantViolation(f"conflict table is not symmetric at {bad}")
        arr.setflags(write=False)
        self._table = arr

    # ---- queries ----

    @property
    def table(self) -> np.ndarray:
        """Read-only boolean view (diagonal False)."""
        return self._table

    def conflicts(self, a: LaneId, b: LaneId) -> bool:
        if a == b:
            raise IllegalCase(f"{LaneId(a).name} paired with itself")
        return bool(self._table[int(a), int(b)])

    def conflicting_with(self, lane: LaneId) -> frozenset[LaneId]:
        return frozenset(LANES[j] for j in np.flatnonzero(self._table[int(lane)]))

    def compatible_with(self, lane: LaneId) -> frozenset[LaneId]:
        """Movements that may run together with `lane` (excluding itself)."""
        return frozenset(l for l in LANES if l != lane and not self._table[int(lane), int(l)])

    def conflict_pairs(self) -> list[tuple[LaneId, LaneId]]:
        rows, cols = np.nonzero(np.triu(self._table, k=1))
        return [(LANES[i], LANES[j]) for i, j in zip(rows, cols)]

    def degree(self, lane: LaneId) -> int:
        return int(self._table[int(lane)].sum())

    def is_conflict_free(self, lanes: Iterable[LaneId]) -> bool:
        idx = sorted({int(l) for l in lanes})
        return not self._table[np.ix_(idx, idx)].any() if idx else True

    # ---- value updates ----

    def with_entry(self, a: LaneId, b: LaneId, conflict: bool) -> "ConflictRelation":
        """Copy of this relation with the (a, b)/(b, a) cells set to `conflict`."""
        if a == b:
            raise IllegalCase(f"cannot change the rule of {LaneId(a).name} against itself")
        arr = self._table.copy()
        arr[int(a), int(b)] = arr[int(b), int(a)] = bool(conflict)
        return ConflictRelation(arr)

    # ---- value semantics ----

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConflictRelation):
            return NotImplemented
        return np.array_equal(self._table, other._table)

    def __hash__(self) -> int:
        return hash(self._table.tobytes())

    def __repr__(self) -> str:
        return f"ConflictRelation(pairs={len(self.conflict_pairs())})"

    def __reduce__(self):
        return (ConflictRelation, (self._table.tolist(),))


def default_conflict_relation() -> ConflictRelation:
    """The conflict table for a right-hand-drive 4-way crossing with all 12 movements."""
    arr = np.zeros((LANE_COUNT, LANE_COUNT), dtype=bool)
    for row, cols in _DEFAULT_CONFLICTS.items():
        for col in cols.split():
            arr[int(LaneId[row]), int(LaneId[col])] = True
    return ConflictRelation(arr)

# -------- Fixture format --------
# 12 lines of 12 chars: '.' compatible, 'X' conflict, '#' diagonal.

def dump_conflict_fixture(relation: ConflictRelation) -> str:
    lines = []
    for i in range(LANE_COUNT):
        lines.append("".join(
            "#" if i == j else ("X" if relation.table[i, j] else ".")
            for j in range(LANE_COUNT)
        ))
    return "\n".join(lines) + "\n"


def parse_conflict_fixture(text: str) -> ConflictRelation:
    rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(rows) != LANE_COUNT:
        raise FixtureError(f"conflict fixture needs {LANE_COUNT} rows, found {len(rows)}")
    arr = np.zeros((LANE_COUNT, LANE_COUNT), dtype=bool)
    for i, row in enumerate(rows):
        if len(row) != LANE_COUNT:
            raise FixtureError(f"conflict fixture row {i + 1} has {len(row)} cells, expected {LANE_COUNT}")
        for j, cell in enumerate(row):
            if i == j:
                if cell != "#":
                    raise FixtureError(f"conflict fixture row {i + 1}: diagonal must be '#', got {cell!r}")
                continue
            if cell not in ".X":
                raise FixtureError(f"conflict fixture row {i + 1}: unexpected cell {cell!r}")
            arr[i, j] = cell == "X"
    return ConflictRelation(arr)


def load_conflict_fixture(path: str | Path) -> ConflictRelation:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise FixtureError(f"cannot read conflict fixture {p}: {e}") from e
    return parse_conflict_fixture(text)
