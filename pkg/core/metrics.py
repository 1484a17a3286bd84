"""
core/metrics.py
---------------
Per-run outputs and their CSV shapes.

- waiting_time(v): seconds from joining the queue tail to crossing the stop line.
- MetricsCollector: counters fed by the World while it steps.
- MetricsRecord: frozen result of one run; average waiting times are taken
  over the first `metrics_first_n` departures in departure order.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from core.errors import NotDeparted
from core.model import LANE_COUNT, LANES, LaneId, Vehicle, VehicleClass
from core.utils import fmt_compact

SUMMARY_HEADER: tuple[str, ...] = (
    "scenario", "t_max", "seed", "awt_all", "awt_cv", "awt_ev",
    "throughput", "collisions", "empty_green_grants", "spillback",
)
VEHICLE_HEADER: tuple[str, ...] = ("id", "class", "lane", "arrival_step", "departure_step", "wait_s")


def waiting_time(v: Vehicle) -> float:
    if v.departure_step is None:
        raise NotDeparted(f"vehicle {v.id} on {v.lane.name} has not departed")
    return float(v.departure_step - v.arrival_step)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


@dataclass(frozen=True)
class VehicleLogEntry:
    id: int
    vclass: VehicleClass
    lane: LaneId
    arrival_step: int
    departure_step: int

    @property
    def wait_s(self) -> float:
        return float(self.departure_step - self.arrival_step)


@dataclass(frozen=True)
class MetricsRecord:
    awt_all: float = 0.0
    awt_cv: float = 0.0
    awt_ev: float = 0.0
    throughput: int = 0
    collisions: int = 0
    empty_green_grants: int = 0
    spillback_rejections: int = 0
    truncated_greens: int = 0
    grants: int = 0
    arrivals_accepted: int = 0
    still_queued: int = 0
    departed_by_class: tuple[int, int] = (0, 0)          # (classic, emergency)
    max_lane_wait: tuple[float, ...] = (0.0,) * LANE_COUNT
    per_vehicle_log: tuple[VehicleLogEntry, ...] = field(default=(), repr=False)

    @property
    def worst_lane_wait(self) -> float:
        return max(self.max_lane_wait)


class MetricsCollector:
    def __init__(self, first_n: int):
        self.first_n = first_n
        self.departures: list[Vehicle] = []
        self.collisions = 0
        self.empty_green_grants = 0
        self.spillback_rejections = 0
        self.truncated_greens = 0
        self.grants = 0
        self.arrivals_accepted = 0

    def on_grants(self, grants: Iterable) -> None:
        for g in grants:
            self.grants += 1
            self.empty_green_grants += int(g.empty)
            self.truncated_greens += int(g.truncated)

    def on_departure(self, v: Vehicle) -> None:
        self.departures.append(v)

    def record(self, queued: Iterable[Vehicle], steps: int) -> MetricsRecord:
        head = self.departures[: self.first_n]
        waits = [waiting_time(v) for v in head]
        cv = [w for v, w in zip(head, waits) if not v.is_emergency]
        ev = [w for v, w in zip(head, waits) if v.is_emergency]

        worst = [0.0] * LANE_COUNT
        for v in self.departures:
            worst[int(v.lane)] = max(worst[int(v.lane)], waiting_time(v))
        queued = list(queued)
        for v in queued:
            # still waiting at the end of the run
            worst[int(v.lane)] = max(worst[int(v.lane)], float(steps - v.arrival_step))

        n_ev = sum(1 for v in self.departures if v.is_emergency)
        return MetricsRecord(
            awt_all=_mean(waits),
            awt_cv=_mean(cv),
            awt_ev=_mean(ev),
            throughput=len(self.departures),
            collisions=self.collisions,
            empty_green_grants=self.empty_green_grants,
            spillback_rejections=self.spillback_rejections,
            truncated_greens=self.truncated_greens,
            grants=self.grants,
            arrivals_accepted=self.arrivals_accepted,
            still_queued=len(queued),
            departed_by_class=(len(self.departures) - n_ev, n_ev),
            max_lane_wait=tuple(worst),
            per_vehicle_log=tuple(
                VehicleLogEntry(v.id, v.vclass, v.lane, v.arrival_step, v.departure_step)
                for v in self.departures
            ),
        )

# -------- CSV rows --------

def summary_row(rec: MetricsRecord, scenario: str, t_max: float, seed: int) -> list:
    return [
        scenario, fmt_compact(t_max), seed, rec.awt_all, rec.awt_cv, rec.awt_ev,
        rec.throughput, rec.collisions, rec.empty_green_grants, rec.spillback_rejections,
    ]


def vehicle_rows(rec: MetricsRecord) -> list[list]:
    return [
        [e.id, e.vclass.value, e.lane.name, e.arrival_step, e.departure_step, e.wait_s]
        for e in rec.per_vehicle_log
    ]


def lane_wait_table(rec: MetricsRecord) -> dict[str, float]:
    return {lane.name: rec.max_lane_wait[int(lane)] for lane in LANES}
