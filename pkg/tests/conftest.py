"""Shared fixtures for the CrossPulse test suite."""

from __future__ import annotations

import pytest

from core.config import SimConfig
from core.model import LANES, ConflictRelation, LaneId, default_conflict_relation
from core.queues import QueueObservation, observe


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    # a developer's CROSSPULSE_* settings must not leak into tests
    import os
    for key in list(os.environ):
        if key.startswith("CROSSPULSE_"):
            monkeypatch.delenv(key, raising=False)


@pytest.fixture
def relation() -> ConflictRelation:
    return default_conflict_relation()


@pytest.fixture
def short_config() -> SimConfig:
    return SimConfig(steps=300, seed=3)


@pytest.fixture
def idle_config() -> SimConfig:
    """No random arrivals; tests place vehicles by hand."""
    return SimConfig(lambda_cv=0.0, lambda_ev=0.0, steps=200, seed=1)


def make_obs(vehicles: dict[LaneId, int] | None = None, length_m: float = 100.0,
             vehicle_length_m: float = 5.0) -> dict[LaneId, QueueObservation]:
    vehicles = vehicles or {}
    return {
        lane: observe(vehicles.get(lane, 0) * vehicle_length_m, length_m, 0.0, length_m)
        for lane in LANES
    }
