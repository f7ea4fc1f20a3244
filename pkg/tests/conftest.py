from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Callable, List, Tuple

import pytest
from hypothesis import settings

from green_planner.model import Session, SolverConfig, Topology

from tests.instances import two_link_instance

settings.register_profile("ci", derandomize=True, deadline=None, max_examples=60, database=None)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture
def two_link() -> Tuple[Topology, List[Session]]:
    return two_link_instance(capacity=1.0)


@pytest.fixture
def linear_cfg() -> SolverConfig:
    return SolverConfig(alpha=1.0, beta=1.0)


@pytest.fixture
def write_json(tmp_path: Path) -> Callable[[str, object], Path]:
    def _write(name: str, payload: object) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def two_link_files(write_json: Callable[[str, object], Path]) -> Callable[..., Tuple[Path, Path]]:
    """Topology and demand JSON for the two-link example at a given capacity."""

    def _files(capacity: float = 1.0) -> Tuple[Path, Path]:
        topology = write_json(
            "topology.json",
            {
                "nodes": ["A", "B"],
                "links": [
                    {"from": "A", "to": "B", "capacity": capacity, "energy": 1.0},
                    {"from": "A", "to": "B", "capacity": capacity, "energy": 1.0},
                ],
            },
        )
        demand = write_json(
            "demand.json",
            {
                "sessions": [
                    {"id": "s1", "source": "A", "destination": "B", "rates": [0.25, 0.5, 1], "utility": "linear"},
                    {"id": "s2", "source": "A", "destination": "B", "rates": [0.25, 0.5, 1], "utility": "linear"},
                ]
            },
        )
        return topology, demand

    return _files
