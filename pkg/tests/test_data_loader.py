from __future__ import annotations

from pathlib import Path
from typing import Callable

import pytest
from hypothesis import given
from hypothesis import strategies as st

from green_planner.data_loader import (
    config_from_dict,
    config_to_dict,
    demand_from_dict,
    demand_to_dict,
    load_config,
    load_demand,
    load_topology,
    load_trace,
    topology_from_dict,
    topology_to_dict,
    trace_to_dict,
)
from green_planner.errors import InputError
from green_planner.model import SolverMode, UtilityKind

WriteJson = Callable[[str, object], Path]

node_ids = st.lists(st.text("abcdefgh", min_size=1, max_size=3), min_size=2, max_size=5, unique=True)


@st.composite
def topologies(draw: st.DrawFn) -> dict:
    nodes = draw(node_ids)
    pairs = st.tuples(st.sampled_from(nodes), st.sampled_from(nodes)).filter(lambda p: p[0] != p[1])
    links = [
        {
            "from": src,
            "to": dst,
            "capacity": draw(st.floats(0.1, 100.0)),
            "energy": draw(st.floats(0.0, 100.0)),
        }
        for src, dst in draw(st.lists(pairs, max_size=6))
    ]
    return {"nodes": nodes, "links": links}


@given(topologies())
def test_topology_dict_round_trip(payload: dict) -> None:
    topology = topology_from_dict(payload)
    assert topology_to_dict(topology) == payload
    assert topology_from_dict(topology_to_dict(topology)) == topology


def test_load_topology_reads_parallel_links(write_json: WriteJson) -> None:
    path = write_json(
        "topology.json",
        {
            "nodes": ["A", "B"],
            "links": [
                {"from": "A", "to": "B", "capacity": 1, "energy": 1},
                {"from": "A", "to": "B", "capacity": 2, "energy": 0.5},
            ],
        },
    )
    topology = load_topology(path)
    assert len(topology.links) == 2
    assert topology.links[1].capacity == 2.0
    assert topology.links[1].energy == 0.5


def test_undirected_topology_expands_each_edge(write_json: WriteJson) -> None:
    path = write_json(
        "topology.json",
        {"nodes": ["A", "B", "C"], "undirected": True, "links": [
            {"from": "A", "to": "B", "capacity": 1, "energy": 1},
            {"from": "B", "to": "C", "capacity": 3, "energy": 2},
        ]},
    )
    topology = load_topology(path)
    assert [(link.src, link.dst) for link in topology.links] == [("A", "B"), ("B", "A"), ("B", "C"), ("C", "B")]
    assert topology.links[3].capacity == 3.0


def test_unknown_node_reports_link_field() -> None:
    payload = {"nodes": ["A", "B"], "links": [{"from": "A", "to": "B", "capacity": 1, "energy": 1},
                                              {"from": "A", "to": "Q", "capacity": 1, "energy": 1}]}
    with pytest.raises(InputError) as excinfo:
        topology_from_dict(payload)
    assert excinfo.value.field == "links[1].to"


def test_bad_capacity_reports_link_field() -> None:
    payload = {"nodes": ["A", "B"], "links": [{"from": "A", "to": "B", "capacity": -1, "energy": 1}]}
    with pytest.raises(InputError) as excinfo:
        topology_from_dict(payload)
    assert excinfo.value.field == "links[0].capacity"


def test_empty_topology_is_rejected() -> None:
    with pytest.raises(InputError, match="empty topology"):
        topology_from_dict({"nodes": [], "links": []})


def test_malformed_json_reports_position(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text('{"nodes": ["A",\n ]', encoding="utf-8")
    with pytest.raises(InputError, match="line 2"):
        load_topology(path)


def test_missing_file_is_an_input_error(tmp_path: Path) -> None:
    with pytest.raises(InputError, match="file not found"):
        load_config(tmp_path / "nope.json")


def test_demand_accepts_string_and_object_utilities(write_json: WriteJson, two_link: tuple) -> None:
    topology, _ = two_link
    path = write_json(
        "demand.json",
        {"sessions": [
            {"id": "a", "source": "A", "destination": "B", "rates": [1], "utility": "linear"},
            {"id": "b", "source": "A", "destination": "B", "rates": [0.5, 2],
             "utility": {"kind": "normalized-ladder", "scale": 2}},
            {"id": "c", "source": "A", "destination": "B", "rates": [1]},
        ]},
    )
    sessions = load_demand(path, topology)
    assert sessions[0].utility.kind is UtilityKind.LINEAR
    assert sessions[1].utility.reference == 2.0
    assert sessions[1].utility(2.0) == pytest.approx(2.0)
    assert sessions[2].utility.kind is UtilityKind.LOG1P
    assert demand_from_dict(demand_to_dict(sessions), topology) == sessions


def test_demand_errors_carry_session_field(two_link: tuple) -> None:
    topology, _ = two_link
    with pytest.raises(InputError) as excinfo:
        demand_from_dict({"sessions": [{"id": "a", "source": "A", "destination": "B", "rates": [1, 0.5]}]}, topology)
    assert excinfo.value.field.startswith("sessions[0]")
    with pytest.raises(InputError) as excinfo:
        demand_from_dict({"sessions": [{"id": "a", "source": "A", "destination": "B", "rates": [1],
                                        "utility": "cubic"}]}, topology)
    assert excinfo.value.field == "sessions[0].utility"
    with pytest.raises(InputError) as excinfo:
        demand_from_dict({"sessions": [{"id": "a", "source": "A", "destination": "Z", "rates": [1]}]}, topology)
    assert excinfo.value.field == "sessions[0].destination"


def test_config_defaults_and_round_trip() -> None:
    cfg = config_from_dict({"mode": "constrained", "u_floor": 0.3, "subgradient": {"max_iters": 5}})
    assert cfg.mode is SolverMode.CONSTRAINED
    assert cfg.subgradient.max_iters == 5
    assert cfg.subgradient.theta0 == 1.0
    assert cfg.limits.splittable is True
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_config_rejects_unknown_keys_with_path() -> None:
    with pytest.raises(InputError) as excinfo:
        config_from_dict({"alpah": 1})
    assert excinfo.value.field == "alpah"
    with pytest.raises(InputError) as excinfo:
        config_from_dict({"subgradient": {"theta": 1}})
    assert excinfo.value.field == "subgradient.theta"
    with pytest.raises(InputError) as excinfo:
        config_from_dict({"mode": "greedy"})
    assert excinfo.value.field == "mode"


def test_trace_loads_and_checks_departures(write_json: WriteJson, two_link: tuple) -> None:
    topology, _ = two_link
    arrival = {"id": "s1", "source": "A", "destination": "B", "rates": [1]}
    good = write_json("trace.json", {"epochs": [
        {"epoch": 0, "duration": 2, "arrivals": [arrival]},
        {"epoch": 1, "duration": 1, "departures": ["s1"]},
    ]})
    trace = load_trace(good, topology)
    assert [e.index for e in trace.epochs] == [0, 1]
    assert trace.epochs[1].departures == ("s1",)
    assert trace_to_dict(trace)["epochs"][0]["duration"] == 2.0

    bad = write_json("bad.json", {"epochs": [{"duration": 1, "departures": ["ghost"]}]})
    with pytest.raises(InputError) as excinfo:
        load_trace(bad, topology)
    assert excinfo.value.field == "epochs[0].departures[0]"

    zero = write_json("zero.json", {"epochs": [{"duration": 0}]})
    with pytest.raises(InputError, match="duration"):
        load_trace(zero, topology)
