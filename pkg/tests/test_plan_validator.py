from __future__ import annotations

from dataclasses import replace
from typing import Dict, List, Tuple

import numpy as np
import pytest

from green_planner.model import FlowAssignment, Link, NetworkPlan, Session, Topology
from green_planner.plan_validator import ViolationKind, validate_plan

FUZZ_CASES = 1200


def _line_instance(rng: np.random.Generator) -> Tuple[Topology, Session, NetworkPlan]:
    """A line n0 -> ... -> n(N-1) carrying one session, plus random spare links."""
    size = int(rng.integers(4, 7))
    nodes = tuple(f"n{i}" for i in range(size))
    links = [Link(nodes[i], nodes[i + 1], float(rng.uniform(1.0, 3.0)), 1.0) for i in range(size - 1)]
    for _ in range(int(rng.integers(0, 4))):
        src, dst = rng.choice(size, size=2, replace=False)
        links.append(Link(nodes[int(src)], nodes[int(dst)], float(rng.uniform(0.5, 2.0)), 0.5))
    topology = Topology(nodes=nodes, links=tuple(links))
    rate = float(rng.choice([0.125, 0.25, 0.5]))
    session = Session("k", nodes[0], nodes[-1], (rate / 2, rate))
    plan = NetworkPlan.from_paths(topology, {"k": tuple(range(size - 1))}, {"k": rate})
    return topology, session, plan


def _with_flows(topology: Topology, plan: NetworkPlan, flows: Dict[Tuple[int, str], float]) -> NetworkPlan:
    assignment = FlowAssignment(flows=flows, rates=plan.rates)
    return NetworkPlan.from_flows(topology, assignment, plan.routes)


def _kinds(plan: NetworkPlan, topology: Topology, session: Session) -> List[ViolationKind]:
    return [v.kind for v in validate_plan(plan, topology, [session])]


def test_valid_line_plans_pass() -> None:
    rng = np.random.default_rng(5)
    for _ in range(100):
        topology, session, plan = _line_instance(rng)
        assert validate_plan(plan, topology, [session]) == []


def test_fuzzed_single_constraint_violations_are_classified() -> None:
    rng = np.random.default_rng(20240611)
    detected = {kind: 0 for kind in ("capacity", "conservation", "source", "destination")}
    for case in range(FUZZ_CASES):
        topology, session, plan = _line_instance(rng)
        last = len(topology.nodes) - 2
        rate = plan.rates["k"]
        delta = float(rng.uniform(0.01, 0.4))
        target = ("capacity", "conservation", "source", "destination")[case % 4]

        if target == "capacity":
            hop = int(rng.integers(0, last + 1))
            links = list(topology.links)
            links[hop] = replace(links[hop], capacity=rate / 2)
            topology = Topology(nodes=topology.nodes, links=tuple(links))
            kinds = _kinds(plan, topology, session)
            assert kinds == [ViolationKind.CAPACITY]
        else:
            flows = dict(plan.flows.flows)
            if target == "conservation":
                hop = int(rng.integers(1, last))
            elif target == "source":
                hop = 0
            else:
                hop = last
            flows[(hop, "k")] += delta
            kinds = _kinds(_with_flows(topology, plan, flows), topology, session)
            if target == "conservation":
                assert set(kinds) == {ViolationKind.CONSERVATION}
            else:
                assert ViolationKind(target) in kinds
                assert ViolationKind.CAPACITY not in kinds
        detected[target] += 1
    assert sum(detected.values()) == FUZZ_CASES
    assert min(detected.values()) >= FUZZ_CASES // 4


def test_rate_change_breaks_both_endpoints() -> None:
    rng = np.random.default_rng(3)
    topology, session, plan = _line_instance(rng)
    lowered = NetworkPlan(
        active_links=plan.active_links,
        routes=plan.routes,
        rates={"k": session.rates[0]},
        flows=plan.flows,
        link_energy=plan.link_energy,
    )
    kinds = _kinds(lowered, topology, session)
    assert ViolationKind.SOURCE in kinds
    assert ViolationKind.DESTINATION in kinds


def test_activity_and_route_mismatches(two_link: tuple) -> None:
    topology, sessions = two_link
    plan = NetworkPlan.from_paths(topology, {"s1": (0,), "s2": (0,)}, {"s1": 0.5, "s2": 0.5})
    extra = replace(plan, active_links=frozenset({0, 1}), link_energy={0: 1.0, 1: 1.0})
    violations = validate_plan(extra, topology, sessions)
    assert [(v.kind, v.link) for v in violations] == [(ViolationKind.ACTIVITY, 1)]

    off = replace(plan, active_links=frozenset(), link_energy={})
    kinds = {v.kind for v in validate_plan(off, topology, sessions)}
    assert kinds == {ViolationKind.ACTIVITY, ViolationKind.ROUTE}


def test_rate_off_ladder_and_dropping(two_link: tuple) -> None:
    topology, sessions = two_link
    odd = NetworkPlan.from_paths(topology, {"s1": (0,), "s2": (1,)}, {"s1": 0.3, "s2": 1.0})
    assert [v.kind for v in validate_plan(odd, topology, sessions)] == [ViolationKind.RATE]

    dropped = NetworkPlan.from_paths(topology, {"s1": (0,), "s2": ()}, {"s1": 1.0, "s2": 0.0})
    assert [v.kind for v in validate_plan(dropped, topology, sessions)] == [ViolationKind.RATE]
    assert validate_plan(dropped, topology, sessions, allow_drop=True) == []


def test_flow_for_unknown_session_is_a_reference_violation(two_link: tuple) -> None:
    topology, sessions = two_link
    plan = NetworkPlan.from_paths(topology, {"s1": (0,), "s2": (1,)}, {"s1": 0.5, "s2": 0.5})
    flows = FlowAssignment(flows={**plan.flows.flows, (1, "ghost"): 0.0001}, rates=plan.rates)
    kinds = [v.kind for v in validate_plan(plan, topology, sessions, flows=flows)]
    assert kinds == [ViolationKind.REFERENCE]


@pytest.mark.parametrize("capacity", [1.0, 2.0])
def test_parallel_link_plans_are_valid(capacity: float) -> None:
    topology = Topology(nodes=("A", "B"), links=(Link("A", "B", capacity, 1.0), Link("A", "B", capacity, 1.0)))
    sessions = [Session("s1", "A", "B", (0.5, 1.0)), Session("s2", "A", "B", (0.5, 1.0))]
    rates = {"s1": capacity / 2, "s2": capacity / 2}
    plan = NetworkPlan.from_paths(topology, {"s1": (0,), "s2": (0,)}, rates)
    assert validate_plan(plan, topology, sessions) == []
