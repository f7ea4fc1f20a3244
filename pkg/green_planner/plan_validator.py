from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, List, Optional, Sequence

from .model import FLOW_TOLERANCE, FlowAssignment, NetworkPlan, Session, Topology

logger = logging.getLogger(__name__)


class ViolationKind(str, Enum):
    CAPACITY = "capacity"
    CONSERVATION = "conservation"
    SOURCE = "source"
    DESTINATION = "destination"
    ACTIVITY = "activity"
    RATE = "rate"
    ROUTE = "route"
    REFERENCE = "reference"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    message: str
    link: Optional[int] = None
    node: Optional[str] = None
    session: Optional[str] = None


def _check_references(topology: Topology, sessions: Sequence[Session], flows: FlowAssignment) -> Iterator[Violation]:
    known = {s.id for s in sessions}
    for link, sid in sorted(flows.flows):
        if not 0 <= link < len(topology.links):
            yield Violation(ViolationKind.REFERENCE, f"flow on unknown link {link}", link=link, session=sid)
        elif sid not in known:
            yield Violation(ViolationKind.REFERENCE, f"flow for unknown session {sid!r}", link=link, session=sid)


def _check_capacity(topology: Topology, flows: FlowAssignment, tolerance: float) -> Iterator[Violation]:
    for index, link in enumerate(topology.links):
        load = flows.link_load(index)
        if load > link.capacity + tolerance:
            yield Violation(
                ViolationKind.CAPACITY,
                f"link {index} carries {load:g} over capacity {link.capacity:g}",
                link=index,
            )


def _check_rate(session: Session, rate: Optional[float], allow_drop: bool, tolerance: float) -> Iterator[Violation]:
    if rate is None:
        yield Violation(ViolationKind.RATE, f"session {session.id!r} has no rate", session=session.id)
        return
    if abs(rate) <= tolerance:
        if not allow_drop:
            yield Violation(ViolationKind.RATE, f"session {session.id!r} dropped", session=session.id)
        return
    if not any(abs(rate - rung) <= tolerance for rung in session.rates):
        yield Violation(
            ViolationKind.RATE,
            f"session {session.id!r} rate {rate:g} is not on its ladder",
            session=session.id,
        )


def _check_conservation(
    topology: Topology,
    session: Session,
    rate: float,
    flows: FlowAssignment,
    tolerance: float,
) -> Iterator[Violation]:
    for node in topology.nodes:
        net = flows.net_outflow(topology, session.id, node)
        if node == session.source:
            if abs(net - rate) > tolerance:
                yield Violation(
                    ViolationKind.SOURCE,
                    f"session {session.id!r} leaves {node!r} at {net:g}, expected {rate:g}",
                    node=node,
                    session=session.id,
                )
        elif node == session.destination:
            if abs(-net - rate) > tolerance:
                yield Violation(
                    ViolationKind.DESTINATION,
                    f"session {session.id!r} reaches {node!r} at {-net:g}, expected {rate:g}",
                    node=node,
                    session=session.id,
                )
        elif abs(net) > tolerance:
            yield Violation(
                ViolationKind.CONSERVATION,
                f"session {session.id!r} is unbalanced by {net:g} at {node!r}",
                node=node,
                session=session.id,
            )


def _check_activity(plan: NetworkPlan, flows: FlowAssignment) -> Iterator[Violation]:
    used = flows.used_links
    for link in sorted(used - plan.active_links):
        yield Violation(ViolationKind.ACTIVITY, f"link {link} carries flow but is off", link=link)
    for link in sorted(plan.active_links - used):
        yield Violation(ViolationKind.ACTIVITY, f"link {link} is on but carries no flow", link=link)


def _check_route(plan: NetworkPlan, topology: Topology, session: Session) -> Iterator[Violation]:
    route = plan.routes.get(session.id, ())
    if not route:
        yield Violation(ViolationKind.ROUTE, f"session {session.id!r} is served without a route", session=session.id)
        return
    node = session.source
    for link in route:
        if not 0 <= link < len(topology.links):
            yield Violation(ViolationKind.ROUTE, f"route of {session.id!r} uses unknown link {link}", session=session.id)
            return
        if link not in plan.active_links:
            yield Violation(
                ViolationKind.ROUTE,
                f"route of {session.id!r} uses inactive link {link}",
                link=link,
                session=session.id,
            )
        if topology.links[link].src != node:
            yield Violation(
                ViolationKind.ROUTE,
                f"route of {session.id!r} breaks at link {link}",
                link=link,
                session=session.id,
            )
            return
        node = topology.links[link].dst
    if node != session.destination:
        yield Violation(ViolationKind.ROUTE, f"route of {session.id!r} ends at {node!r}", session=session.id)


def validate_plan(
    plan: NetworkPlan,
    topology: Topology,
    sessions: Sequence[Session],
    flows: Optional[FlowAssignment] = None,
    *,
    allow_drop: bool = False,
    tolerance: float = FLOW_TOLERANCE,
) -> List[Violation]:
    """Return every way ``plan`` leaves the feasible region; empty means feasible.

    Checks link capacity, flow conservation at transit nodes, the session rate
    leaving the source and reaching the destination, agreement between
    positive flow and the active link set, ladder membership and routes.
    """
    if flows is None:
        flows = plan.flows
    violations: List[Violation] = []
    violations.extend(_check_references(topology, sessions, flows))
    violations.extend(_check_capacity(topology, flows, tolerance))
    for session in sessions:
        rate = plan.rates.get(session.id)
        violations.extend(_check_rate(session, rate, allow_drop, tolerance))
        violations.extend(_check_conservation(topology, session, rate or 0.0, flows, tolerance))
        if rate is not None and rate > tolerance:
            violations.extend(_check_route(plan, topology, session))
    violations.extend(_check_activity(plan, flows))
    if violations:
        logger.debug("plan has %d violations, first: %s", len(violations), violations[0].message)
    return violations
