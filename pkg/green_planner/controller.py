"""Epoch-driven controller simulator.

Each epoch the controller applies departures and arrivals, re-solves the
planning problem for the active sessions, pushes a provisioning order (link
power states plus per-node routing tables) and collects telemetry.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import InfeasibleError, InputError, InvariantViolationError, NoFeasiblePlanError, RoutingError
from .lagrangian import solve_lagrangian
from .model import (
    FlowAssignment,
    NetworkPlan,
    Session,
    SolverConfig,
    Topology,
    UtilityFunction,
    check_sessions,
    link_utilization,
)
from .oracle import solve_exact
from .plan_validator import validate_plan

logger = logging.getLogger(__name__)


class SolverKind(str, Enum):
    ORACLE = "oracle"
    LAGRANGIAN = "lagrangian"


@dataclass(frozen=True)
class Epoch:
    index: int
    duration: float
    arrivals: Tuple[Session, ...] = ()
    departures: Tuple[str, ...] = ()


@dataclass(frozen=True)
class EpochTrace:
    epochs: Tuple[Epoch, ...] = ()

    def check(self, topology: Topology) -> None:
        """Raise InputError unless every epoch is consistent with the sessions active before it."""
        active: Dict[str, Session] = {}
        for position, epoch in enumerate(self.epochs):
            where = f"epochs[{position}]"
            if not math.isfinite(epoch.duration) or epoch.duration <= 0:
                raise InputError(f"duration must be positive, got {epoch.duration!r}", field=f"{where}.duration")
            for i, sid in enumerate(epoch.departures):
                if sid not in active:
                    raise InputError(f"departure of inactive session {sid!r}", field=f"{where}.departures[{i}]")
                del active[sid]
            for i, session in enumerate(epoch.arrivals):
                if session.id in active:
                    raise InputError(f"session {session.id!r} is already active", field=f"{where}.arrivals[{i}]")
                active[session.id] = session
            try:
                check_sessions(topology, list(epoch.arrivals))
            except InputError as exc:
                field = (exc.field or "").replace("sessions", "arrivals", 1)
                raise InputError(exc.message, field=f"{where}.{field}" if field else where) from None


class NextHop(NamedTuple):
    node: str
    link: int


@dataclass(frozen=True)
class ProvisioningOrder:
    epoch: int
    links_on: FrozenSet[int]
    links_off: FrozenSet[int]
    routing_tables: Mapping[str, Mapping[str, NextHop]]
    rates: Mapping[str, float]
    retained: bool = False


@dataclass(frozen=True)
class LinkTelemetry:
    link: int
    on: bool
    utilization: float
    energy: float


@dataclass(frozen=True)
class SessionTelemetry:
    session_id: str
    rate: float
    utility: float


@dataclass(frozen=True)
class TelemetryReport:
    epoch: int
    duration: float
    links: Tuple[LinkTelemetry, ...]
    sessions: Tuple[SessionTelemetry, ...]
    energy_total: float
    utility_total: float

    @property
    def links_on_count(self) -> int:
        return sum(1 for link in self.links if link.on)


@dataclass(frozen=True)
class EpochResult:
    order: ProvisioningOrder
    telemetry: TelemetryReport
    flagged: bool = False
    value: Optional[float] = None


def order_from_plan(topology: Topology, plan: NetworkPlan, epoch: int) -> ProvisioningOrder:
    """Turn each session's route into next-hop entries; a link is on iff a route uses it."""
    tables: Dict[str, Dict[str, NextHop]] = {}
    used: set = set()
    rates: Dict[str, float] = {}
    for sid in sorted(plan.rates):
        rate = plan.rates[sid]
        route = plan.routes.get(sid, ())
        if rate <= 0 or not route:
            rates[sid] = 0.0
            continue
        rates[sid] = rate
        for i in route:
            link = topology.links[i]
            tables.setdefault(link.src, {})[sid] = NextHop(link.dst, i)
            used.add(i)
    return ProvisioningOrder(
        epoch=epoch,
        links_on=frozenset(used),
        links_off=frozenset(range(len(topology.links))) - used,
        routing_tables={node: dict(sorted(entries.items())) for node, entries in sorted(tables.items())},
        rates=rates,
    )


def replay_route(order: ProvisioningOrder, session: Session) -> Tuple[int, ...]:
    """Follow the routing tables hop by hop from the session's source."""
    if order.rates.get(session.id, 0.0) <= 0:
        return ()
    node, seen, links = session.source, {session.source}, []
    while node != session.destination:
        hop = order.routing_tables.get(node, {}).get(session.id)
        if hop is None:
            raise RoutingError(f"session {session.id!r} has no next hop at {node!r}")
        if hop.node in seen:
            raise RoutingError(f"session {session.id!r} loops back to {hop.node!r}")
        seen.add(hop.node)
        links.append(hop.link)
        node = hop.node
    return tuple(links)


def retained_order(
    topology: Topology,
    previous: Optional[ProvisioningOrder],
    sessions: Sequence[Session],
    epoch: int,
) -> ProvisioningOrder:
    """The previous order restricted to sessions that are still active."""
    active = {s.id for s in sessions}
    rates = {s.id: 0.0 for s in sessions}
    tables: Dict[str, Dict[str, NextHop]] = {}
    used: set = set()
    if previous is not None:
        for node, entries in previous.routing_tables.items():
            kept = {sid: hop for sid, hop in entries.items() if sid in active}
            if kept:
                tables[node] = kept
                used.update(hop.link for hop in kept.values())
        rates.update({sid: rate for sid, rate in previous.rates.items() if sid in active})
    return ProvisioningOrder(
        epoch=epoch,
        links_on=frozenset(used),
        links_off=frozenset(range(len(topology.links))) - used,
        routing_tables=tables,
        rates=rates,
        retained=True,
    )


def telemetry_for(
    topology: Topology,
    order: ProvisioningOrder,
    sessions: Sequence[Session],
    duration: float,
) -> TelemetryReport:
    routes = {session.id: replay_route(order, session) for session in sessions}
    utilization = link_utilization(topology, FlowAssignment.from_paths(routes, order.rates))

    links = []
    for i, link in enumerate(topology.links):
        on = i in order.links_on
        energy = float(Fraction(link.energy) * Fraction(duration)) if on else 0.0
        links.append(LinkTelemetry(i, on, utilization[i], energy))
    energy_total = float(
        sum((Fraction(topology.links[i].energy) for i in order.links_on), Fraction(0)) * Fraction(duration)
    )
    reports = tuple(
        SessionTelemetry(s.id, order.rates.get(s.id, 0.0), s.utility(order.rates.get(s.id, 0.0)))
        for s in sorted(sessions, key=lambda s: s.id)
    )
    return TelemetryReport(
        epoch=order.epoch,
        duration=duration,
        links=tuple(links),
        sessions=reports,
        energy_total=energy_total,
        utility_total=math.fsum(r.utility for r in reports),
    )


def _solve(topology: Topology, sessions: List[Session], cfg: SolverConfig, solver: SolverKind) -> Tuple[NetworkPlan, float]:
    # Routing tables hold one next hop per session, so plans must not split.
    cfg = replace(cfg, limits=replace(cfg.limits, splittable=False))
    if solver is SolverKind.ORACLE:
        result = solve_exact(topology, sessions, cfg)
    else:
        result = solve_lagrangian(topology, sessions, cfg)
    return result.plan, result.value


def run_simulation(
    topology: Topology,
    trace: EpochTrace,
    cfg: SolverConfig,
    solver: SolverKind = SolverKind.ORACLE,
) -> List[EpochResult]:
    trace.check(topology)
    solver = SolverKind(solver)
    active: Dict[str, Session] = {}
    previous: Optional[ProvisioningOrder] = None
    results: List[EpochResult] = []

    for epoch in trace.epochs:
        for sid in epoch.departures:
            del active[sid]
        for session in epoch.arrivals:
            active[session.id] = session
        sessions = list(active.values())
        logger.debug("epoch %d: %d active sessions", epoch.index, len(sessions))

        flagged, value = False, None
        try:
            plan, value = _solve(topology, sessions, cfg, solver)
        except (InfeasibleError, NoFeasiblePlanError) as exc:
            logger.warning("epoch %d: %s; keeping the previous provisioning", epoch.index, exc)
            order = retained_order(topology, previous, sessions, epoch.index)
            flagged = True
        else:
            violations = validate_plan(plan, topology, sessions, allow_drop=cfg.allow_drop)
            if violations:
                raise InvariantViolationError(violations)
            order = order_from_plan(topology, plan, epoch.index)

        telemetry = telemetry_for(topology, order, sessions, epoch.duration)
        results.append(EpochResult(order=order, telemetry=telemetry, flagged=flagged, value=value))
        previous = order
    return results


@dataclass(frozen=True)
class TraceParams:
    num_epochs: int
    arrival_rate: float
    mean_holding_epochs: float
    ladder: Tuple[float, ...] = (0.25, 0.5, 1.0)
    utility: UtilityFunction = field(default_factory=UtilityFunction)
    duration: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "ladder", tuple(float(r) for r in self.ladder))
        if self.num_epochs < 0:
            raise InputError("num_epochs must be non-negative", field="num_epochs")
        if not math.isfinite(self.arrival_rate) or self.arrival_rate < 0:
            raise InputError("arrival_rate must be non-negative", field="arrival_rate")
        if not math.isfinite(self.mean_holding_epochs) or self.mean_holding_epochs < 1:
            raise InputError("mean_holding_epochs must be at least 1", field="mean_holding_epochs")
        if not self.ladder:
            raise InputError("ladder must not be empty", field="ladder")
        if not math.isfinite(self.duration) or self.duration <= 0:
            raise InputError("duration must be positive", field="duration")


def generate_trace(topology: Topology, params: TraceParams) -> EpochTrace:
    """Poisson arrivals per epoch, uniform distinct endpoints, geometric holding times."""
    nodes = topology.nodes
    if len(nodes) < 2:
        raise InputError("trace generation needs at least two nodes", field="nodes")
    rng = np.random.default_rng(params.seed)
    due: Dict[int, List[str]] = {}
    epochs = []
    for index in range(params.num_epochs):
        departures = tuple(due.pop(index, []))
        arrivals = []
        for n in range(int(rng.poisson(params.arrival_rate))):
            src = int(rng.integers(len(nodes)))
            dst = int(rng.integers(len(nodes) - 1))
            if dst >= src:
                dst += 1
            hold = int(rng.geometric(1.0 / params.mean_holding_epochs))
            sid = f"e{index}-{n}"
            arrivals.append(Session(sid, nodes[src], nodes[dst], params.ladder, params.utility))
            if index + hold < params.num_epochs:
                due.setdefault(index + hold, []).append(sid)
        epochs.append(Epoch(index, params.duration, tuple(arrivals), departures))
    return EpochTrace(epochs=tuple(epochs))
