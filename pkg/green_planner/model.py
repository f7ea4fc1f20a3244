from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import InputError


# Absolute tolerance for every flow/rate comparison.
FLOW_TOLERANCE = 1e-9

FlowKey = Tuple[int, str]


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    capacity: float
    energy: float

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise InputError(f"self-loop link at node {self.src!r}")
        if not math.isfinite(self.capacity) or self.capacity <= 0:
            raise InputError(f"capacity must be positive, got {self.capacity!r}", field="capacity")
        if not math.isfinite(self.energy) or self.energy < 0:
            raise InputError(f"energy must be non-negative, got {self.energy!r}", field="energy")


@dataclass(frozen=True)
class Topology:
    """Directed capacitated graph; parallel links are told apart by their index."""

    nodes: Tuple[str, ...]
    links: Tuple[Link, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        if not self.nodes:
            raise InputError("empty topology")
        counts = Counter(self.nodes)
        dupes = sorted(node for node, count in counts.items() if count > 1)
        if dupes:
            raise InputError(f"duplicate node identifiers {dupes}", field="nodes")
        known = set(self.nodes)
        for index, link in enumerate(self.links):
            if link.src not in known:
                raise InputError(f"unknown node {link.src!r}", field=f"links[{index}].from")
            if link.dst not in known:
                raise InputError(f"unknown node {link.dst!r}", field=f"links[{index}].to")

    @cached_property
    def _incidence(self) -> Tuple[Dict[str, Tuple[int, ...]], Dict[str, Tuple[int, ...]]]:
        outgoing: Dict[str, List[int]] = {node: [] for node in self.nodes}
        incoming: Dict[str, List[int]] = {node: [] for node in self.nodes}
        for index, link in enumerate(self.links):
            outgoing[link.src].append(index)
            incoming[link.dst].append(index)
        return (
            {node: tuple(ids) for node, ids in outgoing.items()},
            {node: tuple(ids) for node, ids in incoming.items()},
        )

    def out_links(self, node: str) -> Tuple[int, ...]:
        return self._incidence[0].get(node, ())

    def in_links(self, node: str) -> Tuple[int, ...]:
        return self._incidence[1].get(node, ())

    def energy_of(self, links: Iterable[int]) -> float:
        return math.fsum(self.links[i].energy for i in links)

    def has_node(self, node: str) -> bool:
        return node in self._incidence[0]


class UtilityKind(str, Enum):
    LOG1P = "log1p"
    LINEAR = "linear"
    NORMALIZED_LADDER = "normalized-ladder"


@dataclass(frozen=True)
class UtilityFunction:
    """Concave, nondecreasing QoE curve; U(0) is 0 for every kind.

    ``reference`` is the top rung used by ``normalized-ladder``; sessions fill
    it in from their own ladder when it is left unset.
    """

    kind: UtilityKind = UtilityKind.LOG1P
    scale: float = 1.0
    reference: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", UtilityKind(self.kind))
        if not math.isfinite(self.scale) or self.scale <= 0:
            raise InputError(f"utility scale must be positive, got {self.scale!r}", field="scale")
        if self.reference is not None and (not math.isfinite(self.reference) or self.reference <= 0):
            raise InputError(f"utility reference must be positive, got {self.reference!r}", field="reference")

    def __call__(self, rate: float) -> float:
        if rate <= 0:
            return 0.0
        if self.kind is UtilityKind.LOG1P:
            return self.scale * math.log1p(rate)
        if self.kind is UtilityKind.LINEAR:
            return self.scale * rate
        if self.reference is None:
            raise InputError("normalized-ladder utility needs a reference rate")
        return self.scale * math.log1p(rate / self.reference) / math.log(2.0)


def utility_eval(utility: UtilityFunction, rate: float) -> float:
    if not math.isfinite(rate) or rate < 0:
        raise InputError(f"utility is undefined for rate {rate!r}")
    return utility(rate)


def check_utility_shape(utility: UtilityFunction, points: Sequence[float], tolerance: float = 1e-12) -> List[str]:
    """Numerically check positivity, monotonicity and concavity on ``points``."""
    problems: List[str] = []
    samples = sorted(p for p in points if p > 0)
    values = [utility(p) for p in samples]
    for p, value in zip(samples, values):
        if value <= 0:
            problems.append(f"U({p}) = {value} is not positive")
    for (a, ua), (b, ub) in zip(zip(samples, values), zip(samples[1:], values[1:])):
        if ub < ua - tolerance:
            problems.append(f"U decreases between {a} and {b}")
    for i in range(len(samples)):
        for j in range(i + 1, len(samples)):
            for k in range(j + 1, len(samples)):
                a, b, c = samples[i], samples[j], samples[k]
                if c - a <= 0:
                    continue
                chord = values[i] + (values[k] - values[i]) * (b - a) / (c - a)
                if values[j] < chord - tolerance:
                    problems.append(f"U is not concave on ({a}, {b}, {c})")
    return problems


@dataclass(frozen=True)
class Session:
    id: str
    source: str
    destination: str
    rates: Tuple[float, ...]
    utility: UtilityFunction = field(default_factory=UtilityFunction)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if self.source == self.destination:
            raise InputError(f"session {self.id!r} has identical source and destination")
        if not self.rates:
            raise InputError(f"session {self.id!r} has an empty rate ladder", field="rates")
        for rate in self.rates:
            if not math.isfinite(rate) or rate <= 0:
                raise InputError(f"session {self.id!r} has non-positive rate {rate!r}", field="rates")
        if any(b <= a for a, b in zip(self.rates, self.rates[1:])):
            raise InputError(f"session {self.id!r} ladder is not strictly increasing", field="rates")
        if self.utility.kind is UtilityKind.NORMALIZED_LADDER and self.utility.reference is None:
            object.__setattr__(self, "utility", replace(self.utility, reference=self.max_rate))

    @property
    def max_rate(self) -> float:
        return self.rates[-1]

    @property
    def elastic(self) -> bool:
        return len(self.rates) > 1


def check_sessions(topology: Topology, sessions: Sequence[Session]) -> None:
    ids: set = set()
    for index, session in enumerate(sessions):
        if session.id in ids:
            raise InputError(f"duplicate session id {session.id!r}", field=f"sessions[{index}].id")
        ids.add(session.id)
        for attr in ("source", "destination"):
            node = getattr(session, attr)
            if not topology.has_node(node):
                raise InputError(f"unknown node {node!r}", field=f"sessions[{index}].{attr}")


@dataclass(frozen=True)
class FlowAssignment:
    """Per-(link, session) flow r_ijk plus the chosen session rates r_k.

    Only non-zero flows are stored.
    """

    flows: Mapping[FlowKey, float] = field(default_factory=dict)
    rates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        cleaned = {}
        for key, value in self.flows.items():
            if not math.isfinite(value) or value < 0:
                raise InputError(f"flow on link {key[0]} for session {key[1]!r} is {value!r}")
            if value > 0:
                cleaned[key] = float(value)
        object.__setattr__(self, "flows", cleaned)
        for sid, rate in self.rates.items():
            if not math.isfinite(rate) or rate < 0:
                raise InputError(f"session {sid!r} has rate {rate!r}")
        object.__setattr__(self, "rates", dict(self.rates))

    @classmethod
    def from_paths(cls, paths: Mapping[str, Sequence[int]], rates: Mapping[str, float]) -> "FlowAssignment":
        flows: Dict[FlowKey, float] = {}
        for sid, path in paths.items():
            rate = rates.get(sid, 0.0)
            if rate <= 0:
                continue
            for link in path:
                flows[(link, sid)] = flows.get((link, sid), 0.0) + rate
        return cls(flows=flows, rates=dict(rates))

    @cached_property
    def _loads(self) -> Dict[int, float]:
        loads: Dict[int, List[float]] = {}
        for (link, _), value in self.flows.items():
            loads.setdefault(link, []).append(value)
        return {link: math.fsum(values) for link, values in loads.items()}

    def link_load(self, link: int) -> float:
        return self._loads.get(link, 0.0)

    @property
    def used_links(self) -> FrozenSet[int]:
        return frozenset(link for link, load in self._loads.items() if load > FLOW_TOLERANCE)

    def session_flows(self, sid: str) -> Dict[int, float]:
        return {link: value for (link, key), value in self.flows.items() if key == sid}

    def net_outflow(self, topology: Topology, sid: str, node: str) -> float:
        out = math.fsum(self.flows.get((i, sid), 0.0) for i in topology.out_links(node))
        inc = math.fsum(self.flows.get((i, sid), 0.0) for i in topology.in_links(node))
        return out - inc


def link_utilization(topology: Topology, flows: FlowAssignment) -> Dict[int, float]:
    """l_ij: allocated bandwidth over capacity, for every link."""
    return {i: flows.link_load(i) / link.capacity for i, link in enumerate(topology.links)}


@dataclass(frozen=True)
class ObjectiveBreakdown:
    utility_sum: float
    energy_sum: float
    combined: Optional[float]


@dataclass(frozen=True)
class NetworkPlan:
    """Solver output. ``link_energy`` carries ε for each active link."""

    active_links: FrozenSet[int]
    routes: Mapping[str, Tuple[int, ...]]
    rates: Mapping[str, float]
    flows: FlowAssignment
    link_energy: Mapping[int, float]
    breakdown: Optional[ObjectiveBreakdown] = None

    @classmethod
    def from_flows(
        cls,
        topology: Topology,
        flows: FlowAssignment,
        routes: Mapping[str, Sequence[int]],
    ) -> "NetworkPlan":
        active = flows.used_links
        return cls(
            active_links=active,
            routes={sid: tuple(path) for sid, path in routes.items()},
            rates=dict(flows.rates),
            flows=flows,
            link_energy={i: topology.links[i].energy for i in sorted(active)},
        )

    @classmethod
    def from_paths(
        cls,
        topology: Topology,
        paths: Mapping[str, Sequence[int]],
        rates: Mapping[str, float],
    ) -> "NetworkPlan":
        routes = {sid: tuple(path) if rates.get(sid, 0.0) > 0 else () for sid, path in paths.items()}
        return cls.from_flows(topology, FlowAssignment.from_paths(routes, rates), routes)

    @classmethod
    def empty(cls, sessions: Sequence[Session]) -> "NetworkPlan":
        return cls(
            active_links=frozenset(),
            routes={s.id: () for s in sessions},
            rates={s.id: 0.0 for s in sessions},
            flows=FlowAssignment(rates={s.id: 0.0 for s in sessions}),
            link_energy={},
        )

    @property
    def energy_sum(self) -> float:
        return math.fsum(self.link_energy[i] for i in sorted(self.active_links))

    def rate_of(self, sid: str) -> float:
        return self.rates.get(sid, 0.0)


class SolverMode(str, Enum):
    JOINT = "joint"
    CONSTRAINED = "constrained"


@dataclass(frozen=True)
class SubgradientConfig:
    theta0: float = 1.0
    max_iters: int = 200
    stall_tolerance: float = 1e-6
    stall_window: int = 25
    lambda_init: Optional[float] = None
    exact_subproblem: bool = False
    relaxed_rates: bool = False

    def __post_init__(self) -> None:
        if not self.theta0 > 0:
            raise InputError(f"theta0 must be positive, got {self.theta0!r}", field="subgradient.theta0")
        if self.max_iters < 1:
            raise InputError(f"max_iters must be at least 1, got {self.max_iters!r}", field="subgradient.max_iters")
        if not self.stall_tolerance > 0:
            raise InputError("stall_tolerance must be positive", field="subgradient.stall_tolerance")
        if self.stall_window < 1:
            raise InputError("stall_window must be at least 1", field="subgradient.stall_window")
        if self.lambda_init is not None and self.lambda_init < 0:
            raise InputError("lambda_init must be non-negative", field="subgradient.lambda_init")


@dataclass(frozen=True)
class OracleLimits:
    max_links: int = 14
    max_rate_combos: int = 2_000_000
    splittable: bool = True

    def __post_init__(self) -> None:
        if self.max_links < 0 or self.max_rate_combos < 1:
            raise InputError("oracle limits must be positive", field="limits")


@dataclass(frozen=True)
class SolverConfig:
    mode: SolverMode = SolverMode.JOINT
    alpha: float = 1.0
    beta: float = 1.0
    u_floor: float = 0.0
    allow_drop: bool = False
    min_rate: float = 0.0
    subgradient: SubgradientConfig = field(default_factory=SubgradientConfig)
    limits: OracleLimits = field(default_factory=OracleLimits)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", SolverMode(self.mode))
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InputError(f"alpha must be positive, got {self.alpha!r}", field="alpha")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise InputError(f"beta must be positive, got {self.beta!r}", field="beta")
        if not math.isfinite(self.u_floor):
            raise InputError("u_floor must be finite", field="u_floor")
        if not math.isfinite(self.min_rate) or self.min_rate < 0:
            raise InputError("min_rate must be non-negative", field="min_rate")
        if not 0 <= self.seed < 2**64:
            raise InputError("seed must be a 64-bit unsigned integer", field="seed")


def rate_options(session: Session, cfg: SolverConfig, enforce_floor: bool = True) -> Tuple[float, ...]:
    """Ascending rates a solver may assign to ``session`` (0 first when dropping is allowed)."""
    rungs = [r for r in session.rates if r >= cfg.min_rate]
    if enforce_floor and cfg.mode is SolverMode.CONSTRAINED:
        rungs = [r for r in rungs if session.utility(r) >= cfg.u_floor]
    if cfg.allow_drop:
        return (0.0, *rungs)
    return tuple(rungs)


def total_utility(plan: NetworkPlan, sessions: Sequence[Session]) -> float:
    return math.fsum(s.utility(plan.rate_of(s.id)) for s in sessions)


def objective_joint(plan: NetworkPlan, sessions: Sequence[Session], cfg: SolverConfig) -> float:
    return -cfg.alpha * total_utility(plan, sessions) + cfg.beta * plan.energy_sum


def objective_constrained(plan: NetworkPlan, sessions: Sequence[Session], cfg: SolverConfig) -> Optional[float]:
    """Energy of the plan, or None when a served session sits below the QoE floor."""
    for session in sessions:
        rate = plan.rate_of(session.id)
        if rate > 0 and session.utility(rate) < cfg.u_floor:
            return None
    return plan.energy_sum


def objective_value(plan: NetworkPlan, sessions: Sequence[Session], cfg: SolverConfig) -> Optional[float]:
    if cfg.mode is SolverMode.CONSTRAINED:
        return objective_constrained(plan, sessions, cfg)
    return objective_joint(plan, sessions, cfg)


def evaluate_plan(plan: NetworkPlan, sessions: Sequence[Session], cfg: SolverConfig) -> NetworkPlan:
    breakdown = ObjectiveBreakdown(
        utility_sum=total_utility(plan, sessions),
        energy_sum=plan.energy_sum,
        combined=objective_value(plan, sessions, cfg),
    )
    return replace(plan, breakdown=breakdown)
