"""Lagrangian decomposition heuristic.

The source-rate constraint is relaxed into the objective with one multiplier
per session. Sub-problem 1 picks links and flows that collect the multiplier
reward against link energy; sub-problem 2 picks ladder rates against the
multiplier price. Each iteration turns the opened links into a feasible plan
and moves the multipliers along the subgradient.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
from scipy.optimize import minimize_scalar

from .errors import InstanceTooLargeError, NoFeasiblePlanError
from .lp import Demand, LpBuilder, Sense, mcf_feasible, solve_lp
from .model import (
    FLOW_TOLERANCE,
    FlowAssignment,
    NetworkPlan,
    OracleLimits,
    Session,
    SolverConfig,
    Topology,
    check_sessions,
    evaluate_plan,
    objective_value,
    rate_options,
)
from .paths import build_graph, cheapest_path, decompose_flow, pack_paths, primary_path

logger = logging.getLogger(__name__)

_TIE = 1e-12


@dataclass(frozen=True)
class IterationRecord:
    t: int
    dual_estimate: float
    best_primal: Optional[float]
    grad_norm: float


@dataclass
class DualState:
    lambdas: Dict[str, float]
    iteration: int = 0
    best_plan: Optional[NetworkPlan] = None
    best_value: Optional[float] = None
    dual_estimate: float = -math.inf
    history: List[IterationRecord] = field(default_factory=list)

    def offer(self, plan: NetworkPlan, value: float) -> bool:
        """Keep ``plan`` only when it is strictly better than the incumbent."""
        if self.best_value is None or value < self.best_value - _TIE:
            self.best_plan, self.best_value = plan, value
            return True
        return False


@dataclass(frozen=True)
class Subproblem1Result:
    active_links: FrozenSet[int]
    flows: FlowAssignment
    value: float

    @property
    def delivered(self) -> Mapping[str, float]:
        return self.flows.rates


@dataclass(frozen=True)
class LagrangianResult:
    plan: NetworkPlan
    value: float
    state: DualState


def initial_lambda(topology: Topology, cfg: SolverConfig) -> float:
    if cfg.subgradient.lambda_init is not None:
        return cfg.subgradient.lambda_init
    if not topology.links:
        return 0.0
    mean_energy = math.fsum(link.energy for link in topology.links) / len(topology.links)
    mean_capacity = math.fsum(link.capacity for link in topology.links) / len(topology.links)
    return cfg.beta * mean_energy / mean_capacity


def _relaxed_rate(session: Session, price: float, cfg: SolverConfig, options: Sequence[float]) -> float:
    rungs = [r for r in options if r > 0]
    if not rungs:
        return 0.0

    def cost(rate: float) -> float:
        return -cfg.alpha * session.utility(rate) + price * rate

    low, high = rungs[0], rungs[-1]
    continuous = low
    if high > low:
        # The bounded search never lands exactly on an end point.
        found = float(minimize_scalar(cost, bounds=(low, high), method="bounded").x)
        continuous = min((found, low, high), key=cost)
    below = [r for r in rungs if r <= continuous + FLOW_TOLERANCE]
    rate = below[-1] if below else rungs[0]
    if options[0] == 0.0 and cost(rate) > -_TIE:
        return 0.0
    return rate


def _smallest_rung(session: Session, cfg: SolverConfig) -> Optional[float]:
    rungs = [r for r in rate_options(session, cfg) if r > 0]
    return rungs[0] if rungs else None


def subproblem2_rates(
    sessions: Sequence[Session],
    lambdas: Mapping[str, float],
    cfg: SolverConfig,
) -> Dict[str, float]:
    """Per session: argmin over its ladder of -alpha*U(r) + lambda*r, ties to the smaller rate."""
    rates: Dict[str, float] = {}
    for session in sessions:
        price = lambdas.get(session.id, 0.0)
        options = rate_options(session, cfg)
        if not options:
            rates[session.id] = 0.0
            continue
        if cfg.subgradient.relaxed_rates:
            rates[session.id] = _relaxed_rate(session, price, cfg, options)
            continue
        best_rate, best_cost = options[0], math.inf
        for rate in options:
            cost = -cfg.alpha * session.utility(rate) + price * rate
            if cost < best_cost - _TIE:
                best_rate, best_cost = rate, cost
        rates[session.id] = best_rate
    return rates


def subproblem1_flows(
    topology: Topology,
    sessions: Sequence[Session],
    lambdas: Mapping[str, float],
    cfg: SolverConfig,
) -> Subproblem1Result:
    """Greedy reward collection: cheapest-to-open path per session, highest multiplier first."""
    opened: set = set()
    residual = {i: link.capacity for i, link in enumerate(topology.links)}
    flows: Dict[Tuple[int, str], float] = {}
    delivered = {s.id: 0.0 for s in sessions}
    terms: List[float] = []

    for session in sorted(sessions, key=lambda s: (-lambdas.get(s.id, 0.0), s.id)):
        price = lambdas.get(session.id, 0.0)
        smallest = _smallest_rung(session, cfg)
        if smallest is None:
            continue

        def opening_cost(i: int) -> Optional[float]:
            # A link that cannot carry the smallest rung is useless for recovery.
            if residual[i] < smallest - FLOW_TOLERANCE:
                return None
            return 0.0 if i in opened else cfg.beta * topology.links[i].energy

        path = cheapest_path(topology, session.source, session.destination, opening_cost)
        if path is None:
            continue
        amount = min(min(residual[i] for i in path), session.max_rate)
        cost = math.fsum(cfg.beta * topology.links[i].energy for i in path if i not in opened)
        if price * amount <= cost:
            continue
        for i in path:
            opened.add(i)
            residual[i] -= amount
            flows[(i, session.id)] = flows.get((i, session.id), 0.0) + amount
        delivered[session.id] = amount
        terms.extend([cost, -price * amount])

    return Subproblem1Result(
        active_links=frozenset(opened),
        flows=FlowAssignment(flows=flows, rates=delivered),
        value=math.fsum(terms),
    )


def _reward_bound(
    topology: Topology,
    subset: Tuple[int, ...],
    sessions: Sequence[Session],
    lambdas: Mapping[str, float],
) -> float:
    graph = build_graph(topology, subset)
    bound = []
    for session in sessions:
        price = lambdas.get(session.id, 0.0)
        if price <= 0 or session.destination not in nx.descendants(graph, session.source):
            continue
        out_cap = math.fsum(topology.links[i].capacity for i in subset if topology.links[i].src == session.source)
        bound.append(price * min(session.max_rate, out_cap))
    return math.fsum(bound)


def _reward_lp(
    topology: Topology,
    subset: Tuple[int, ...],
    sessions: Sequence[Session],
    lambdas: Mapping[str, float],
) -> Tuple[float, Dict[Tuple[int, str], float], Dict[str, float]]:
    """max sum(lambda_k * delivered_k) over ``subset`` with transit conservation and capacity."""
    priced = [s for s in sessions if lambdas.get(s.id, 0.0) > 0]
    builder = LpBuilder()
    var: Dict[Tuple[int, str], int] = {}
    for i in subset:
        for session in priced:
            var[(i, session.id)] = builder.add_variable()
    sent = {s.id: builder.add_variable(cost=-lambdas[s.id], upper=s.max_rate) for s in priced}

    for i in subset:
        builder.add_row({var[(i, s.id)]: 1.0 for s in priced}, Sense.LE, topology.links[i].capacity)
    members = set(subset)
    for session in priced:
        for node in topology.nodes:
            if node == session.destination:
                continue
            row: Dict[int, float] = {}
            for i in topology.out_links(node):
                if i in members:
                    row[var[(i, session.id)]] = row.get(var[(i, session.id)], 0.0) + 1.0
            for i in topology.in_links(node):
                if i in members:
                    row[var[(i, session.id)]] = row.get(var[(i, session.id)], 0.0) - 1.0
            if node == session.source:
                row[sent[session.id]] = -1.0
            if row:
                builder.add_row(row, Sense.EQ, 0.0)

    solution = solve_lp(builder.build())
    if not solution.optimal:
        return 0.0, {}, {}
    flows = {
        key: float(solution.values[index])
        for key, index in var.items()
        if solution.values[index] > FLOW_TOLERANCE
    }
    delivered = {sid: float(solution.values[index]) for sid, index in sent.items()}
    return -float(solution.objective), flows, delivered


def exact_subproblem1(
    topology: Topology,
    sessions: Sequence[Session],
    lambdas: Mapping[str, float],
    cfg: SolverConfig,
    limits: Optional[OracleLimits] = None,
) -> Subproblem1Result:
    """Sub-problem 1 solved exactly: every link subset, with an LP for the flows inside it."""
    limits = limits or cfg.limits
    if len(topology.links) > limits.max_links:
        raise InstanceTooLargeError(
            f"{len(topology.links)} links exceeds the exact sub-problem limit of {limits.max_links}"
        )
    subsets = sorted(
        (topology.energy_of(subset), subset)
        for size in range(len(topology.links) + 1)
        for subset in itertools.combinations(range(len(topology.links)), size)
    )
    total_reward = math.fsum(lambdas.get(s.id, 0.0) * s.max_rate for s in sessions)

    best_key: Optional[tuple] = None
    best = Subproblem1Result(frozenset(), FlowAssignment(rates={s.id: 0.0 for s in sessions}), 0.0)
    best_value = 0.0
    for energy, subset in subsets:
        if not subset:
            continue
        if cfg.beta * energy - total_reward >= best_value - _TIE:
            break
        if cfg.beta * energy - _reward_bound(topology, subset, sessions, lambdas) >= best_value - _TIE:
            continue
        reward, flows, delivered = _reward_lp(topology, subset, sessions, lambdas)
        assignment = FlowAssignment(flows=flows, rates={s.id: delivered.get(s.id, 0.0) for s in sessions})
        active = assignment.used_links
        value = cfg.beta * topology.energy_of(active) - reward
        key = (round(value, 12), topology.energy_of(active), tuple(sorted(active)))
        if value < best_value - _TIE and (best_key is None or key < best_key):
            best_key = key
            best_value = value
            best = Subproblem1Result(active, assignment, value)
    return best


def recover_primal(
    topology: Topology,
    sessions: Sequence[Session],
    opened: FrozenSet[int],
    caps: Mapping[str, float],
    cfg: SolverConfig,
) -> Optional[NetworkPlan]:
    """Route every session on one path, preferring fewest hops inside ``opened``.

    Each rate is the largest admissible rung not above the path's residual
    capacity and the session's cap. A session that fits nowhere inside
    ``opened`` is dropped when dropping is allowed; otherwise it takes the
    cheapest-to-open path over all links. None when even that fails.
    """
    residual = {i: link.capacity for i, link in enumerate(topology.links)}
    active = set(opened)
    paths: Dict[str, Tuple[int, ...]] = {}
    rates: Dict[str, float] = {}
    for session in sorted(sessions, key=lambda s: (-caps.get(s.id, 0.0), s.id)):
        cap = caps.get(session.id, session.max_rate)
        options = [r for r in rate_options(session, cfg) if 0 < r <= cap + FLOW_TOLERANCE]
        path: Optional[Tuple[int, ...]] = None
        if options:
            smallest = options[0]
            path = cheapest_path(
                topology,
                session.source,
                session.destination,
                lambda i: 1.0 if i in active and residual[i] >= smallest - FLOW_TOLERANCE else None,
            )
            if path is None and not cfg.allow_drop:

                def opening_cost(i: int) -> Optional[float]:
                    if residual[i] < smallest - FLOW_TOLERANCE:
                        return None
                    return 0.0 if i in active else cfg.beta * topology.links[i].energy

                path = cheapest_path(topology, session.source, session.destination, opening_cost)
        if path is None:
            if not cfg.allow_drop:
                return None
            rates[session.id] = 0.0
            paths[session.id] = ()
            continue
        limit = min(min(residual[i] for i in path), cap)
        rate = [r for r in options if r <= limit + FLOW_TOLERANCE][-1]
        for i in path:
            residual[i] -= rate
            active.add(i)
        rates[session.id] = rate
        paths[session.id] = path
    return NetworkPlan.from_paths(topology, paths, rates)


def fallback_plan(topology: Topology, sessions: Sequence[Session], cfg: SolverConfig) -> Optional[NetworkPlan]:
    """Every session at its smallest admissible rung, routed over all links.

    Feasible whenever any rate vector is, since a flow for larger rates scales
    down to the smallest ones.
    """
    rates: Dict[str, float] = {}
    for session in sessions:
        smallest = _smallest_rung(session, cfg)
        if smallest is None:
            if not cfg.allow_drop:
                return None
            smallest = 0.0
        rates[session.id] = smallest
    demands = [Demand(s.source, s.destination, rates[s.id]) for s in sessions]
    everything = range(len(topology.links))
    if not cfg.limits.splittable:
        packed = pack_paths(topology, everything, demands)
        if packed is None:
            return None
        return NetworkPlan.from_paths(topology, {s.id: path for s, path in zip(sessions, packed)}, rates)
    result = mcf_feasible(topology, everything, demands)
    if not result.feasible:
        return None
    flows: Dict[Tuple[int, str], float] = {}
    routes: Dict[str, Tuple[int, ...]] = {}
    for k, session in enumerate(sessions):
        link_flows = {link: value for (link, c), value in result.flows.items() if c == k}
        flows.update({(link, session.id): value for link, value in link_flows.items()})
        routes[session.id] = ()
        if rates[session.id] > 0:
            routes[session.id] = primary_path(
                decompose_flow(topology, link_flows, session.source, session.destination)
            )
    return NetworkPlan.from_flows(topology, FlowAssignment(flows=flows, rates=rates), routes)


def solve_lagrangian(
    topology: Topology,
    sessions: Sequence[Session],
    cfg: SolverConfig,
    exact: Optional[bool] = None,
) -> LagrangianResult:
    """Subgradient master loop; returns the best feasible plan it recovered."""
    check_sessions(topology, sessions)
    sub = cfg.subgradient
    exact = sub.exact_subproblem if exact is None else exact
    start = initial_lambda(topology, cfg)
    state = DualState(lambdas={s.id: start for s in sessions})

    if not sessions:
        plan = evaluate_plan(NetworkPlan.empty(sessions), sessions, cfg)
        state.iteration = 1
        state.dual_estimate = 0.0
        state.offer(plan, 0.0)
        state.history.append(IterationRecord(1, 0.0, 0.0, 0.0))
        return LagrangianResult(plan=plan, value=0.0, state=state)

    unimproved = 0
    for t in range(1, sub.max_iters + 1):
        state.iteration = t
        targets = subproblem2_rates(sessions, state.lambdas, cfg)
        if exact:
            relaxed = exact_subproblem1(topology, sessions, state.lambdas, cfg)
        else:
            relaxed = subproblem1_flows(topology, sessions, state.lambdas, cfg)
        rate_term = math.fsum(
            -cfg.alpha * s.utility(targets[s.id]) + state.lambdas[s.id] * targets[s.id] for s in sessions
        )
        state.dual_estimate = relaxed.value + rate_term

        improved = False
        for caps in (targets, {s.id: s.max_rate for s in sessions}):
            plan = recover_primal(topology, sessions, relaxed.active_links, caps, cfg)
            if plan is None:
                continue
            value = objective_value(plan, sessions, cfg)
            if value is not None and state.offer(plan, value):
                improved = True

        gradient = {s.id: targets[s.id] - relaxed.delivered.get(s.id, 0.0) for s in sessions}
        grad_norm = max(abs(g) for g in gradient.values())
        step = sub.theta0 / math.sqrt(t)
        for sid, g in gradient.items():
            state.lambdas[sid] = max(0.0, state.lambdas[sid] + step * g)

        state.history.append(IterationRecord(t, state.dual_estimate, state.best_value, grad_norm))
        logger.debug(
            "iteration %d: dual %.6g, best %s, |g| %.3g",
            t,
            state.dual_estimate,
            state.best_value,
            grad_norm,
        )
        unimproved = 0 if improved else unimproved + 1
        if unimproved >= sub.stall_window and grad_norm < sub.stall_tolerance:
            break

    if state.best_plan is None:
        plan = fallback_plan(topology, sessions, cfg)
        value = None if plan is None else objective_value(plan, sessions, cfg)
        if plan is not None and value is not None:
            logger.debug("no plan recovered from the iterates; using the smallest-rung routing")
            state.offer(plan, value)
    if state.best_plan is None or state.best_value is None:
        raise NoFeasiblePlanError(f"no feasible plan recovered in {state.iteration} iterations")
    plan = evaluate_plan(state.best_plan, sessions, cfg)
    return LagrangianResult(plan=plan, value=state.best_value, state=state)
