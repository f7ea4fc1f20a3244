"""Exhaustive ground-truth solver for small instances."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx

from .errors import InfeasibleError, InstanceTooLargeError
from .lp import Demand, mcf_feasible
from .model import (
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
from .paths import build_graph, decompose_flow, pack_paths, primary_path

logger = logging.getLogger(__name__)

_VALUE_DIGITS = 9

Subset = Tuple[int, ...]


@dataclass(frozen=True)
class OracleResult:
    plan: NetworkPlan
    value: float
    feasibility_checks: int


def _candidate_key(plan: NetworkPlan, value: float, utility: float, rate_index: Tuple[int, ...]) -> tuple:
    # Lowest value, then lowest energy, then smallest link subset; remaining
    # ties go to higher utility and finally to the earlier rate vector.
    return (
        round(value, _VALUE_DIGITS),
        round(plan.energy_sum, _VALUE_DIGITS),
        tuple(sorted(plan.active_links)),
        -round(utility, _VALUE_DIGITS),
        rate_index,
    )


def _subsets_by_energy(topology: Topology) -> List[Tuple[float, Subset]]:
    indices = range(len(topology.links))
    subsets = [
        (topology.energy_of(subset), subset)
        for size in range(len(topology.links) + 1)
        for subset in itertools.combinations(indices, size)
    ]
    subsets.sort()
    return subsets


def _may_route(topology: Topology, subset: Subset, demands: Sequence[Demand]) -> bool:
    """Cheap necessary condition: enough capacity leaves each source and enters each sink."""
    out_cap: Dict[str, float] = {}
    in_cap: Dict[str, float] = {}
    for i in subset:
        link = topology.links[i]
        out_cap[link.src] = out_cap.get(link.src, 0.0) + link.capacity
        in_cap[link.dst] = in_cap.get(link.dst, 0.0) + link.capacity
    need_out: Dict[str, float] = {}
    need_in: Dict[str, float] = {}
    for demand in demands:
        if demand.rate > 0:
            need_out[demand.source] = need_out.get(demand.source, 0.0) + demand.rate
            need_in[demand.destination] = need_in.get(demand.destination, 0.0) + demand.rate
    tol = 1e-9
    return all(out_cap.get(n, 0.0) + tol >= r for n, r in need_out.items()) and all(
        in_cap.get(n, 0.0) + tol >= r for n, r in need_in.items()
    )


class _FeasibilityCache:
    """Memoized feasibility per (link subset, demand signature)."""

    def __init__(self, topology: Topology, splittable: bool) -> None:
        self.topology = topology
        self.splittable = splittable
        self.checks = 0
        self._memo: Dict[tuple, object] = {}

    def _connected(self, subset: Subset, demands: Sequence[Demand]) -> bool:
        pairs = tuple(sorted({(d.source, d.destination) for d in demands if d.rate > 0}))
        key = ("reach", subset, pairs)
        if key not in self._memo:
            graph = build_graph(self.topology, subset)
            self._memo[key] = all(t in nx.descendants(graph, s) for s, t in pairs)
        return bool(self._memo[key])

    def plan_for(
        self,
        subset: Subset,
        sessions: Sequence[Session],
        rates: Dict[str, float],
    ) -> Optional[NetworkPlan]:
        demands = [Demand(s.source, s.destination, rates[s.id]) for s in sessions]
        if not _may_route(self.topology, subset, demands):
            return None
        if not self._connected(subset, demands):
            return None
        if self.splittable:
            return self._splittable_plan(subset, sessions, rates, demands)
        return self._unsplittable_plan(subset, sessions, rates, demands)

    def _splittable_plan(self, subset, sessions, rates, demands) -> Optional[NetworkPlan]:
        totals: Dict[Tuple[str, str], List[float]] = {}
        for d in demands:
            if d.rate > 0:
                totals.setdefault((d.source, d.destination), []).append(d.rate)
        commodities = [Demand(s, t, math.fsum(r)) for (s, t), r in sorted(totals.items())]
        key = (subset, tuple(commodities))
        if key not in self._memo:
            self.checks += 1
            self._memo[key] = mcf_feasible(self.topology, subset, commodities)
        result = self._memo[key]
        if not result.feasible:
            return None

        position = {(c.source, c.destination): k for k, c in enumerate(commodities)}
        flows: Dict[Tuple[int, str], float] = {}
        routes: Dict[str, Tuple[int, ...]] = {}
        for session in sessions:
            rate = rates[session.id]
            routes[session.id] = ()
            if rate <= 0:
                continue
            k = position[(session.source, session.destination)]
            share = rate / commodities[k].rate
            link_flows = {link: value * share for (link, c), value in result.flows.items() if c == k}
            for link, value in link_flows.items():
                flows[(link, session.id)] = value
            routes[session.id] = primary_path(
                decompose_flow(self.topology, link_flows, session.source, session.destination)
            )
        return NetworkPlan.from_flows(self.topology, FlowAssignment(flows=flows, rates=rates), routes)

    def _unsplittable_plan(self, subset, sessions, rates, demands) -> Optional[NetworkPlan]:
        key = (subset, tuple(demands))
        if key not in self._memo:
            self.checks += 1
            self._memo[key] = pack_paths(self.topology, subset, demands)
        paths = self._memo[key]
        if paths is None:
            return None
        return NetworkPlan.from_paths(
            self.topology, {s.id: path for s, path in zip(sessions, paths)}, rates
        )


def solve_exact(
    topology: Topology,
    sessions: Sequence[Session],
    cfg: SolverConfig,
    limits: Optional[OracleLimits] = None,
) -> OracleResult:
    """Enumerate every active-link subset and rate vector; return the exact optimum.

    Raises InstanceTooLargeError when 2^|links| times the number of rate
    vectors exceeds the limits, and InfeasibleError when no pair is feasible.
    """
    limits = limits or cfg.limits
    check_sessions(topology, sessions)
    num_links = len(topology.links)
    if num_links > limits.max_links:
        raise InstanceTooLargeError(f"{num_links} links exceeds the oracle limit of {limits.max_links}")
    ladders = [rate_options(s, cfg) for s in sessions]
    combos = math.prod(len(ladder) for ladder in ladders)
    if (2**num_links) * combos > limits.max_rate_combos:
        raise InstanceTooLargeError(
            f"2^{num_links} subsets x {combos} rate vectors exceeds {limits.max_rate_combos}"
        )
    if not sessions:
        plan = evaluate_plan(NetworkPlan.empty(sessions), sessions, cfg)
        return OracleResult(plan=plan, value=0.0, feasibility_checks=0)

    subsets = _subsets_by_energy(topology)
    cache = _FeasibilityCache(topology, limits.splittable)
    best_key: Optional[tuple] = None
    best: Optional[Tuple[NetworkPlan, float]] = None

    for rate_index in itertools.product(*(range(len(ladder)) for ladder in ladders)):
        rates = {s.id: ladders[k][rate_index[k]] for k, s in enumerate(sessions)}
        utility = math.fsum(s.utility(rates[s.id]) for s in sessions)
        # Subsets come in (energy, index) order, so the first feasible one is
        # the cheapest for this rate vector.
        for _, subset in subsets:
            plan = cache.plan_for(subset, sessions, rates)
            if plan is None:
                continue
            value = objective_value(plan, sessions, cfg)
            if value is None:
                break
            key = _candidate_key(plan, value, utility, rate_index)
            if best_key is None or key < best_key:
                best_key, best = key, (plan, value)
            break

    logger.debug(
        "oracle examined %d rate vectors with %d feasibility checks",
        combos,
        cache.checks,
    )
    if best is None:
        raise InfeasibleError("no feasible combination of active links and session rates")
    plan, value = best
    return OracleResult(plan=evaluate_plan(plan, sessions, cfg), value=value, feasibility_checks=cache.checks)
