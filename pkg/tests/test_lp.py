from __future__ import annotations

import itertools
from typing import List, Optional, Tuple

import numpy as np
import pytest
from scipy.optimize import linprog

from green_planner.errors import LpError
from green_planner.lp import Demand, LinearProgram, LpBuilder, LpStatus, Sense, mcf_feasible, solve_lp
from green_planner.model import FlowAssignment, Link, NetworkPlan, Session, Topology
from green_planner.plan_validator import validate_plan

BOX = 1e4


def _random_lp(rng: np.random.Generator) -> LinearProgram:
    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, 5))
    kinds = (Sense.LE, Sense.GE, Sense.EQ)
    senses = tuple(kinds[int(i)] for i in rng.choice(3, size=m, p=[0.5, 0.3, 0.2]))
    return LinearProgram(
        objective=rng.integers(-3, 4, size=n).astype(float),
        matrix=rng.integers(-3, 4, size=(m, n)).astype(float),
        senses=senses,
        rhs=rng.integers(-5, 6, size=m).astype(float),
    )


def _as_inequalities(lp: LinearProgram, box: Optional[float]) -> Tuple[np.ndarray, np.ndarray]:
    rows: List[np.ndarray] = []
    rhs: List[float] = []
    for a, sense, b in zip(lp.matrix, lp.senses, lp.rhs):
        if sense in (Sense.LE, Sense.EQ):
            rows.append(a)
            rhs.append(b)
        if sense in (Sense.GE, Sense.EQ):
            rows.append(-a)
            rhs.append(-b)
    n = lp.num_vars
    for j in range(n):
        unit = np.zeros(n)
        unit[j] = -1.0
        rows.append(unit)
        rhs.append(0.0)
        if box is not None:
            rows.append(-unit)
            rhs.append(box)
    return np.vstack(rows), np.array(rhs)


def _vertex_optimum(lp: LinearProgram, box: float) -> Optional[float]:
    """Best objective over every basic feasible point of the boxed problem."""
    g, h = _as_inequalities(lp, box)
    n = lp.num_vars
    best = None
    for rows in itertools.combinations(range(g.shape[0]), n):
        sub = g[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, h[list(rows)])
        if np.all(g @ x <= h + 1e-9):
            value = float(lp.objective @ x)
            best = value if best is None else min(best, value)
    return best


def _scipy_status(lp: LinearProgram) -> LpStatus:
    le = [i for i, s in enumerate(lp.senses) if s is not Sense.EQ]
    eq = [i for i, s in enumerate(lp.senses) if s is Sense.EQ]
    sign = np.array([1.0 if lp.senses[i] is Sense.LE else -1.0 for i in le])
    result = linprog(
        lp.objective,
        A_ub=(lp.matrix[le] * sign[:, None]) if le else None,
        b_ub=(lp.rhs[le] * sign) if le else None,
        A_eq=lp.matrix[eq] if eq else None,
        b_eq=lp.rhs[eq] if eq else None,
        bounds=[(0, None)] * lp.num_vars,
        method="highs",
    )
    return {0: LpStatus.OPTIMAL, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}[result.status]


def test_single_variable_lower_bound_row() -> None:
    lp = LinearProgram(objective=np.array([1.0]), matrix=np.array([[1.0]]), senses=(Sense.GE,), rhs=np.array([3.0]))
    solution = solve_lp(lp)
    assert solution.optimal
    assert solution.values[0] == pytest.approx(3.0)
    assert solution.objective == pytest.approx(3.0)


def test_maximize_up_to_bound() -> None:
    lp = LinearProgram(objective=np.array([-1.0]), matrix=np.array([[1.0]]), senses=(Sense.LE,), rhs=np.array([5.0]))
    solution = solve_lp(lp)
    assert solution.values[0] == pytest.approx(5.0)


def test_unbounded_and_infeasible() -> None:
    unbounded = LinearProgram(objective=np.array([-1.0, 0.0]), matrix=np.array([[0.0, 1.0]]),
                              senses=(Sense.LE,), rhs=np.array([1.0]))
    assert solve_lp(unbounded).status is LpStatus.UNBOUNDED
    infeasible = LinearProgram(objective=np.array([1.0]), matrix=np.array([[1.0], [1.0]]),
                               senses=(Sense.LE, Sense.GE), rhs=np.array([1.0, 2.0]))
    assert solve_lp(infeasible).status is LpStatus.INFEASIBLE


def test_variable_bounds_are_respected() -> None:
    builder = LpBuilder()
    x = builder.add_variable(cost=-1.0, lower=1.0, upper=2.5)
    y = builder.add_variable(cost=1.0, lower=-2.0, upper=4.0)
    builder.add_row({x: 1.0, y: 1.0}, Sense.GE, 0.0)
    solution = solve_lp(builder.build())
    assert solution.optimal
    assert solution.values[x] == pytest.approx(2.5)
    assert solution.values[y] == pytest.approx(-2.0)
    assert solution.objective == pytest.approx(-4.5)


def test_malformed_programs_raise() -> None:
    with pytest.raises(LpError):
        LinearProgram(objective=np.array([1.0, 2.0]), matrix=np.array([[1.0]]), senses=(Sense.LE,), rhs=np.array([1.0]))
    with pytest.raises(LpError):
        LinearProgram(objective=np.array([np.nan]), matrix=np.array([[1.0]]), senses=(Sense.LE,), rhs=np.array([1.0]))


def test_random_programs_match_vertex_enumeration() -> None:
    rng = np.random.default_rng(11)
    statuses = {status: 0 for status in LpStatus}
    for _ in range(500):
        lp = _random_lp(rng)
        solution = solve_lp(lp)
        assert solution.status is _scipy_status(lp)
        statuses[solution.status] += 1
        if not solution.optimal:
            continue
        assert _vertex_optimum(lp, BOX) == pytest.approx(solution.objective, abs=1e-7)
        g, h = _as_inequalities(lp, None)
        assert np.all(g @ solution.values <= h + 1e-7)
    assert all(count > 0 for count in statuses.values())


def test_random_feasible_points_never_beat_the_optimum() -> None:
    rng = np.random.default_rng(12)
    for _ in range(200):
        lp = _random_lp(rng)
        solution = solve_lp(lp)
        if not solution.optimal:
            continue
        g, h = _as_inequalities(lp, None)
        for point in rng.uniform(0.0, 6.0, size=(50, lp.num_vars)):
            if np.all(g @ point <= h):
                assert float(lp.objective @ point) >= solution.objective - 1e-7


def test_solve_is_deterministic() -> None:
    lp = _random_lp(np.random.default_rng(99))
    first, second = solve_lp(lp), solve_lp(lp)
    assert first.status is second.status
    if first.optimal:
        assert np.array_equal(first.values, second.values)


def _two_link(capacity: float) -> Topology:
    return Topology(nodes=("A", "B"), links=(Link("A", "B", capacity, 1.0), Link("A", "B", capacity, 1.0)))


def test_mcf_two_links_carry_both_sessions() -> None:
    demands = [Demand("A", "B", 1.0), Demand("A", "B", 1.0)]
    assert mcf_feasible(_two_link(1.0), {0, 1}, demands).feasible
    assert not mcf_feasible(_two_link(1.0), {0}, demands).feasible


def test_mcf_empty_is_feasible() -> None:
    result = mcf_feasible(_two_link(1.0), set(), [])
    assert result.feasible
    assert dict(result.flows) == {}


def test_mcf_witness_passes_validation() -> None:
    topology = Topology(
        nodes=("a", "b", "c", "d"),
        links=(
            Link("a", "b", 1.0, 1.0),
            Link("b", "d", 1.0, 1.0),
            Link("a", "c", 1.0, 1.0),
            Link("c", "d", 1.0, 1.0),
            Link("b", "c", 1.0, 1.0),
        ),
    )
    sessions = [Session("x", "a", "d", (1.5,)), Session("y", "b", "c", (0.5,))]
    demands = [Demand(s.source, s.destination, s.max_rate) for s in sessions]
    result = mcf_feasible(topology, range(5), demands)
    assert result.feasible
    flows = FlowAssignment(
        flows={(link, sessions[k].id): value for (link, k), value in result.flows.items()},
        rates={s.id: s.max_rate for s in sessions},
    )
    routes = {"x": (0, 1), "y": (4,)}
    plan = NetworkPlan.from_flows(topology, flows, routes)
    assert validate_plan(plan, topology, sessions) == []


@pytest.mark.parametrize("factor", [0.5, 3.0, 1000.0])
def test_mcf_status_is_scale_invariant(factor: float) -> None:
    rng = np.random.default_rng(7)
    nodes = ("a", "b", "c", "d")
    for _ in range(30):
        links = []
        for _ in range(6):
            src, dst = rng.choice(4, size=2, replace=False)
            links.append((nodes[int(src)], nodes[int(dst)], float(rng.uniform(0.5, 2.0))))
        demands = []
        for _ in range(2):
            src, dst = rng.choice(4, size=2, replace=False)
            demands.append((nodes[int(src)], nodes[int(dst)], float(rng.uniform(0.1, 1.5))))
        base = Topology(nodes=nodes, links=tuple(Link(s, d, c, 1.0) for s, d, c in links))
        scaled = Topology(nodes=nodes, links=tuple(Link(s, d, c * factor, 1.0) for s, d, c in links))
        plain = mcf_feasible(base, range(6), [Demand(*d) for d in demands])
        grown = mcf_feasible(scaled, range(6), [Demand(s, t, r * factor) for s, t, r in demands])
        assert plain.feasible == grown.feasible
