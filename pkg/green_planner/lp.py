"""Dense two-phase primal simplex with Bland's rule, and the multicommodity flow LP."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import LpError
from .model import Topology

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-9
_ZERO_CLAMP = 1e-12


class Sense(str, Enum):
    LE = "<="
    EQ = "=="
    GE = ">="


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """minimize c·x subject to rows (A x {<=,==,>=} b) and lower <= x <= upper."""

    objective: np.ndarray
    matrix: np.ndarray
    senses: Tuple[Sense, ...]
    rhs: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        n = c.shape[0]
        a = np.asarray(self.matrix, dtype=float)
        if a.size == 0:
            a = a.reshape(len(self.senses), n)
        b = np.asarray(self.rhs, dtype=float).reshape(-1)
        senses = tuple(Sense(s) for s in self.senses)
        if a.ndim != 2 or a.shape != (len(senses), n) or b.shape[0] != len(senses):
            raise LpError(
                f"dimension mismatch: objective {n}, matrix {a.shape}, senses {len(senses)}, rhs {b.shape[0]}"
            )
        lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape[0] != n or upper.shape[0] != n:
            raise LpError("bound vectors do not match the number of variables")
        for name, values in (("objective", c), ("matrix", a), ("rhs", b), ("lower bound", lower)):
            if not np.all(np.isfinite(values)):
                raise LpError(f"non-finite {name} coefficient")
        if np.any(np.isnan(upper)) or np.any(upper < lower):
            raise LpError("upper bound below lower bound")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "rhs", b)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def num_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def num_rows(self) -> int:
        return len(self.senses)


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    values: Optional[np.ndarray] = None
    objective: Optional[float] = None

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class LpBuilder:
    """Incremental row-by-row construction of a LinearProgram."""

    def __init__(self) -> None:
        self._costs: List[float] = []
        self._lower: List[float] = []
        self._upper: List[float] = []
        self._rows: List[Dict[int, float]] = []
        self._senses: List[Sense] = []
        self._rhs: List[float] = []

    def add_variable(self, cost: float = 0.0, lower: float = 0.0, upper: float = np.inf) -> int:
        self._costs.append(cost)
        self._lower.append(lower)
        self._upper.append(upper)
        return len(self._costs) - 1

    def add_row(self, coefficients: Mapping[int, float], sense: Sense, rhs: float) -> None:
        self._rows.append(dict(coefficients))
        self._senses.append(sense)
        self._rhs.append(rhs)

    def build(self) -> LinearProgram:
        matrix = np.zeros((len(self._rows), len(self._costs)))
        for i, row in enumerate(self._rows):
            for j, value in row.items():
                matrix[i, j] += value
        return LinearProgram(
            objective=np.array(self._costs, dtype=float),
            matrix=matrix,
            senses=tuple(self._senses),
            rhs=np.array(self._rhs, dtype=float),
            lower=np.array(self._lower, dtype=float),
            upper=np.array(self._upper, dtype=float),
        )


def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    tableau[np.abs(tableau) < _ZERO_CLAMP] = 0.0


def _run_simplex(tableau: np.ndarray, basis: List[int], tol: float) -> bool:
    """Pivot to optimality with Bland's rule; False means unbounded."""
    m = tableau.shape[0] - 1
    max_pivots = 50 * (tableau.shape[0] + tableau.shape[1]) + 100
    for _ in range(max_pivots):
        entering = np.flatnonzero(tableau[-1, :-1] < -tol)
        if entering.size == 0:
            return True
        col = int(entering[0])
        column = tableau[:m, col]
        candidates = np.flatnonzero(column > tol)
        if candidates.size == 0:
            return False
        ratios = tableau[candidates, -1] / column[candidates]
        best = ratios.min()
        tied = candidates[ratios <= best + tol]
        row = int(min(tied, key=lambda r: basis[r]))
        _pivot(tableau, row, col)
        basis[row] = col
    raise LpError("simplex exceeded its pivot budget")


def _standard_rows(lp: LinearProgram) -> Tuple[np.ndarray, List[Sense], np.ndarray]:
    """Shift to y = x - lower, split equalities, add finite upper bounds as rows."""
    n = lp.num_vars
    shifted = lp.rhs - lp.matrix @ lp.lower
    rows: List[np.ndarray] = []
    senses: List[Sense] = []
    rhs: List[float] = []
    for a, sense, b in zip(lp.matrix, lp.senses, shifted):
        if sense is Sense.EQ:
            rows.extend([a, a])
            senses.extend([Sense.LE, Sense.GE])
            rhs.extend([b, b])
        else:
            rows.append(a)
            senses.append(sense)
            rhs.append(b)
    for j in np.flatnonzero(np.isfinite(lp.upper)):
        unit = np.zeros(n)
        unit[j] = 1.0
        rows.append(unit)
        senses.append(Sense.LE)
        rhs.append(lp.upper[j] - lp.lower[j])
    for i, b in enumerate(rhs):
        if b < 0:
            rows[i] = -rows[i]
            rhs[i] = -b
            senses[i] = Sense.GE if senses[i] is Sense.LE else Sense.LE
    matrix = np.vstack(rows) if rows else np.zeros((0, n))
    return matrix, senses, np.array(rhs, dtype=float)


def solve_lp(lp: LinearProgram, tol: float = PIVOT_TOLERANCE) -> LpSolution:
    n = lp.num_vars
    matrix, senses, rhs = _standard_rows(lp)
    m = matrix.shape[0]
    feasibility_tol = tol * max(1.0, float(np.max(np.abs(rhs), initial=0.0)))

    if n == 0:
        for sense, b in zip(senses, rhs):
            if (sense is Sense.LE and b < -feasibility_tol) or (sense is Sense.GE and b > feasibility_tol):
                return LpSolution(LpStatus.INFEASIBLE)
        return LpSolution(LpStatus.OPTIMAL, values=np.zeros(0), objective=0.0)

    artificial_rows = [i for i, s in enumerate(senses) if s is Sense.GE]
    num_cols = n + m + len(artificial_rows)
    tableau = np.zeros((m + 1, num_cols + 1))
    tableau[:m, :n] = matrix
    tableau[:m, -1] = rhs
    basis: List[int] = []
    next_artificial = n + m
    for i, sense in enumerate(senses):
        if sense is Sense.LE:
            tableau[i, n + i] = 1.0
            basis.append(n + i)
        else:
            tableau[i, n + i] = -1.0
            tableau[i, next_artificial] = 1.0
            basis.append(next_artificial)
            next_artificial += 1

    slack_end = n + m
    if artificial_rows:
        for i in artificial_rows:
            tableau[-1] -= tableau[i]
        tableau[-1, slack_end:num_cols] = 0.0
        if not _run_simplex(tableau, basis, tol):
            raise LpError("phase one reported an unbounded auxiliary problem")
        if -tableau[-1, -1] > feasibility_tol:
            return LpSolution(LpStatus.INFEASIBLE)
        redundant = []
        for i in range(m):
            if basis[i] < slack_end:
                continue
            nonzero = np.flatnonzero(np.abs(tableau[i, :slack_end]) > tol)
            if nonzero.size:
                _pivot(tableau, i, int(nonzero[0]))
                basis[i] = int(nonzero[0])
            else:
                redundant.append(i)
        if redundant:
            keep = [i for i in range(m) if i not in redundant]
            tableau = tableau[keep + [m]]
            basis = [basis[i] for i in keep]
            m = len(keep)
        tableau = np.hstack([tableau[:, :slack_end], tableau[:, -1:]])

    width = tableau.shape[1] - 1
    costs = np.zeros(width)
    costs[:n] = lp.objective
    tableau[-1, :] = 0.0
    tableau[-1, :width] = costs
    for i, var in enumerate(basis):
        if costs[var] != 0.0:
            tableau[-1] -= costs[var] * tableau[i]

    if not _run_simplex(tableau, basis, tol):
        return LpSolution(LpStatus.UNBOUNDED)

    shifted = np.zeros(width)
    for i, var in enumerate(basis):
        shifted[var] = tableau[i, -1]
    values = lp.lower + np.clip(shifted[:n], 0.0, None)
    upper_finite = np.isfinite(lp.upper)
    values[upper_finite] = np.minimum(values[upper_finite], lp.upper[upper_finite])
    return LpSolution(LpStatus.OPTIMAL, values=values, objective=float(lp.objective @ values))


class Demand(NamedTuple):
    source: str
    destination: str
    rate: float


@dataclass(frozen=True)
class MulticommodityResult:
    """Feasibility status plus a witness flow keyed by (link index, demand index)."""

    status: LpStatus
    flows: Mapping[Tuple[int, int], float] = field(default_factory=dict)
    solution: Optional[LpSolution] = None

    @property
    def feasible(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def mcf_feasible(
    topology: Topology,
    active_links: Iterable[int],
    demands: Sequence[Demand],
) -> MulticommodityResult:
    """Can ``demands`` be routed splittably over ``active_links`` alone?

    Flows pay one unit per link traversed so the witness carries no cycles.
    """
    links = sorted(set(active_links))
    commodities = [(k, d) for k, d in enumerate(demands) if d.rate > 0]
    if not commodities:
        return MulticommodityResult(LpStatus.OPTIMAL)

    builder = LpBuilder()
    var: Dict[Tuple[int, int], int] = {}
    for link in links:
        for k, _ in commodities:
            var[(link, k)] = builder.add_variable(cost=1.0)

    for link in links:
        builder.add_row({var[(link, k)]: 1.0 for k, _ in commodities}, Sense.LE, topology.links[link].capacity)

    active = set(links)
    for k, demand in commodities:
        for node in topology.nodes:
            row: Dict[int, float] = {}
            for i in topology.out_links(node):
                if i in active:
                    row[var[(i, k)]] = row.get(var[(i, k)], 0.0) + 1.0
            for i in topology.in_links(node):
                if i in active:
                    row[var[(i, k)]] = row.get(var[(i, k)], 0.0) - 1.0
            if node == demand.source:
                target = demand.rate
            elif node == demand.destination:
                target = -demand.rate
            else:
                target = 0.0
            if row or target:
                builder.add_row(row, Sense.EQ, target)

    solution = solve_lp(builder.build())
    if not solution.optimal:
        return MulticommodityResult(solution.status, solution=solution)
    flows = {
        key: float(solution.values[index])
        for key, index in var.items()
        if solution.values[index] > PIVOT_TOLERANCE
    }
    return MulticommodityResult(LpStatus.OPTIMAL, flows=flows, solution=solution)
