from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .controller import SolverKind, TraceParams, generate_trace, run_simulation
from .data_loader import load_config, load_demand, load_topology, load_trace, plan_to_dict
from .errors import (
    InfeasibleError,
    InputError,
    InstanceTooLargeError,
    InvariantViolationError,
    NoFeasiblePlanError,
    PlannerError,
)
from .lagrangian import IterationRecord, solve_lagrangian
from .model import Link, NetworkPlan, Session, SolverConfig, Topology
from .oracle import solve_exact
from .plan_validator import validate_plan
from .reports import (
    CompareRow,
    compare_frame,
    iterations_frame,
    objective_to_dict,
    orders_to_list,
    summarize_compare,
    telemetry_frame,
    validation_to_dict,
    write_csv,
    write_json,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_INVARIANT = 3


def _load_instance(args: argparse.Namespace) -> Tuple[Topology, List[Session], SolverConfig]:
    topology = load_topology(args.topology)
    sessions = load_demand(args.demand, topology)
    cfg = load_config(args.config) if args.config else SolverConfig()
    return topology, sessions, replace(cfg, seed=args.seed)


def _run_solver(
    kind: SolverKind,
    topology: Topology,
    sessions: Sequence[Session],
    cfg: SolverConfig,
) -> Tuple[NetworkPlan, float, Optional[List[IterationRecord]]]:
    if kind is SolverKind.ORACLE:
        result = solve_exact(topology, sessions, cfg)
        return result.plan, result.value, None
    outcome = solve_lagrangian(topology, sessions, cfg)
    return outcome.plan, outcome.value, outcome.state.history


def cmd_solve(args: argparse.Namespace) -> int:
    topology, sessions, cfg = _load_instance(args)
    plan, value, history = _run_solver(SolverKind(args.solver), topology, sessions, cfg)
    violations = validate_plan(plan, topology, sessions, allow_drop=cfg.allow_drop)

    out: Path = args.out
    write_json(plan_to_dict(plan), out / "plan.json")
    write_json(objective_to_dict(plan, value), out / "objective.json")
    write_json(validation_to_dict(violations), out / "validation.json")
    if args.iterations and history is not None:
        write_csv(iterations_frame(history), out / "iterations.csv")
    if violations:
        raise InvariantViolationError(violations)

    print(
        f"{args.solver}: objective {value:.6g}, {len(plan.active_links)}/{len(topology.links)} links on, "
        f"{len(sessions)} sessions"
    )
    return EXIT_OK


def perturb_topology(topology: Topology, seed: int, instance_id: int) -> Topology:
    """Scale every capacity and energy by an independent factor from U[0.5, 1.5]; instance 0 is unchanged."""
    if instance_id == 0 or not topology.links:
        return topology
    rng = np.random.default_rng([seed, instance_id])
    factors = rng.uniform(0.5, 1.5, size=(len(topology.links), 2))
    links = [
        Link(link.src, link.dst, link.capacity * float(cap), link.energy * float(energy))
        for link, (cap, energy) in zip(topology.links, factors)
    ]
    return Topology(nodes=topology.nodes, links=tuple(links))


def cmd_compare(args: argparse.Namespace) -> int:
    if args.trials < 0:
        raise InputError("trials must be non-negative", field="--trials")
    topology, sessions, cfg = _load_instance(args)
    rows: List[CompareRow] = []
    for instance_id in range(args.trials):
        instance = perturb_topology(topology, args.seed, instance_id)

        started = time.perf_counter()
        try:
            oracle_value = solve_exact(instance, sessions, cfg).value
        except InfeasibleError:
            oracle_value = float("inf")
        oracle_seconds = time.perf_counter() - started

        started = time.perf_counter()
        try:
            outcome = solve_lagrangian(instance, sessions, cfg)
        except NoFeasiblePlanError:
            heuristic_value = float("inf")
        else:
            heuristic_value = outcome.value
            violations = validate_plan(outcome.plan, instance, sessions, allow_drop=cfg.allow_drop)
            if violations:
                raise InvariantViolationError(violations)
        heuristic_seconds = time.perf_counter() - started

        logger.debug("instance %d: oracle %s, heuristic %s", instance_id, oracle_value, heuristic_value)
        rows.append(CompareRow(instance_id, oracle_value, heuristic_value, oracle_seconds, heuristic_seconds))

    write_csv(compare_frame(rows, timings=args.timings), args.out / "compare.csv")
    summary = summarize_compare(rows)
    print(
        f"compared {summary.instances} instances: mean gap {summary.mean_gap:.6g}, "
        f"max gap {summary.max_gap:.6g}, heuristic failures {summary.heuristic_failures}"
    )
    logger.info("compare summary: %s", asdict(summary))
    return EXIT_OK


def _parse_ladder(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise InputError(f"ladder must be comma-separated numbers, got {text!r}", field="--ladder") from None


def cmd_simulate(args: argparse.Namespace) -> int:
    topology = load_topology(args.topology)
    cfg = load_config(args.config) if args.config else SolverConfig()
    cfg = replace(cfg, seed=args.seed)
    if args.trace:
        trace = load_trace(args.trace, topology)
    else:
        params = TraceParams(
            num_epochs=args.epochs,
            arrival_rate=args.arrival_rate,
            mean_holding_epochs=args.mean_holding,
            ladder=_parse_ladder(args.ladder),
            duration=args.duration,
            seed=args.seed,
        )
        trace = generate_trace(topology, params)

    results = run_simulation(topology, trace, cfg, SolverKind(args.solver))
    write_json(orders_to_list(results), args.out / "orders.json")
    write_csv(telemetry_frame(results), args.out / "telemetry.csv")

    energy = sum(r.telemetry.energy_total for r in results)
    flagged = sum(1 for r in results if r.flagged)
    print(f"simulated {len(results)} epochs: energy {energy:.6g}, {flagged} epochs kept previous provisioning")
    return EXIT_OK


def _add_instance_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--topology", required=True, type=Path, help="Topology JSON file.")
    parser.add_argument("--demand", required=True, type=Path, help="Session demand JSON file.")
    parser.add_argument("--config", type=Path, help="Solver configuration JSON (defaults apply when omitted).")


def _add_common_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, type=Path, help="Directory for output artifacts.")
    parser.add_argument("--seed", type=int, default=0, help="Seed for every random choice (default: 0).")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Energy-aware network planning: pick links, routes and rates.")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Log level for messages on standard error (default: WARNING).",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="Solve one instance and validate the plan.")
    _add_instance_args(solve)
    _add_common_args(solve)
    solve.add_argument("--solver", choices=[k.value for k in SolverKind], default=SolverKind.LAGRANGIAN.value)
    solve.add_argument("--iterations", action="store_true", help="Also write the per-iteration trace CSV.")
    solve.set_defaults(handler=cmd_solve)

    compare = commands.add_parser("compare", help="Run oracle and heuristic on seeded perturbations.")
    _add_instance_args(compare)
    _add_common_args(compare)
    compare.add_argument("--trials", type=int, default=1, help="Number of instances (default: 1).")
    compare.add_argument("--timings", action="store_true", help="Add runtime columns to compare.csv.")
    compare.set_defaults(handler=cmd_compare)

    simulate = commands.add_parser("simulate", help="Run the epoch controller over a trace.")
    simulate.add_argument("--topology", required=True, type=Path, help="Topology JSON file.")
    simulate.add_argument("--config", type=Path, help="Solver configuration JSON.")
    _add_common_args(simulate)
    simulate.add_argument("--solver", choices=[k.value for k in SolverKind], default=SolverKind.ORACLE.value)
    simulate.add_argument("--trace", type=Path, help="Trace JSON; a synthetic trace is generated when omitted.")
    simulate.add_argument("--epochs", type=int, default=10, help="Generated trace: number of epochs.")
    simulate.add_argument("--arrival-rate", type=float, default=1.0, help="Generated trace: mean arrivals per epoch.")
    simulate.add_argument("--mean-holding", type=float, default=3.0, help="Generated trace: mean holding epochs.")
    simulate.add_argument("--ladder", default="0.25,0.5,1", help="Generated trace: comma-separated rate ladder.")
    simulate.add_argument("--duration", type=float, default=1.0, help="Generated trace: epoch length in seconds.")
    simulate.set_defaults(handler=cmd_simulate)
    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (InputError, InstanceTooLargeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InfeasibleError, NoFeasiblePlanError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except PlannerError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
