#!/usr/bin/env python3
"""
End-to-end demo for the green network planner.

Loads the two-link example, solves it with the exact oracle and the Lagrangian
heuristic, validates both plans, then replays a short epoch trace through the
controller and writes a JSON report.
"""
from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional

# Add parent directory to path to import green_planner
sys.path.insert(0, str(Path(__file__).parent.parent))

from green_planner.controller import Epoch, EpochTrace, SolverKind, run_simulation
from green_planner.data_loader import load_config, load_demand, load_topology, plan_to_dict
from green_planner.errors import PlannerError
from green_planner.lagrangian import solve_lagrangian
from green_planner.oracle import solve_exact
from green_planner.plan_validator import validate_plan


@dataclass
class DemoResult:
    """Outcome of one solver on the demo instance."""
    solver: str
    value: Optional[float]
    active_links: List[int]
    rates: Dict[str, float]
    violations: int
    error: Optional[str]


@dataclass
class DemoSummary:
    """Summary statistics for the demo run."""
    oracle_value: Optional[float]
    heuristic_value: Optional[float]
    gap: Optional[float]
    epochs_simulated: int
    epochs_flagged: int
    total_energy: float


def run_demo(data_dir: Path, output_dir: Path) -> None:
    """Run the end-to-end demo."""
    print("=" * 70)
    print("Green Planner Demo - Two-Link Example")
    print("=" * 70)

    print(f"\n[1/5] Loading instance from: {data_dir}")
    topology = load_topology(data_dir / "topology.json")
    sessions = load_demand(data_dir / "demand.json", topology)
    cfg = load_config(data_dir / "config.json")
    print(f"  ✓ {len(topology.nodes)} nodes, {len(topology.links)} links, {len(sessions)} sessions")
    print(f"  ✓ Mode: {cfg.mode.value} (alpha={cfg.alpha}, beta={cfg.beta})")

    print("\n[2/5] Solving...")
    results: List[DemoResult] = []
    plans = {}
    for name in ("oracle", "lagrangian"):
        print(f"  {name:12s}", end=" ")
        try:
            if name == "oracle":
                outcome = solve_exact(topology, sessions, cfg)
            else:
                outcome = solve_lagrangian(topology, sessions, cfg)
        except PlannerError as e:
            print(f"✗ ({e})")
            results.append(DemoResult(name, None, [], {}, 0, str(e)))
            continue
        violations = validate_plan(outcome.plan, topology, sessions, allow_drop=cfg.allow_drop)
        plans[name] = outcome.plan
        print(f"✓ (objective: {outcome.value:.3f}, links on: {sorted(outcome.plan.active_links)})")
        results.append(
            DemoResult(
                solver=name,
                value=outcome.value,
                active_links=sorted(outcome.plan.active_links),
                rates=dict(outcome.plan.rates),
                violations=len(violations),
                error=None,
            )
        )

    print("\n[3/5] Simulating three epochs: arrival, arrival, departure...")
    trace = EpochTrace(
        epochs=(
            Epoch(0, 1.0, arrivals=(sessions[0],)),
            Epoch(1, 1.0, arrivals=tuple(sessions[1:])),
            Epoch(2, 1.0, departures=(sessions[0].id,)),
        )
    )
    epochs = run_simulation(topology, trace, cfg, SolverKind.ORACLE)
    for result in epochs:
        report = result.telemetry
        marker = "kept previous" if result.flagged else "✓"
        print(
            f"  epoch {report.epoch}: {report.links_on_count} links on, "
            f"energy {report.energy_total:.3f}, utility {report.utility_total:.3f} {marker}"
        )

    print("\n[4/5] Generating summary statistics...")
    values = {r.solver: r.value for r in results}
    oracle_value = values.get("oracle")
    heuristic_value = values.get("lagrangian")
    gap = None
    if oracle_value is not None and heuristic_value is not None:
        gap = heuristic_value - oracle_value
    summary = DemoSummary(
        oracle_value=oracle_value,
        heuristic_value=heuristic_value,
        gap=gap,
        epochs_simulated=len(epochs),
        epochs_flagged=sum(1 for r in epochs if r.flagged),
        total_energy=sum(r.telemetry.energy_total for r in epochs),
    )

    results_path = output_dir / "demo_results.json"
    print(f"\n[5/5] Saving results to: {results_path}")
    output = {
        "results": [asdict(r) for r in results],
        "plans": {name: plan_to_dict(plan) for name, plan in plans.items()},
        "summary": asdict(summary),
    }
    results_path.parent.mkdir(parents=True, exist_ok=True)
    results_path.write_text(json.dumps(output, indent=2, sort_keys=True), encoding="utf-8")
    print("  ✓ Results saved")

    print("\n" + "=" * 70)
    print("SUMMARY")
    print("=" * 70)
    for r in results:
        if r.value is not None:
            print(f"{r.solver:12s} objective {r.value:8.3f}   rates {r.rates}")
    if summary.gap is not None:
        print(f"Heuristic gap:         {summary.gap:.3f}")
    print(f"Epochs simulated:      {summary.epochs_simulated}")
    print(f"Energy over trace:     {summary.total_energy:.3f}")
    print("=" * 70)
    print(f"\n✓ Demo complete! Check {output_dir} for results.")


def main() -> None:
    """Main entry point."""
    data_dir = Path(__file__).parent / "data"
    output_dir = Path(__file__).parent / "output"
    run_demo(data_dir=data_dir, output_dir=output_dir)


if __name__ == "__main__":
    main()
