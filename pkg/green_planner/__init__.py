"""Energy-aware network planning: which links to power, how to route, what rate to give each session."""

from .controller import EpochTrace, SolverKind, TraceParams, generate_trace, run_simulation  # noqa: F401
from .data_loader import load_config, load_demand, load_topology, load_trace  # noqa: F401
from .lagrangian import solve_lagrangian  # noqa: F401
from .model import NetworkPlan, Session, SolverConfig, Topology, UtilityFunction  # noqa: F401
from .oracle import solve_exact  # noqa: F401
from .plan_validator import validate_plan  # noqa: F401
