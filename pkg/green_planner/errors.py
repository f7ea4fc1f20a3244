from __future__ import annotations

from typing import TYPE_CHECKING, Optional, Sequence

if TYPE_CHECKING:
    from .plan_validator import Violation


class PlannerError(Exception):
    """Base class for every error raised by the planner."""


class InputError(PlannerError, ValueError):
    """Malformed or inconsistent input data."""

    def __init__(self, message: str, field: Optional[str] = None) -> None:
        self.message = message
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)

    def under(self, prefix: str) -> "InputError":
        """Re-anchor the error below a parent field such as ``links[3]``."""
        field = f"{prefix}.{self.field}" if self.field else prefix
        return InputError(self.message, field=field)


class LpError(PlannerError, ValueError):
    """A linear program that cannot be handed to the simplex."""


class InstanceTooLargeError(PlannerError):
    pass


class InfeasibleError(PlannerError):
    """No feasible plan exists (proven by exhaustive search)."""


class NoFeasiblePlanError(PlannerError):
    """The heuristic stopped without finding a feasible plan."""


class InvariantViolationError(PlannerError):
    def __init__(self, violations: Sequence["Violation"]) -> None:
        self.violations = list(violations)
        detail = "; ".join(v.message for v in self.violations[:5])
        super().__init__(f"plan failed validation ({len(self.violations)} violations): {detail}")


class RoutingError(PlannerError):
    """Installed routing tables loop or drop a session's traffic."""
