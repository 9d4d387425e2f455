"""Result container for the scheduling entry points."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from ..physics import ResidualReport, Solution

if TYPE_CHECKING:  # pragma: no cover
    from .loop import Trace


@dataclass
class ScheduleResult:
    """A finished schedule plus the evidence about its quality.

    ``objective`` is the economic cost of the assembled schedule as the
    exact physics prices it; ``certified`` reports whether every nonconvex
    constraint holds within the oracle tolerance.  A result that failed to
    converge or certify is still returned, with the flags set accordingly.
    """
    solution: Solution
    objective: float
    converged: bool
    certified: bool
    residuals: ResidualReport
    trace: "Trace"
    iterations: int
    status: str
    x_couple: dict[str, float] = field(default_factory=dict)
    breakdown: dict[str, float] = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "objective": self.objective,
            "converged": self.converged,
            "certified": self.certified,
            "iterations": self.iterations,
            "status": self.status,
            "max_residual": self.residuals.max_rel,
            "worst_family": self.residuals.worst_family(),
            "breakdown": dict(sorted(self.breakdown.items())),
        }
