"""Pass/fail report shared by the condition checks."""

from dataclasses import dataclass, field
from typing import Any, Optional


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of one inequality check.

    ``margin`` is the smallest slack over everything checked (negative when
    violated).  ``tolerance`` is the numerical noise level below which a
    negative margin still counts as satisfied; it is zero for checks that are
    evaluated exactly.
    """

    holds: bool
    margin: float
    worst_location: Any = None
    tolerance: float = 0.0
    details: dict = field(default_factory=dict)
    note: Optional[str] = None

    def to_dict(self):
        out = {"holds": self.holds, "margin": self.margin,
               "worst_location": self.worst_location, "tolerance": self.tolerance}
        if self.note:
            out["note"] = self.note
        if self.details:
            out["details"] = self.details
        return out
