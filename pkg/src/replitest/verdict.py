"""Shared verdict type returned by all testers."""

from __future__ import annotations

from dataclasses import dataclass, field


class CalibrationError(ValueError):
    """Raised when configured constants leave no valid threshold gap."""


@dataclass(frozen=True)
class TesterVerdict:
    accept: bool
    statistic: float
    threshold: float
    # False when the threshold gap was empty at the configured sample
    # size (deliberately under-sampled runs); the verdict is still the
    # tester's honest output against the degenerate threshold.
    calibrated: bool = True
    detail: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return "accept" if self.accept else "reject"
