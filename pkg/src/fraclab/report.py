"""Named checks with measured values and thresholds."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class CheckReport:
    """Pass/fail checks with the values they were judged on.

    ``checks`` maps check names to pass flags, ``metrics`` holds the measured
    values and ``tolerances`` the thresholds. Entries of ``reported`` are
    informational and never affect ``passed``. Wall-clock values go to
    ``timings`` and are left out of :meth:`to_dict` so serialized results
    stay reproducible.
    """

    checks: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    reported: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def passed(self):
        return all(self.checks.values())

    def failed_checks(self):
        return [k for k, ok in self.checks.items() if not ok]

    def to_dict(self):
        return {
            "passed": self.passed,
            "checks": dict(self.checks),
            "metrics": dict(self.metrics),
            "tolerances": dict(self.tolerances),
            "reported": dict(self.reported),
        }

    def at_most(self, name, value, tol):
        self.metrics[name] = float(value)
        self.tolerances[name] = f"<= {tol:g}"
        self.checks[name] = bool(value <= tol)

    def at_least(self, name, value, tol):
        self.metrics[name] = float(value)
        self.tolerances[name] = f">= {tol:g}"
        self.checks[name] = bool(value >= tol)

    def holds(self, name, ok, value=None, rule=None):
        if value is not None:
            self.metrics[name] = value
        if rule is not None:
            self.tolerances[name] = rule
        self.checks[name] = bool(ok)

    def report(self, name, value):
        self.reported[name] = value

    def time_limit(self, name, seconds, limit):
        self.timings[name] = float(seconds)
        self.tolerances[name] = f"<= {limit:g} s"
        self.checks[name] = bool(seconds <= limit)
