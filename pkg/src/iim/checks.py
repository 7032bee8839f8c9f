"""The inequality record every verification step produces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

# Stand-in denominator when a bound is exactly zero; keeps ratios finite.
_TINY = 1e-300


@dataclass(frozen=True)
class BoundCheck:
    """One verified inequality ``lhs <= rhs`` with relative slack.

    ``passed`` is true exactly when ``ratio <= 1 + slack``. A zero bound
    with a zero measurement counts as ratio 0 (``0 <= 0`` holds).
    """

    name: str
    lhs: float
    rhs: float
    ratio: float
    slack: float
    passed: bool
    context: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def make(cls, name: str, lhs: float, rhs: float, slack: float = 0.0, **context) -> "BoundCheck":
        lhs = float(lhs)
        rhs = float(rhs)
        if not (math.isfinite(lhs) and math.isfinite(rhs)):
            # a non-finite measurement is a failed check, recorded with finite sentinels
            context["nonfinite"] = True
            lhs = 1e300 if not math.isfinite(lhs) else lhs
            rhs = 0.0 if not math.isfinite(rhs) else rhs
        if lhs <= 0.0 and rhs <= 0.0:
            ratio = 0.0
        else:
            ratio = min(lhs / max(rhs, _TINY), 1e300)
        passed = ratio <= 1.0 + slack
        return cls(name, lhs, rhs, ratio, float(slack), bool(passed), dict(context))

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "slack": self.slack,
            "pass": self.passed,
            "context": self.context,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BoundCheck":
        return cls(
            d["name"], d["lhs"], d["rhs"], d["ratio"], d["slack"], d["pass"], dict(d["context"])
        )


def agreement(name: str, a: float, b: float, atol: float, **context) -> BoundCheck:
    """Check ``|a - b| <= atol`` as a bound record."""
    return BoundCheck.make(name, abs(a - b), atol, 0.0, a=float(a), b=float(b), **context)


@dataclass(frozen=True)
class OrderStudy:
    """Errors under successive refinement and the observed orders."""

    steps: tuple[float, ...]
    errors: tuple[float, ...]
    floor: float

    @property
    def exact(self) -> bool:
        return all(e <= self.floor for e in self.errors)

    @property
    def orders(self) -> tuple[float, ...]:
        out = []
        for (h0, e0), (h1, e1) in zip(zip(self.steps, self.errors), zip(self.steps[1:], self.errors[1:])):
            if e0 <= self.floor or e1 <= self.floor:
                out.append(math.inf)
            else:
                out.append(math.log(e0 / e1) / math.log(h0 / h1))
        return tuple(out)

    @property
    def order(self) -> float | str:
        """Least-squares slope of ``log e`` against ``log h``, or ``"exact"``."""
        if self.exact:
            return "exact"
        pairs = [(math.log(h), math.log(e)) for h, e in zip(self.steps, self.errors) if e > self.floor]
        if len(pairs) < 2:
            return "exact"
        x = np.array([p[0] for p in pairs])
        y = np.array([p[1] for p in pairs])
        return float(np.polyfit(x, y, 1)[0])

    def to_dict(self) -> dict:
        return {
            "steps": list(self.steps),
            "errors": list(self.errors),
            "orders": [o if math.isfinite(o) else "exact" for o in self.orders],
            "order": self.order,
            "floor": self.floor,
        }
