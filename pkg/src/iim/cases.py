"""Registry of the six standard semi-Lagrangian test velocity fields."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from . import velocity_fields as vf
from .boxes import Box
from .errors import NotFoundError
from .velocity_fields import FieldBounds, VelocityField

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CaseSpec:
    """A named velocity field with its constants, reference box and final time."""

    id: str
    make: Callable[[float], VelocityField]
    bounds: FieldBounds
    omega: Box
    T_default: float
    notes: str

    @property
    def dim(self) -> int:
        return self.omega.dim

    def field(self, T: float | None = None) -> VelocityField:
        return self.make(self.T_default if T is None else T)

    def summary(self) -> dict:
        return {
            "id": self.id,
            "dim": self.dim,
            "bounds": self.bounds.to_dict(),
            "omega": self.omega.to_dict(),
            "T_default": self.T_default,
            "notes": self.notes,
        }


_LINE = Box((0.0,), (TWO_PI,))
_SQUARE = Box((0.0, 0.0), (TWO_PI, TWO_PI))

_CASES: tuple[CaseSpec, ...] = (
    CaseSpec("const-1d", lambda T: vf.const_1d(), vf.ANALYTIC_BOUNDS["const-1d"], _LINE, 1.0,
             "u_t + u_x = 0; A = 1, sup|A_x| = 0"),
    CaseSpec("sin-t-1d", lambda T: vf.sin_t_1d(), vf.ANALYTIC_BOUNDS["sin-t-1d"], _LINE, 1.0,
             "u_t + (sin(t) u)_x = 0; sup|A_x| = 0"),
    CaseSpec("sin-x-1d", lambda T: vf.sin_x_1d(), vf.ANALYTIC_BOUNDS["sin-x-1d"], _LINE, 1.0,
             "u_t + (sin(x) u)_x = 0; sup|A_x| = sup|cos x| = 1"),
    CaseSpec("translate-2d", lambda T: vf.translate_2d(), vf.ANALYTIC_BOUNDS["translate-2d"],
             _SQUARE, 1.0, "U_t + U_x + U_y = 0; all derivative bounds 0"),
    CaseSpec("rigid-rotation", lambda T: vf.rigid_rotation(), vf.ANALYTIC_BOUNDS["rigid-rotation"],
             _SQUARE, math.pi, "A = (-y, x); operator norm 1, divergence 0"),
    CaseSpec("swirling", vf.swirling, vf.ANALYTIC_BOUNDS["swirling"], _SQUARE, 1.5,
             "A = 2 pi g(t) (cos^2(x/2) sin y, sin x cos^2(y/2)), g = cos(pi t / T); "
             "L_A = M_A = 2 pi"),
)

# Diagnostic fields reachable by id but not part of the standard six.
_EXTRA: tuple[CaseSpec, ...] = (
    CaseSpec("zero-1d", lambda T: vf.zero_field(1), FieldBounds(0.0, 0.0, 0.0, 0.0), _LINE, 1.0,
             "A = 0 (stationary diagnostic)"),
    CaseSpec("zero-2d", lambda T: vf.zero_field(2), FieldBounds(0.0, 0.0, 0.0, 0.0), _SQUARE, 1.0,
             "A = 0 (stationary diagnostic)"),
)


def list_cases() -> list[CaseSpec]:
    """The six standard cases in fixed order."""
    return list(_CASES)


def case_ids() -> list[str]:
    return [c.id for c in _CASES]


def get_case(case_id: str) -> CaseSpec:
    for c in _CASES + _EXTRA:
        if c.id == case_id:
            return c
    raise NotFoundError(f"unknown case {case_id!r}")
