"""Compactly supported scalar fields and the test-function evolution operator.

A :class:`ScalarField` is zero outside its ``support_box`` by construction
(zero extension to all of R^d). :class:`EvolvedField` realizes
``psi(x, t) = Psi(D_{t->T}(x))`` pointwise by tracing, never by solving the
adjoint equation on a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from .boxes import Box
from .characteristics import FlowCache, ODEConfig, flow_batch, traced
from .errors import InvalidInputError
from .velocity_fields import VelocityField, operator_norm


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A function of ``x`` extended by zero outside ``support_box``."""

    fn: Callable[[np.ndarray], np.ndarray]
    support_box: Box
    label: str = ""

    @property
    def dim(self) -> int:
        return self.support_box.dim

    def __call__(self, x) -> np.ndarray | float:
        pts = np.asarray(x, dtype=float)
        single = pts.ndim <= 1
        pts = pts.reshape(-1, self.dim)
        out = np.zeros(pts.shape[0])
        inside = self.support_box.contains(pts)
        if inside.any():
            out[inside] = self.fn(pts[inside])
        return float(out[0]) if single else out

    def scaled(self, c: float) -> "ScalarField":
        return linear_combination([self], [c], label=f"{c}*{self.label}")


def linear_combination(
    fields: Sequence[ScalarField], coeffs: Sequence[float], label: str | None = None
) -> ScalarField:
    """``sum_k c_k f_k`` supported in the union of the supports."""
    if not fields or len(fields) != len(coeffs):
        raise InvalidInputError("need matching non-empty fields and coefficients")
    box = fields[0].support_box
    for f in fields[1:]:
        box = box.union(f.support_box)
    coeffs = [float(c) for c in coeffs]

    def fn(x):
        total = np.zeros(x.shape[0])
        for c, f in zip(coeffs, fields):
            if c != 0.0:
                total += c * f(x)
        return total

    if label is None:
        label = " + ".join(f"{c}*{f.label}" for c, f in zip(coeffs, fields))
    return ScalarField(fn, box, label)


def zero_scalar(box: Box) -> ScalarField:
    return ScalarField(lambda x: np.zeros(x.shape[0]), box, "zero")


BUMP_KINDS = ("gaussian", "cosine", "c0-cone")


def make_bump(kind: str, center, radius: float, amplitude: float = 1.0) -> ScalarField:
    """Radial bump supported in the closed ball ``|x - center| <= radius``.

    ``cosine``: ``a cos^2(pi r / 2R)``; ``c0-cone``: ``a max(0, 1 - r/R)``;
    ``gaussian``: ``sigma = R/4``, shifted so it vanishes exactly at
    ``r = R`` and rescaled to peak ``a``.
    """
    if not radius > 0:
        raise InvalidInputError(f"bump radius must be positive, got {radius}")
    if kind not in BUMP_KINDS:
        raise InvalidInputError(f"unknown bump kind {kind!r}; expected one of {BUMP_KINDS}")
    c = np.atleast_1d(np.asarray(center, dtype=float))
    R = float(radius)
    a = float(amplitude)
    floor = math.exp(-8.0)

    def fn(x):
        r = np.linalg.norm(x - c, axis=1)
        s = np.minimum(r / R, 1.0)
        if kind == "cosine":
            v = np.cos(0.5 * math.pi * s) ** 2
        elif kind == "c0-cone":
            v = 1.0 - s
        else:
            v = (np.exp(-8.0 * s * s) - floor) / (1.0 - floor)
        return a * np.where(r < R, v, 0.0)

    box = Box(tuple(c - R), tuple(c + R))
    return ScalarField(fn, box, f"{kind}(c={c.tolist()}, r={R:g}, a={a:g})")


def support_margin(sf: ScalarField, omega: Box) -> float:
    """Smallest distance between ``sf.support_box`` and the boundary of ``omega``.

    Negative when the support pokes out.
    """
    lo = np.asarray(sf.support_box.lo) - np.asarray(omega.lo)
    hi = np.asarray(omega.hi) - np.asarray(sf.support_box.hi)
    return float(min(lo.min(), hi.min()))


def require_compact_support(sf: ScalarField, omega: Box, margin_frac: float = 0.05) -> float:
    """Enforce ``supp f`` compactly inside ``omega`` with the declared margin.

    The margin is ``margin_frac`` times the smallest box width. Returns the
    actual margin.
    """
    need = margin_frac * float(omega.widths.min())
    got = support_margin(sf, omega)
    if got < need:
        raise InvalidInputError(
            f"support of {sf.label} is within {got:.3g} of the domain boundary "
            f"(required margin {need:.3g})"
        )
    return got


@dataclass(frozen=True, eq=False)
class EvolvedField:
    """``psi(., t) = Phi_{T->t}[terminal]`` for one evaluation time ``t``."""

    terminal: ScalarField
    field: VelocityField
    t: float
    T: float
    cfg: ODEConfig
    cache: FlowCache | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.t <= self.T:
            raise InvalidInputError(f"evolution time {self.t} outside [0, {self.T}]")


def evolve_eval(ef: EvolvedField, x, key: Hashable | None = None):
    """``Psi(x + int_t^T A(s(tau), tau) dtau)`` at one point or a batch.

    With ``key`` (an identifier of the node set) and a cache on ``ef``,
    trajectories are reused across calls.
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim <= 1
    pts = pts.reshape(-1, ef.field.dim)
    if ef.t == ef.T:
        vals = ef.terminal(pts)
    else:
        batch = traced(ef.field, pts, ef.t, ef.T, ef.cfg, ef.cache, key)
        vals = ef.terminal(batch.end)
    return float(vals[0]) if single else vals


def support_image(ef: EvolvedField, per_face: int = 64, lipschitz: float | None = None) -> Box:
    """Bounding box of ``D_{T->t}(supp Psi)`` from a flowed boundary cloud.

    The box is inflated by ``2 L_A dt``; ``L_A`` comes from ``lipschitz``,
    else the field's analytic bounds, else the largest Jacobian norm seen
    on the cloud.
    """
    box = ef.terminal.support_box
    if ef.t == ef.T:
        return box
    cloud = box.boundary_cloud(per_face)
    batch = flow_batch(ef.field, cloud, ef.T, ef.t, ef.cfg)
    if lipschitz is None:
        if ef.field.bounds is not None:
            lipschitz = ef.field.bounds.L_A
        else:
            lipschitz = float(operator_norm(ef.field.jacobian(batch.end, ef.t)).max())
    return Box.around(batch.end, pad=2.0 * lipschitz * ef.cfg.dt)
