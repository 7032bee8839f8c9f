"""The transported solution, its pairings with evolved test functions, and
the moving-domain Leibniz identity.

``U(x, t) = U0(D_{t->0}(x)) * det J_{D_{t->0}}(x)`` with the determinant
taken from the accumulated divergence integral (conservative form).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .boxes import Box
from .characteristics import FlowCache, ODEConfig, flow_batch, traced
from .checks import BoundCheck, OrderStudy
from .errors import InvalidInputError
from .evolution import EvolvedField, ScalarField, evolve_eval
from .quadrature import PushedQuadrature, ReferenceQuadrature, integrate, pairwise_sum, push_many
from .velocity_fields import VelocityField


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Solution of the transport model for initial datum ``initial``."""

    initial: ScalarField
    field: VelocityField
    cfg: ODEConfig


def solve_at(sf: SolutionField, x, t: float, cache: FlowCache | None = None, key=None):
    """``U(x, t)`` by tracing back to time 0; accepts one point or a batch."""
    if t < 0.0:
        raise InvalidInputError(f"solution time must be >= 0, got {t}")
    pts = np.asarray(x, dtype=float)
    single = pts.ndim <= 1
    pts = pts.reshape(-1, sf.field.dim)
    if t == 0.0:
        vals = sf.initial(pts)
    else:
        back = traced(sf.field, pts, t, 0.0, sf.cfg, cache, key)
        vals = sf.initial(back.end) * np.exp(back.log_det)
    return float(vals[0]) if single else vals


def solution_on_pushed(pq: PushedQuadrature, initials: Sequence[ScalarField]) -> list[np.ndarray]:
    """``U(x_i, t)`` on a rule pushed from time 0, amplitude folded in.

    Uses the rule's own trajectories: the node started at ``y_i`` so
    ``U(x_i, t) = U0(y_i) / det J_{0->t}(y_i)``. No retracing.
    """
    if pq.parent.anchor_time != 0.0:
        raise InvalidInputError("the folded amplitude needs a rule anchored at time 0")
    amp = np.exp(-pq.log_det)
    return [u0(pq.parent.nodes) * amp for u0 in initials]


def _check_times(psi: EvolvedField, pq: PushedQuadrature) -> None:
    if psi.t != pq.t:
        raise InvalidInputError(
            f"time mismatch: test function at t={psi.t}, quadrature at t={pq.t}"
        )


def pairing(
    sf: SolutionField, psi: EvolvedField, pq: PushedQuadrature, cache: FlowCache | None = None
) -> float:
    """``int_{moving domain} U psi dx`` on the pushed rule.

    ``U`` at each node is obtained by an independent backward trace to time
    0 and ``psi`` by a forward trace to ``T``.
    """
    _check_times(psi, pq)
    key = pq.key if cache is not None else None
    u = solve_at(sf, pq.nodes, pq.t, cache, key)
    p = evolve_eval(psi, pq.nodes, key)
    return integrate(pq, u * p)


def pairing_pullback(
    sf: SolutionField, psi: EvolvedField, pq: PushedQuadrature, cache: FlowCache | None = None
) -> float:
    """The same pairing written on the time-0 domain.

    ``int U0(y) psi(D_{0->t}(y), t) dy``: the Jacobians of the push and of
    the solution amplitude cancel, so only the reference weights enter.
    """
    _check_times(psi, pq)
    if pq.parent.anchor_time != 0.0:
        raise InvalidInputError("pullback route needs a rule anchored at time 0")
    key = pq.key if cache is not None else None
    p = evolve_eval(psi, pq.nodes, key)
    return pairwise_sum(pq.parent.weights * sf.initial(pq.parent.nodes) * p)


@dataclass(frozen=True)
class DriftSeries:
    """Pairing over a time grid and its drift relative to ``t = 0``."""

    times: tuple[float, ...]
    pairings: tuple[float, ...]
    label: str = ""

    @property
    def reference(self) -> float:
        return self.pairings[0]

    @property
    def rel_drift(self) -> tuple[float, ...]:
        ref = abs(self.reference)
        scale = ref if ref > 0.0 else 1.0
        return tuple(abs(p - self.reference) / scale for p in self.pairings)

    @property
    def max_drift(self) -> float:
        return max(self.rel_drift)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "times": list(self.times),
            "pairing": list(self.pairings),
            "rel_drift": list(self.rel_drift),
            "max_rel_drift": self.max_drift,
        }


def invariant_drift_many(
    fld: VelocityField,
    initials: Sequence[ScalarField],
    tests: Sequence[ScalarField],
    T: float,
    times: Sequence[float],
    rq0: ReferenceQuadrature,
    cfg: ODEConfig,
    cache: FlowCache | None = None,
) -> list[DriftSeries]:
    """Drift series for the pairs ``(initials[k], tests[k])`` sharing one rule.

    ``rq0`` must be anchored at 0 and cover every initial support. The
    grid is pushed once; at each time one forward trace to ``T`` serves all
    test functions.
    """
    if len(initials) != len(tests):
        raise InvalidInputError("initials and tests must pair up")
    if rq0.anchor_time != 0.0:
        raise InvalidInputError("drift rule must be anchored at time 0")
    times = [float(t) for t in times]
    if not times or times[0] != 0.0 or any(not 0.0 <= t <= T for t in times):
        raise InvalidInputError("time grid must start at 0 and lie in [0, T]")
    pushed = push_many(rq0, fld, times, cfg, cache)
    u0w = [rq0.weights * u0(rq0.nodes) for u0 in initials]
    series = [[] for _ in initials]
    for t in times:
        pq = pushed[t]
        if t == T:
            ends = pq.nodes
        else:
            ends = traced(fld, pq.nodes, t, T, cfg, cache, pq.key).end
        for k, psi in enumerate(tests):
            series[k].append(pairwise_sum(u0w[k] * psi(ends)))
    return [
        DriftSeries(tuple(times), tuple(s), f"{u.label} | {p.label}")
        for s, u, p in zip(series, initials, tests)
    ]


def invariant_drift(
    sf: SolutionField,
    Psi: ScalarField,
    T: float,
    times: Sequence[float],
    rq0: ReferenceQuadrature,
    cache: FlowCache | None = None,
) -> DriftSeries:
    """Single-pair version of :func:`invariant_drift_many`."""
    return invariant_drift_many(sf.field, [sf.initial], [Psi], T, times, rq0, sf.cfg, cache)[0]


@dataclass(frozen=True, eq=False)
class SpaceTimeFunction:
    """Smooth ``f(x, t)`` with optional analytic ``df/dt`` and gradient.

    Missing derivatives fall back to centered differences.
    """

    value: Callable[[np.ndarray, float], np.ndarray]
    dt: Callable[[np.ndarray, float], np.ndarray] | None = None
    grad: Callable[[np.ndarray, float], np.ndarray] | None = None
    label: str = ""
    fd_step: float = 1e-5

    def time_derivative(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.dt is not None:
            return self.dt(x, t)
        h = self.fd_step
        return (self.value(x, t + h) - self.value(x, t - h)) / (2.0 * h)

    def gradient(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.grad is not None:
            return self.grad(x, t)
        h = self.fd_step
        cols = []
        for j in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[j] = h
            cols.append((self.value(x + e, t) - self.value(x - e, t)) / (2.0 * h))
        return np.stack(cols, axis=1)


def constant_function(c: float = 1.0) -> SpaceTimeFunction:
    return SpaceTimeFunction(
        value=lambda x, t: np.full(x.shape[0], c),
        dt=lambda x, t: np.zeros(x.shape[0]),
        grad=lambda x, t: np.zeros_like(x),
        label=f"const({c:g})",
    )


def smooth_probe(box: Box) -> SpaceTimeFunction:
    """``(1 + sin(2t)/2) exp(-|x - c|^2 / (2 s^2))`` centred in ``box``.

    ``s`` is a quarter of the smallest box width.
    """
    c = box.center
    s2 = (0.25 * float(box.widths.min())) ** 2

    def bump(x):
        return np.exp(-np.sum((x - c) ** 2, axis=1) / (2.0 * s2))

    return SpaceTimeFunction(
        value=lambda x, t: (1.0 + 0.5 * math.sin(2.0 * t)) * bump(x),
        dt=lambda x, t: math.cos(2.0 * t) * bump(x),
        grad=lambda x, t: -(1.0 + 0.5 * math.sin(2.0 * t)) * bump(x)[:, None] * (x - c) / s2,
        label="gaussian-probe",
    )


@dataclass(frozen=True)
class LeibnizResult:
    t: float
    h: float
    fd_derivative: float
    volume_integral: float
    scale: float

    @property
    def discrepancy(self) -> float:
        return abs(self.fd_derivative - self.volume_integral)

    @property
    def relative(self) -> float:
        """Discrepancy over the integral of the absolute right-side terms."""
        if self.scale > 0:
            return self.discrepancy / self.scale
        return 0.0 if self.discrepancy == 0.0 else math.inf


def leibniz_eval(
    f: SpaceTimeFunction,
    fld: VelocityField,
    t: float,
    h: float,
    pq: PushedQuadrature,
    cfg: ODEConfig,
) -> LeibnizResult:
    """Both sides of ``d/dt int_{moving} f = int_{moving} (f_t + div(f A))``.

    ``pq`` is a rule already pushed to ``t``. The nodes are carried to
    ``t +- h`` by short sub-trajectories (so the result varies smoothly with
    ``h``), the moving integral is differenced centrally, and the right side
    is integrated on ``pq`` itself.
    """
    if not h > 0:
        raise InvalidInputError("time step h must be positive")
    if pq.t != t:
        raise InvalidInputError(f"quadrature lives at t={pq.t}, not {t}")
    sub = ODEConfig(dt=min(cfg.dt, h), max_steps=cfg.max_steps)
    sides = []
    for s in (1.0, -1.0):
        b = flow_batch(fld, pq.nodes, t, t + s * h, sub)
        w = pq.weights * np.exp(b.log_det)
        sides.append(pairwise_sum(w * f.value(b.end, t + s * h)))
    fd = (sides[0] - sides[1]) / (2.0 * h)
    x = pq.nodes
    v, div = fld.velocity_and_divergence(x, t)
    terms = (
        f.time_derivative(x, t),
        np.sum(f.gradient(x, t) * v, axis=1),
        f.value(x, t) * div,
    )
    # roundoff level of the centered difference bounds the scale from below
    floor = 1e-13 * pairwise_sum(pq.weights * np.abs(f.value(x, t))) / h
    scale = max(integrate(pq, sum(np.abs(term) for term in terms)), floor)
    return LeibnizResult(t, h, fd, integrate(pq, sum(terms)), scale)


def leibniz_check(
    f: SpaceTimeFunction,
    fld: VelocityField,
    t: float,
    T: float,
    rq: ReferenceQuadrature,
    cfg: ODEConfig,
    h: float | None = None,
    tol: float = 1e-5,
    cache: FlowCache | None = None,
    **context,
) -> BoundCheck:
    """Relative Leibniz discrepancy at ``t`` as a check against ``tol``.

    ``h`` defaults to ``1e-3 T``.
    """
    h = 1e-3 * T if h is None else h
    if not (0.0 <= t - h and t + h <= T):
        raise InvalidInputError(f"t +- h = {t} +- {h} leaves [0, {T}]")
    pq = push_many(rq, fld, [t], cfg, cache)[t]
    res = leibniz_eval(f, fld, t, h, pq, cfg)
    return BoundCheck.make(
        "leibniz", res.relative, tol, 0.0,
        probe=f.label, t=t, h=h, fd=res.fd_derivative, volume=res.volume_integral,
        abs_discrepancy=res.discrepancy, **context,
    )


def leibniz_study(
    f: SpaceTimeFunction,
    fld: VelocityField,
    t: float,
    T: float,
    rq: ReferenceQuadrature,
    cfg: ODEConfig,
    h0: float | None = None,
    levels: int = 3,
    cache: FlowCache | None = None,
) -> OrderStudy:
    """Leibniz discrepancy for ``h = h0 * 2^k``, ``k = levels-1 .. 0``.

    The floor for an ``exact`` verdict is a roundoff estimate of the
    centered difference, ``1e-14 * sum |w f| / h``.
    """
    h0 = 1e-3 * T if h0 is None else h0
    hs = [h0 * 2.0 ** k for k in range(levels - 1, -1, -1)]
    if not (0.0 <= t - hs[0] and t + hs[0] <= T):
        raise InvalidInputError(f"t +- h leaves [0, {T}]")
    pq = push_many(rq, fld, [t], cfg, cache)[t]
    errs = [leibniz_eval(f, fld, t, h, pq, cfg).discrepancy for h in hs]
    scale = pairwise_sum(pq.weights * np.abs(f.value(pq.nodes, t)))
    floor = 1e-14 * max(scale, 1e-300) / hs[-1]
    return OrderStudy(tuple(hs), tuple(errs), floor)
