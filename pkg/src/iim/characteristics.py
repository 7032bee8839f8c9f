"""Characteristic flow maps by fixed-step RK4 on an augmented state.

The state integrated along ``ds/dtau = A(s, tau)`` is
``(s, int A dtau, int div A dtau)``; the last component is the logarithm of
the flow-map Jacobian determinant (Liouville's formula), so every
trajectory also yields its volume change at no extra integrator error.

Sign conventions
----------------
``FlowBatch.increment`` is ``end - start`` and ``FlowBatch.log_det`` is
``log det J`` of the map ``start time -> end time``; both are signed by the
direction of integration. ``FlowResult.displacement`` and
``FlowResult.log_jacobian`` are the integrals taken over
``[min(t1,t2), max(t1,t2)]`` in increasing time, so that
``endpoint = start + direction * displacement`` and
``det J = exp(direction * log_jacobian)``.
"""

from __future__ import annotations

import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .checks import OrderStudy
from .errors import DivergenceError, InvalidInputError, StepBudgetError
from .velocity_fields import VelocityField

# Points per work unit. Fixed so results never depend on the worker count.
CHUNK = 2048


def worker_count() -> int:
    """Thread cap from ``IIM_THREADS`` (default 1)."""
    raw = os.environ.get("IIM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ODEConfig:
    """Fixed-step classical RK4 settings."""

    dt: float
    max_steps: int = 2_000_000
    method: str = "rk4"

    def __post_init__(self) -> None:
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if self.method != "rk4":
            raise InvalidInputError(f"unsupported method {self.method!r}")
        if self.max_steps < 1:
            raise InvalidInputError("max_steps must be >= 1")

    @classmethod
    def for_horizon(cls, T: float, fraction: float = 1e-3) -> "ODEConfig":
        return cls(dt=fraction * T)

    def steps(self, span: float) -> int:
        if span == 0.0:
            return 0
        # tolerance keeps exact multiples of dt from gaining an extra step
        return max(1, math.ceil(abs(span) / self.dt * (1.0 - 1e-12)))


@dataclass(frozen=True)
class FlowBatch:
    """Vectorized trajectories from ``t_start`` to ``t_end``."""

    t_start: float
    t_end: float
    start: np.ndarray
    end: np.ndarray
    increment: np.ndarray
    log_det: np.ndarray
    n_steps: int

    @property
    def direction(self) -> int:
        return 1 if self.t_end >= self.t_start else -1

    @property
    def det(self) -> np.ndarray:
        """``det J`` of the map ``t_start -> t_end`` at every start point."""
        return np.exp(self.log_det)

    def __len__(self) -> int:
        return self.start.shape[0]

    def result(self, i: int) -> "FlowResult":
        s = self.direction
        return FlowResult(
            endpoint=self.end[i].copy(),
            displacement=s * self.increment[i],
            log_jacobian=s * float(self.log_det[i]),
            n_steps=self.n_steps,
            direction=s,
        )


@dataclass(frozen=True)
class FlowResult:
    """One traced characteristic (see module docstring for signs)."""

    endpoint: np.ndarray
    displacement: np.ndarray
    log_jacobian: float
    n_steps: int
    direction: int

    @property
    def det(self) -> float:
        return math.exp(self.direction * self.log_jacobian)

    def to_dict(self) -> dict:
        return {
            "endpoint": [float(v) for v in self.endpoint],
            "displacement": [float(v) for v in self.displacement],
            "log_jacobian": self.log_jacobian,
            "n_steps": self.n_steps,
            "direction": self.direction,
        }


def _rk4_chunk(fld: VelocityField, x0: np.ndarray, t0: float, t1: float, n: int):
    x = x0.copy()
    inc = np.zeros_like(x)
    logj = np.zeros(x.shape[0])
    if n == 0:
        return x, inc, logj
    h = (t1 - t0) / n
    h2, h6 = 0.5 * h, h / 6.0
    vd = fld.velocity_and_divergence
    for k in range(n):
        t = t0 + k * h
        v1, d1 = vd(x, t)
        v2, d2 = vd(x + h2 * v1, t + h2)
        v3, d3 = vd(x + h2 * v2, t + h2)
        v4, d4 = vd(x + h * v3, t + h)
        dx = h6 * (v1 + 2.0 * (v2 + v3) + v4)
        x += dx
        inc += dx
        logj += h6 * (d1 + 2.0 * (d2 + d3) + d4)
        if (k & 255) == 255 and not np.all(np.isfinite(x)):
            break
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(logj))):
        bad = int(np.argmin(np.isfinite(x).all(axis=1) & np.isfinite(logj)))
        raise DivergenceError(
            f"characteristic from {x0[bad].tolist()} at t={t0} became non-finite"
        )
    return x, inc, logj


def flow_batch(
    fld: VelocityField, points, t_from: float, t_to: float, cfg: ODEConfig
) -> FlowBatch:
    """Trace every point of ``points`` (shape ``(n, d)``) from ``t_from`` to ``t_to``.

    Work is split into fixed chunks of :data:`CHUNK` points which may run on
    up to ``IIM_THREADS`` threads; output order matches input order and the
    values do not depend on the thread count.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, fld.dim)
    if not (math.isfinite(t_from) and math.isfinite(t_to)):
        raise InvalidInputError("non-finite integration times")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("non-finite start point")
    n = cfg.steps(t_to - t_from)
    if n > cfg.max_steps:
        raise StepBudgetError(f"{n} steps needed, budget is {cfg.max_steps}")
    chunks = [pts[i : i + CHUNK] for i in range(0, pts.shape[0], CHUNK)]
    workers = min(worker_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _rk4_chunk(fld, c, t_from, t_to, n), chunks))
    else:
        parts = [_rk4_chunk(fld, c, t_from, t_to, n) for c in chunks]
    if parts:
        end = np.concatenate([p[0] for p in parts])
        inc = np.concatenate([p[1] for p in parts])
        logj = np.concatenate([p[2] for p in parts])
    else:
        end = np.zeros((0, fld.dim))
        inc = np.zeros((0, fld.dim))
        logj = np.zeros(0)
    return FlowBatch(float(t_from), float(t_to), pts, end, inc, logj, n)


def trace(fld: VelocityField, x_start, t_start: float, t_end: float, cfg: ODEConfig) -> FlowResult:
    """Trace one characteristic; backward times step with negative ``dt``."""
    x = np.asarray(x_start, dtype=float).reshape(1, fld.dim)
    return flow_batch(fld, x, t_start, t_end, cfg).result(0)


def flow_map(
    fld: VelocityField, points: Sequence, t_from: float, t_to: float, cfg: ODEConfig
) -> list[FlowResult]:
    """Elementwise :func:`trace`, order preserving."""
    if len(points) == 0:
        return []
    batch = flow_batch(fld, np.asarray(points, dtype=float), t_from, t_to, cfg)
    return [batch.result(i) for i in range(len(batch))]


def jacobian_det(fld: VelocityField, x_T, t: float, T: float, cfg: ODEConfig) -> float:
    """``det J`` of ``D_{T->t}`` at ``x_T``: ``exp(-int_t^T div A dtau)``."""
    if not 0.0 <= t <= T:
        raise InvalidInputError("need 0 <= t <= T")
    res = trace(fld, x_T, T, t, cfg)
    return res.det


def jacobian_det_fd(
    fld: VelocityField, x_T, t: float, T: float, cfg: ODEConfig, h: float = 1e-5
) -> float:
    """Determinant of the centered-difference Jacobian of ``D_{T->t}`` at ``x_T``."""
    if not h > 0:
        raise InvalidInputError("finite-difference step must be positive")
    d = fld.dim
    x = np.asarray(x_T, dtype=float).reshape(d)
    offsets = np.concatenate([np.eye(d) * h, -np.eye(d) * h])
    batch = flow_batch(fld, x + offsets, T, t, cfg)
    jac = (batch.end[:d] - batch.end[d:]).T / (2.0 * h)
    return float(np.linalg.det(jac))


class FlowCache:
    """Memo of traced node sets keyed by ``(node-set id, t_from, t_to)``.

    Concurrent readers and writers are safe; a repeated insert simply
    replaces an identical value.
    """

    def __init__(self) -> None:
        self._data: dict[Hashable, FlowBatch] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get_or_trace(
        self, key: Hashable, fld: VelocityField, points, t_from: float, t_to: float, cfg: ODEConfig
    ) -> FlowBatch:
        full = (key, float(t_from), float(t_to), cfg.dt)
        with self._lock:
            hit = self._data.get(full)
            if hit is not None:
                self.hits += 1
                return hit
            self.misses += 1
        batch = flow_batch(fld, points, t_from, t_to, cfg)
        with self._lock:
            self._data[full] = batch
        return batch

    def __len__(self) -> int:
        return len(self._data)


def traced(
    fld: VelocityField,
    points,
    t_from: float,
    t_to: float,
    cfg: ODEConfig,
    cache: FlowCache | None = None,
    key: Hashable | None = None,
) -> FlowBatch:
    """:func:`flow_batch` through an optional memo (needs ``key`` to hit)."""
    if cache is None or key is None:
        return flow_batch(fld, points, t_from, t_to, cfg)
    return cache.get_or_trace(key, fld, points, t_from, t_to, cfg)


def round_trip_error(fld: VelocityField, points, t: float, T: float, cfg: ODEConfig) -> float:
    """Largest ``|D_{t->T}(D_{T->t}(x)) - x|`` over ``points`` (max norm)."""
    pts = np.asarray(points, dtype=float).reshape(-1, fld.dim)
    back = flow_batch(fld, pts, T, t, cfg)
    fwd = flow_batch(fld, back.end, t, T, cfg)
    return float(np.abs(fwd.end - pts).max()) if len(pts) else 0.0


def rk4_order_study(
    fld: VelocityField, points, t_from: float, t_to: float, base_dt: float, levels: int = 4
) -> OrderStudy:
    """Observed convergence order of the flow map from successive differences.

    Runs ``dt = base_dt * 2^-k`` for ``k < levels`` and measures
    ``e_k = max |x_k - x_{k+1}|``, which behaves like ``C dt_k^4`` without
    needing a reference solution. Differences at the roundoff floor
    ``1e-12 (1 + max |x|)`` mark the flow as integrated exactly.
    """
    if levels < 3:
        raise InvalidInputError("an order study needs at least 3 levels")
    pts = np.asarray(points, dtype=float).reshape(-1, fld.dim)
    dts = [base_dt * 2.0**-k for k in range(levels)]
    ends = [flow_batch(fld, pts, t_from, t_to, ODEConfig(dt)).end for dt in dts]
    errs = [float(np.abs(a - b).max()) for a, b in zip(ends, ends[1:])]
    floor = 1e-12 * (1.0 + float(np.abs(ends[-1]).max()))
    return OrderStudy(tuple(dts[:-1]), tuple(errs), floor)
