"""Velocity fields A(x, t), their spatial derivatives and bound constants.

All evaluation callables work on batches: ``x`` has shape ``(n, d)`` and
``t`` is a scalar time. Built-in fields carry closed-form Jacobians and
divergences; :meth:`VelocityField.from_callable` synthesizes both by
centered finite differences for user-supplied fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .boxes import Box
from .checks import BoundCheck
from .errors import InvalidInputError, NotFoundError

ArrayFn = Callable[[np.ndarray, float], np.ndarray]

PI = math.pi


@dataclass(frozen=True)
class FieldBounds:
    """Uniform constants for a field on ``R^d x [0, T]``.

    ``L_A`` bounds the Jacobian operator norm, ``M_A`` bounds ``|div A|`` and
    ``alpha, beta`` give the linear growth ``|A(x,t)| <= alpha |x| + beta``
    (flattened to constants).
    """

    L_A: float
    M_A: float
    alpha: float
    beta: float
    provenance: str = "analytic"

    def __post_init__(self) -> None:
        vals = (self.L_A, self.M_A, self.alpha, self.beta)
        if not all(math.isfinite(v) and v >= 0.0 for v in vals):
            raise InvalidInputError(f"bounds must be finite and non-negative: {vals}")
        if self.provenance not in ("analytic", "sampled"):
            raise InvalidInputError(f"unknown provenance {self.provenance!r}")

    def to_dict(self) -> dict:
        return {
            "L_A": self.L_A,
            "M_A": self.M_A,
            "alpha": self.alpha,
            "beta": self.beta,
            "provenance": self.provenance,
        }


@dataclass(frozen=True, eq=False)
class VelocityField:
    """A C^1 velocity field with batch evaluation of value, Jacobian, divergence."""

    dim: int
    name: str
    value_fn: ArrayFn
    jacobian_fn: ArrayFn
    divergence_fn: ArrayFn
    value_div_fn: Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray]] | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    bounds: FieldBounds | None = None

    def value(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.value_fn(x, t)

    def jacobian(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.jacobian_fn(x, t)

    def divergence(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.divergence_fn(x, t)

    def velocity_and_divergence(self, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        if self.value_div_fn is not None:
            return self.value_div_fn(x, t)
        return self.value_fn(x, t), self.divergence_fn(x, t)

    @classmethod
    def from_callable(
        cls, dim: int, value: ArrayFn, name: str = "user", bounds: FieldBounds | None = None
    ) -> "VelocityField":
        """Wrap a batch value function; derivatives come from centered differences.

        The difference step is ``1e-6 * (1 + |x|)`` per point.
        """
        if dim < 1:
            raise InvalidInputError("dimension must be positive")

        def jac(x, t):
            x = np.asarray(x, dtype=float)
            h = 1e-6 * (1.0 + np.linalg.norm(x, axis=1))
            out = np.empty((x.shape[0], dim, dim))
            for j in range(dim):
                e = np.zeros(dim)
                e[j] = 1.0
                step = h[:, None] * e
                out[:, :, j] = (value(x + step, t) - value(x - step, t)) / (2.0 * h[:, None])
            return out

        def div(x, t):
            return np.trace(jac(x, t), axis1=1, axis2=2)

        return cls(dim, name, value, jac, div, None, {}, bounds)


def _as_batch(x, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    if single and arr.size == dim:
        arr = arr.reshape(1, dim)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise InvalidInputError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return arr, single


def eval_field(fld: VelocityField, x, t: float):
    """Evaluate velocity, Jacobian and divergence at ``x`` (one point or a batch).

    Raises
    ------
    InvalidInputError
        If any coordinate or the time is not finite.
    """
    pts, single = _as_batch(x, fld.dim)
    if not (np.all(np.isfinite(pts)) and math.isfinite(float(t))):
        raise InvalidInputError("non-finite point or time passed to eval_field")
    v = fld.value(pts, t)
    j = fld.jacobian(pts, t)
    d = fld.divergence(pts, t)
    if single:
        return v[0], j[0], float(d[0])
    return v, j, d


def operator_norm(jac: np.ndarray) -> np.ndarray:
    """Largest singular value of a batch of ``(n, d, d)`` matrices.

    Closed form for d <= 2: for ``[[a, b], [c, d]]`` the largest singular
    value is ``(sqrt((a-d)^2 + (b+c)^2) + sqrt((a+d)^2 + (b-c)^2)) / 2``.
    """
    jac = np.asarray(jac, dtype=float)
    d = jac.shape[-1]
    if d == 1:
        return np.abs(jac[..., 0, 0])
    if d == 2:
        a, b = jac[..., 0, 0], jac[..., 0, 1]
        c, e = jac[..., 1, 0], jac[..., 1, 1]
        return 0.5 * (np.hypot(a - e, b + c) + np.hypot(a + e, b - c))
    return np.linalg.norm(jac, ord=2, axis=(-2, -1))


# --- built-in fields --------------------------------------------------------


def _zeros_like_vec(x):
    return np.zeros_like(x, dtype=float)


def zero_field(dim: int = 2) -> VelocityField:
    return VelocityField(
        dim,
        f"zero-{dim}d",
        lambda x, t: np.zeros_like(x, dtype=float),
        lambda x, t: np.zeros((x.shape[0], dim, dim)),
        lambda x, t: np.zeros(x.shape[0]),
        None,
        {},
        FieldBounds(0.0, 0.0, 0.0, 0.0),
    )


def const_1d() -> VelocityField:
    return VelocityField(
        1,
        "const-1d",
        lambda x, t: np.ones_like(x, dtype=float),
        lambda x, t: np.zeros((x.shape[0], 1, 1)),
        lambda x, t: np.zeros(x.shape[0]),
        None,
        {},
        ANALYTIC_BOUNDS["const-1d"],
    )


def sin_t_1d() -> VelocityField:
    return VelocityField(
        1,
        "sin-t-1d",
        lambda x, t: np.full_like(x, math.sin(t), dtype=float),
        lambda x, t: np.zeros((x.shape[0], 1, 1)),
        lambda x, t: np.zeros(x.shape[0]),
        None,
        {},
        ANALYTIC_BOUNDS["sin-t-1d"],
    )


def sin_x_1d() -> VelocityField:
    def vd(x, t):
        return np.sin(x), np.cos(x[:, 0])

    return VelocityField(
        1,
        "sin-x-1d",
        lambda x, t: np.sin(x),
        lambda x, t: np.cos(x)[:, :, None],
        lambda x, t: np.cos(x[:, 0]),
        vd,
        {},
        ANALYTIC_BOUNDS["sin-x-1d"],
    )


def translate_2d() -> VelocityField:
    return VelocityField(
        2,
        "translate-2d",
        lambda x, t: np.ones_like(x, dtype=float),
        lambda x, t: np.zeros((x.shape[0], 2, 2)),
        lambda x, t: np.zeros(x.shape[0]),
        None,
        {},
        ANALYTIC_BOUNDS["translate-2d"],
    )


_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def rigid_rotation() -> VelocityField:
    def value(x, t):
        return np.stack([-x[:, 1], x[:, 0]], axis=1)

    return VelocityField(
        2,
        "rigid-rotation",
        value,
        lambda x, t: np.broadcast_to(_ROT, (x.shape[0], 2, 2)).copy(),
        lambda x, t: np.zeros(x.shape[0]),
        lambda x, t: (value(x, t), np.zeros(x.shape[0])),
        {},
        ANALYTIC_BOUNDS["rigid-rotation"],
    )


def swirling(T: float = 1.5) -> VelocityField:
    """Swirling deformation with time modulation ``g(t) = cos(pi t / T)``.

    ``A = (2 pi cos^2(x/2) sin(y) g, 2 pi sin(x) cos^2(y/2) g)``; note
    ``2 cos^2(s/2) = 1 + cos(s)``. The field is not divergence free:
    ``div A = -2 pi sin(x) sin(y) g``.
    """
    if not (T > 0 and math.isfinite(T)):
        raise InvalidInputError("swirling needs a positive final time T")

    def g(t):
        return math.cos(PI * t / T)

    def value(x, t):
        gt = g(t)
        sx, cx = np.sin(x[:, 0]), np.cos(x[:, 0])
        sy, cy = np.sin(x[:, 1]), np.cos(x[:, 1])
        out = np.empty_like(x, dtype=float)
        out[:, 0] = PI * gt * (1.0 + cx) * sy
        out[:, 1] = PI * gt * sx * (1.0 + cy)
        return out

    def jac(x, t):
        gt = g(t)
        sx, cx = np.sin(x[:, 0]), np.cos(x[:, 0])
        sy, cy = np.sin(x[:, 1]), np.cos(x[:, 1])
        out = np.empty((x.shape[0], 2, 2))
        diag = -PI * gt * sx * sy
        out[:, 0, 0] = diag
        out[:, 0, 1] = PI * gt * (1.0 + cx) * cy
        out[:, 1, 0] = PI * gt * cx * (1.0 + cy)
        out[:, 1, 1] = diag
        return out

    def div(x, t):
        return -2.0 * PI * g(t) * np.sin(x[:, 0]) * np.sin(x[:, 1])

    def vd(x, t):
        gt = g(t)
        sx, cx = np.sin(x[:, 0]), np.cos(x[:, 0])
        sy, cy = np.sin(x[:, 1]), np.cos(x[:, 1])
        out = np.empty_like(x, dtype=float)
        pg = PI * gt
        out[:, 0] = pg * (1.0 + cx) * sy
        out[:, 1] = pg * sx * (1.0 + cy)
        return out, -2.0 * pg * sx * sy

    return VelocityField(2, "swirling", value, jac, div, vd, {"T": float(T)}, ANALYTIC_BOUNDS["swirling"])


ANALYTIC_BOUNDS: dict[str, FieldBounds] = {
    "const-1d": FieldBounds(0.0, 0.0, 0.0, 1.0),
    "sin-t-1d": FieldBounds(0.0, 0.0, 0.0, 1.0),
    "sin-x-1d": FieldBounds(1.0, 1.0, 0.0, 1.0),
    "translate-2d": FieldBounds(0.0, 0.0, 0.0, math.sqrt(2.0)),
    "rigid-rotation": FieldBounds(1.0, 0.0, 1.0, 0.0),
    "swirling": FieldBounds(2.0 * PI, 2.0 * PI, 0.0, 2.0 * PI * math.sqrt(2.0)),
}


def analytic_bounds(name: str) -> FieldBounds:
    """Closed-form constants for a registered case id."""
    try:
        return ANALYTIC_BOUNDS[name]
    except KeyError:
        raise NotFoundError(f"unknown case {name!r}") from None


def sampled_bounds(
    fld: VelocityField,
    box: Box,
    t_max: float,
    n_space: int | Sequence[int] = 256,
    n_time: int = 64,
) -> FieldBounds:
    """Estimate the bound constants by dense sampling of ``box x [0, t_max]``.

    ``alpha`` and ``beta`` follow from the gradient bound by the mean value
    theorem: ``|A(x,t)| <= |A(0,t)| + L_A |x|``, so ``alpha = L_A`` and
    ``beta = max_t |A(0,t)|``.
    """
    if not isinstance(box, Box):
        raise InvalidInputError("sampled_bounds needs a Box")
    if box.dim != fld.dim:
        raise InvalidInputError("box and field dimensions differ")
    counts = np.broadcast_to(np.asarray(n_space, dtype=int), (fld.dim,))
    needed = np.ceil(8.0 * box.widths).astype(int)
    if np.any(counts < needed):
        raise InvalidInputError(
            f"resolution {tuple(counts)} below 8 points per unit length ({tuple(needed)})"
        )
    if n_time < 1 or not t_max >= 0.0:
        raise InvalidInputError("need n_time >= 1 and t_max >= 0")
    axes = [np.linspace(l, h, int(c)) for l, h, c in zip(box.lo, box.hi, counts)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, fld.dim)
    times = np.linspace(0.0, t_max, n_time) if n_time > 1 else np.array([0.0])
    origin = np.zeros((1, fld.dim))
    L = M = beta = 0.0
    for t in times:
        L = max(L, float(operator_norm(fld.jacobian(pts, t)).max()))
        M = max(M, float(np.abs(fld.divergence(pts, t)).max()))
        beta = max(beta, float(np.linalg.norm(fld.value(origin, t))))
    return FieldBounds(L, M, L, beta, provenance="sampled")


def check_linear_growth(
    fld: VelocityField, bounds: FieldBounds, samples: Sequence[tuple[Sequence[float], float]]
) -> BoundCheck:
    """Check ``|A(x,t)| <= alpha |x| + beta`` at every ``(x, t)`` sample.

    The record carries the worst sample; samples where both sides vanish
    count as ratio 0.
    """
    worst = (0.0, 0.0, 0.0)  # ratio, lhs, rhs
    for x, t in samples:
        pts, _ = _as_batch(x, fld.dim)
        lhs = float(np.linalg.norm(fld.value(pts, t)[0]))
        rhs = bounds.alpha * float(np.linalg.norm(pts[0])) + bounds.beta
        ratio = 0.0 if lhs == 0.0 else (lhs / rhs if rhs > 0.0 else math.inf)
        if ratio > worst[0] or (worst[1] == 0.0 and worst[2] == 0.0):
            worst = (ratio, lhs, rhs)
    return BoundCheck.make(
        "linear-growth", worst[1], worst[2], 1e-12, field=fld.name, samples=len(samples)
    )
