"""Quadrature on moving domains.

A composite tensor Gauss-Legendre rule is built on an anchor box at an
anchor time and pushed along characteristics; each weight is multiplied by
the Liouville determinant of the flow map, so that
``int_{D(box)} f dx ~= sum_i w_i det J_i f(x_i)``.

All reductions use :func:`pairwise_sum`, whose tree shape depends only on
the number of terms, so results are identical for any thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .boxes import Box
from .characteristics import FlowBatch, FlowCache, ODEConfig, traced
from .errors import EvaluationError, InvalidInputError
from .velocity_fields import VelocityField


def pairwise_sum(values) -> float:
    """Sum by a balanced binary tree (zero-padded to a power of two)."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n == 0:
        return 0.0
    size = 1 << (n - 1).bit_length()
    buf = np.zeros(size)
    buf[:n] = v
    while size > 1:
        size //= 2
        buf = buf[:size] + buf[size : 2 * size]
    return float(buf[0])


@lru_cache(maxsize=64)
def _gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


@dataclass(frozen=True, eq=False)
class ReferenceQuadrature:
    """Composite Gauss-Legendre rule on ``box`` living at ``anchor_time``."""

    anchor_time: float
    nodes: np.ndarray
    weights: np.ndarray
    box: Box
    order: int
    cells: int

    @property
    def key(self) -> str:
        """Stable identifier of the node set, used for trajectory memoization."""
        return (
            f"gl:{list(self.box.lo)}:{list(self.box.hi)}:c{self.cells}:o{self.order}"
            f"@{self.anchor_time!r}"
        )

    @property
    def dim(self) -> int:
        return self.box.dim

    def __len__(self) -> int:
        return self.weights.size


@dataclass(frozen=True, eq=False)
class PushedQuadrature:
    """A reference rule carried to time ``t`` (nodes on the moving domain)."""

    t: float
    nodes: np.ndarray
    weights: np.ndarray
    parent: ReferenceQuadrature
    log_det: np.ndarray = field(repr=False)
    masked: bool = False

    @property
    def key(self) -> str:
        return f"{self.parent.key}->{self.t!r}"

    @property
    def measure(self) -> float:
        return pairwise_sum(self.weights)

    def __len__(self) -> int:
        return self.weights.size


def build_reference(box: Box, cells: int, order: int, anchor_time: float) -> ReferenceQuadrature:
    """Tensor rule with ``cells`` subintervals and ``order`` points per axis.

    Exact for polynomials of degree ``2 * order - 1`` on each cell. Nodes are
    ordered lexicographically with the last axis fastest.
    """
    if not isinstance(box, Box):
        raise InvalidInputError("quadrature box must be a Box")
    if int(cells) != cells or cells < 1:
        raise InvalidInputError(f"cells must be a positive integer, got {cells}")
    if int(order) != order or not 2 <= order <= 32:
        raise InvalidInputError(f"order must be in [2, 32], got {order}")
    cells, order = int(cells), int(order)
    x_ref, w_ref = _gauss_legendre(order)
    axes_x, axes_w = [], []
    for lo, hi in zip(box.lo, box.hi):
        h = (hi - lo) / cells
        left = lo + h * np.arange(cells)
        ax = (left[:, None] + 0.5 * h * (x_ref[None, :] + 1.0)).ravel()
        aw = np.tile(0.5 * h * w_ref, cells)
        axes_x.append(ax)
        axes_w.append(aw)
    grids = np.meshgrid(*axes_x, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = axes_w[0]
    for aw in axes_w[1:]:
        weights = np.outer(weights, aw).ravel()
    return ReferenceQuadrature(float(anchor_time), nodes, weights, box, order, cells)


def anchored(rq: ReferenceQuadrature) -> PushedQuadrature:
    """The reference rule viewed as a pushed rule at its own anchor time."""
    return PushedQuadrature(rq.anchor_time, rq.nodes, rq.weights, rq, np.zeros(len(rq)))


def _from_batch(rq: ReferenceQuadrature, batch: FlowBatch) -> PushedQuadrature:
    return PushedQuadrature(
        batch.t_end, batch.end, rq.weights * np.exp(batch.log_det), rq, batch.log_det
    )


def push(
    rq: ReferenceQuadrature,
    fld: VelocityField,
    t: float,
    cfg: ODEConfig,
    cache: FlowCache | None = None,
) -> PushedQuadrature:
    """Flow every node from the anchor time to ``t`` and rescale the weights."""
    if t == rq.anchor_time:
        return anchored(rq)
    batch = traced(fld, rq.nodes, rq.anchor_time, t, cfg, cache, rq.key)
    return _from_batch(rq, batch)


def push_many(
    rq: ReferenceQuadrature,
    fld: VelocityField,
    times: Sequence[float],
    cfg: ODEConfig,
    cache: FlowCache | None = None,
) -> dict[float, PushedQuadrature]:
    """Push to several times by chaining segments outward from the anchor.

    Times on each side of the anchor are visited in order of distance, and
    each segment starts where the previous one ended, so the total work is
    one traversal of the time grid rather than one per time. Positions and
    log-determinants accumulate along the chain.
    """
    out: dict[float, PushedQuadrature] = {}
    a = rq.anchor_time
    uniq = sorted({float(t) for t in times})
    if a in uniq:
        out[a] = anchored(rq)
    for side in (sorted(t for t in uniq if t > a), sorted((t for t in uniq if t < a), reverse=True)):
        x = rq.nodes
        logj = np.zeros(len(rq))
        prev = a
        path: tuple[float, ...] = (a,)
        for t in side:
            path = path + (t,)
            # the key encodes the whole chain so far: start points depend on it
            key = (rq.key, "chain", path)
            batch = traced(fld, x, prev, t, cfg, cache, key)
            x = batch.end
            logj = logj + batch.log_det
            out[t] = PushedQuadrature(t, x, rq.weights * np.exp(logj), rq, logj)
            prev = t
    return {t: out[float(t)] for t in times}


def _values(pq: PushedQuadrature, f) -> np.ndarray:
    if isinstance(f, np.ndarray):
        vals = np.asarray(f, dtype=float).ravel()
        if vals.size != len(pq):
            raise InvalidInputError(f"{vals.size} values for {len(pq)} nodes")
    else:
        vals = np.asarray(f(pq.nodes), dtype=float).ravel()
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise EvaluationError(
            f"integrand is {vals[i]} at node {i} x={pq.nodes[i].tolist()} (t={pq.t})"
        )
    return vals


def integrate(
    pq: PushedQuadrature,
    f: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    mask: Callable[[np.ndarray], np.ndarray] | None = None,
) -> float:
    """``sum_i w_i f(x_i)`` by pairwise summation.

    ``f`` is a batch callable on the ``(n, d)`` node array or an array of
    precomputed node values. ``mask`` restricts the integral to a
    sub-region of the anchor box through its indicator (reduced accuracy
    at the cut; see ``PushedQuadrature.masked``).
    """
    vals = _values(pq, f)
    if mask is not None:
        vals = vals * np.asarray(mask(pq.nodes), dtype=float)
    return pairwise_sum(pq.weights * vals)


def lp_norm(
    pq: PushedQuadrature, f: Callable[[np.ndarray], np.ndarray] | np.ndarray, p: float = 2.0
) -> float:
    """``(sum_i w_i |f(x_i)|^p)^(1/p)`` for ``1 <= p < inf``."""
    if not (p >= 1.0 and math.isfinite(p)):
        raise InvalidInputError(f"need 1 <= p < inf, got {p}")
    vals = np.abs(_values(pq, f))
    if p == 1.0:
        return pairwise_sum(pq.weights * vals)
    if p == 2.0:
        return math.sqrt(max(pairwise_sum(pq.weights * vals * vals), 0.0))
    return pairwise_sum(pq.weights * vals**p) ** (1.0 / p)


def with_mask(pq: PushedQuadrature, indicator: Callable[[np.ndarray], np.ndarray]) -> PushedQuadrature:
    """Zero the weights of nodes outside a region; flags the rule as masked."""
    keep = np.asarray(indicator(pq.nodes), dtype=float)
    return PushedQuadrature(pq.t, pq.nodes, pq.weights * keep, pq.parent, pq.log_det, True)

