"""Axis-aligned boxes: the only region type used for reference domains."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lo_1, hi_1] x ... x [lo_d, hi_d]``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise InvalidInputError("box bounds must be non-empty and of equal length")
        if not all(np.isfinite(lo + hi)):
            raise InvalidInputError("box bounds must be finite")
        if any(h <= l for l, h in zip(lo, hi)):
            raise InvalidInputError(f"degenerate box lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "Box":
        return cls((lo,) * dim, (hi,) * dim)

    @classmethod
    def around(cls, points: np.ndarray, pad: float = 0.0) -> "Box":
        """Bounding box of a point cloud, inflated by ``pad`` on every side."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.size == 0:
            raise InvalidInputError("cannot bound an empty point cloud")
        return cls(tuple(pts.min(axis=0) - pad), tuple(pts.max(axis=0) + pad))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    @property
    def measure(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside the box shrunk by ``margin``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lo) + margin
        hi = np.asarray(self.hi) - margin
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def contains_box(self, other: "Box", margin: float = 0.0) -> bool:
        return bool(
            np.all(np.asarray(other.lo) >= np.asarray(self.lo) + margin)
            and np.all(np.asarray(other.hi) <= np.asarray(self.hi) - margin)
        )

    def inflate(self, pad: float | Sequence[float]) -> "Box":
        pad = np.broadcast_to(np.asarray(pad, dtype=float), (self.dim,))
        return Box(tuple(np.asarray(self.lo) - pad), tuple(np.asarray(self.hi) + pad))

    def union(self, other: "Box") -> "Box":
        return Box(
            tuple(np.minimum(self.lo, other.lo)), tuple(np.maximum(self.hi, other.hi))
        )

    def corners(self) -> np.ndarray:
        return np.array(list(product(*zip(self.lo, self.hi))), dtype=float)

    def boundary_cloud(self, per_face: int = 64) -> np.ndarray:
        """Sample points on the boundary, ``per_face`` per axis of every face.

        In 1D the boundary is the two endpoints. Corners appear once per
        adjacent face; duplicates are harmless for bounding-box use.
        """
        if self.dim == 1:
            return np.array([[self.lo[0]], [self.hi[0]]])
        axes = [np.linspace(l, h, per_face) for l, h in zip(self.lo, self.hi)]
        faces = []
        for k in range(self.dim):
            others = [axes[j] for j in range(self.dim) if j != k]
            grid = np.stack(np.meshgrid(*others, indexing="ij"), axis=-1).reshape(
                -1, self.dim - 1
            )
            for val in (self.lo[k], self.hi[k]):
                face = np.insert(grid, k, val, axis=1)
                faces.append(face)
        return np.concatenate(faces, axis=0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}
