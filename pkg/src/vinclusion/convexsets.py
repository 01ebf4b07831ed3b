"""Compact convex regions in R^d: support functions, projections, distances.

Four closed variants are supported (point, ball, box, segment).  Every
operation the solvers need has a closed form on them, so no external
optimisation is involved.

Excess ``e(A, B) = sup_{a in A} d(a, B)`` is computed exactly whenever ``A`` is
a polytope (the distance to a convex set is convex, so the supremum is
attained at a vertex) or when both sets are balls.  The remaining case, a
ball against a non-ball, uses the support-function identity
``e(A, B) = max(0, sup_{|e|=1} h_A(e) - h_B(e))`` sampled on a fixed
direction net whose size is reported alongside the value.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Union

import numpy as np

__all__ = [
    "Point",
    "Ball",
    "Box",
    "Segment",
    "ConvexRegion",
    "DimensionMismatchError",
    "ExcessValue",
    "add_ball",
    "direction_net",
    "support",
    "project",
    "distance",
    "excess",
    "excess_report",
    "hausdorff",
    "farthest_norm",
    "box_hull",
]


class DimensionMismatchError(ValueError):
    pass


def _vec(x) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    return v


@dataclass(frozen=True, eq=False)
class Point:
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", _vec(self.c))

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def center(self) -> np.ndarray:
        return self.c

    def vertices(self) -> np.ndarray:
        return self.c[None, :]

    def translate(self, v) -> "Point":
        return Point(self.c + _vec(v))

    def scale(self, a: float) -> "Point":
        return Point(a * self.c)


@dataclass(frozen=True, eq=False)
class Ball:
    c: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "c", _vec(self.c))
        if not self.radius >= 0:
            raise ValueError(f"ball radius must be >= 0, got {self.radius!r}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def center(self) -> np.ndarray:
        return self.c

    def translate(self, v) -> "Ball":
        return Ball(self.c + _vec(v), self.radius)

    def scale(self, a: float) -> "Ball":
        return Ball(a * self.c, abs(a) * self.radius)


@dataclass(frozen=True, eq=False)
class Box:
    c: np.ndarray
    half_widths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", _vec(self.c))
        r = _vec(self.half_widths)
        if r.shape == (1,) and self.c.shape[0] > 1:
            r = np.full_like(self.c, r[0])
        if r.shape != self.c.shape:
            raise DimensionMismatchError("box center and half-widths differ in dimension")
        if np.any(~(r >= 0)):
            raise ValueError("box half-widths must be >= 0")
        object.__setattr__(self, "half_widths", r)

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def center(self) -> np.ndarray:
        return self.c

    @property
    def lower(self) -> np.ndarray:
        return self.c - self.half_widths

    @property
    def upper(self) -> np.ndarray:
        return self.c + self.half_widths

    def vertices(self) -> np.ndarray:
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=self.dim)))
        return self.c + signs * self.half_widths

    def translate(self, v) -> "Box":
        return Box(self.c + _vec(v), self.half_widths)

    def scale(self, a: float) -> "Box":
        return Box(a * self.c, abs(a) * self.half_widths)


@dataclass(frozen=True, eq=False)
class Segment:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a))
        object.__setattr__(self, "b", _vec(self.b))
        if self.a.shape != self.b.shape:
            raise DimensionMismatchError("segment endpoints differ in dimension")

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.a + self.b)

    def vertices(self) -> np.ndarray:
        return np.vstack([self.a, self.b])

    def translate(self, v) -> "Segment":
        v = _vec(v)
        return Segment(self.a + v, self.b + v)

    def scale(self, a: float) -> "Segment":
        return Segment(a * self.a, a * self.b)


ConvexRegion = Union[Point, Ball, Box, Segment]


def _check_dim(S: ConvexRegion, v: np.ndarray) -> None:
    if v.shape[0] != S.dim:
        raise DimensionMismatchError(f"dimension {v.shape[0]} does not match region dimension {S.dim}")


def add_ball(S: ConvexRegion, radius: float) -> ConvexRegion:
    """Minkowski sum ``S + Ball(0, radius)``; defined for points and balls, which stay closed."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if isinstance(S, Point):
        return Ball(S.c, radius)
    if isinstance(S, Ball):
        return Ball(S.c, S.radius + radius)
    raise TypeError(f"{type(S).__name__} plus a ball is not a built-in region")


def support(S: ConvexRegion, e) -> float:
    """``sup_{y in S} <e, y>``."""
    e = _vec(e)
    _check_dim(S, e)
    if isinstance(S, Point):
        return float(e @ S.c)
    if isinstance(S, Ball):
        return float(e @ S.c + S.radius * np.linalg.norm(e))
    if isinstance(S, Box):
        return float(e @ S.c + np.abs(e) @ S.half_widths)
    if isinstance(S, Segment):
        return float(max(e @ S.a, e @ S.b))
    raise TypeError(f"unsupported region {type(S).__name__}")


def project(y, S: ConvexRegion) -> np.ndarray:
    """Euclidean nearest point of ``S`` to ``y``."""
    y = _vec(y)
    _check_dim(S, y)
    if isinstance(S, Point):
        return S.c.copy()
    if isinstance(S, Ball):
        v = y - S.c
        n = np.linalg.norm(v)
        if n <= S.radius:
            return y.copy()
        return S.c + (S.radius / n) * v
    if isinstance(S, Box):
        return np.clip(y, S.lower, S.upper)
    if isinstance(S, Segment):
        ab = S.b - S.a
        L2 = ab @ ab
        if L2 == 0.0:
            return S.a.copy()
        s = min(1.0, max(0.0, float((y - S.a) @ ab / L2)))
        return S.a + s * ab
    raise TypeError(f"unsupported region {type(S).__name__}")


def distance(y, S: ConvexRegion) -> float:
    y = _vec(y)
    return float(np.linalg.norm(y - project(y, S)))


def farthest_norm(S: ConvexRegion) -> float:
    """``sup{|y| : y in S}``."""
    if isinstance(S, Ball):
        return float(np.linalg.norm(S.c) + S.radius)
    return float(np.max(np.linalg.norm(S.vertices(), axis=1)))


@lru_cache(maxsize=None)
def _net(d: int) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = 2 * np.pi * np.arange(256) / 256
        return np.column_stack([np.cos(th), np.sin(th)])
    # Fibonacci sphere plus coordinate axes.
    n = 64 * math.ceil(d / 2) * 8
    rng = np.random.default_rng(20240521 + d)
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    axes = np.vstack([np.eye(d), -np.eye(d)])
    net = np.vstack([axes, g])
    net.flags.writeable = False
    return net


def direction_net(d: int) -> np.ndarray:
    """Fixed unit-direction net used for cross-variant excess (rows are directions)."""
    return _net(int(d))


class ExcessValue(NamedTuple):
    value: float
    method: str  # "exact" or "direction-net"
    net_size: int


def excess_report(S1: ConvexRegion, S2: ConvexRegion) -> ExcessValue:
    if S1.dim != S2.dim:
        raise DimensionMismatchError(f"dimensions differ: {S1.dim} vs {S2.dim}")
    if isinstance(S1, Ball) and isinstance(S2, Ball):
        v = np.linalg.norm(S1.c - S2.c) + S1.radius - S2.radius
        return ExcessValue(float(max(0.0, v)), "exact", 0)
    if isinstance(S1, Ball) and isinstance(S2, Point):
        return ExcessValue(float(np.linalg.norm(S1.c - S2.c) + S1.radius), "exact", 0)
    if not isinstance(S1, Ball):
        v = max(distance(x, S2) for x in S1.vertices())
        return ExcessValue(float(v), "exact", 0)
    net = direction_net(S1.dim)
    gaps = [support(S1, e) - support(S2, e) for e in net]
    return ExcessValue(float(max(0.0, max(gaps))), "direction-net", len(net))


def excess(S1: ConvexRegion, S2: ConvexRegion) -> float:
    """One-sided Hausdorff distance ``sup_{x in S1} d(x, S2)``."""
    return excess_report(S1, S2).value


def hausdorff(S1: ConvexRegion, S2: ConvexRegion) -> float:
    return max(excess(S1, S2), excess(S2, S1))


def box_hull(points) -> Box:
    """Smallest box containing the given points (rows)."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = P.min(axis=0), P.max(axis=0)
    return Box(0.5 * (lo + hi), 0.5 * (hi - lo))
