"""Uniform time grids, grid-sampled functions and their norms.

Selections are piecewise constant on the left-closed subintervals
``[t_j, t_{j+1})`` and are integrated with the left-rectangle rule, which is
exact on that class.  Trajectories and scalar node tables are piecewise linear
and are integrated with the trapezoid rule.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "Selection",
    "Trajectory",
    "ScalarTable",
    "GridMismatchError",
    "conjugate_exponent",
    "cumulative_trapezoid",
    "trapezoid_integrate",
    "lp_norm",
    "bielecki_weights",
    "bielecki_norm",
    "sup_norm",
]


class GridMismatchError(ValueError):
    """Raised when grid-sampled objects do not live on the same grid."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_i = i*T/N`` on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise ValueError(f"horizon T must be positive, got {self.T!r}")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.N + 1) * self.dt
        t[-1] = self.T
        t.flags.writeable = False
        return t

    @cached_property
    def midpoints(self) -> np.ndarray:
        m = (np.arange(self.N) + 0.5) * self.dt
        m.flags.writeable = False
        return m

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.T, self.N * factor)

    def node_index(self, t: float) -> int:
        """Index of the node equal to ``t`` (within rounding); ``ValueError`` otherwise."""
        i = int(round(t / self.dt))
        if i < 0 or i > self.N or abs(self.nodes[i] - t) > 1e-12 * max(1.0, self.T):
            raise ValueError(f"t={t!r} is not a node of {self}")
        return i


def _as_rows(values, rows: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != rows:
        raise ValueError(f"{what} needs {rows} value rows, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} values must be finite")
    arr.flags.writeable = False
    return arr


def _check_same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class Selection:
    """Piecewise-constant function, one row of shape ``(d,)`` per subinterval."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_rows(self.values, self.grid.N, "Selection"))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def constant(cls, grid: Grid, value) -> "Selection":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(v, (grid.N, 1)))

    @classmethod
    def from_function(cls, grid: Grid, f) -> "Selection":
        """Sample ``f(t)`` at subinterval midpoints."""
        return cls(grid, np.array([np.atleast_1d(f(t)) for t in grid.midpoints], dtype=float))

    def __add__(self, other: "Selection") -> "Selection":
        _check_same_grid(self.grid, other.grid)
        return Selection(self.grid, self.values + other.values)

    def __sub__(self, other: "Selection") -> "Selection":
        _check_same_grid(self.grid, other.grid)
        return Selection(self.grid, self.values - other.values)

    def __rmul__(self, a: float) -> "Selection":
        return Selection(self.grid, a * self.values)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-linear function, one row of shape ``(d,)`` per node."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_rows(self.values, self.grid.N + 1, "Trajectory"))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def midvalues(self) -> np.ndarray:
        """Values at subinterval midpoints (exact for the linear interpolant)."""
        return 0.5 * (self.values[:-1] + self.values[1:])

    @classmethod
    def constant(cls, grid: Grid, value) -> "Trajectory":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(v, (grid.N + 1, 1)))

    @classmethod
    def from_function(cls, grid: Grid, f) -> "Trajectory":
        return cls(grid, np.array([np.atleast_1d(f(t)) for t in grid.nodes], dtype=float))

    def __add__(self, other: "Trajectory") -> "Trajectory":
        _check_same_grid(self.grid, other.grid)
        return Trajectory(self.grid, self.values + other.values)

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        _check_same_grid(self.grid, other.grid)
        return Trajectory(self.grid, self.values - other.values)

    def __rmul__(self, a: float) -> "Trajectory":
        return Trajectory(self.grid, a * self.values)


@dataclass(frozen=True, eq=False)
class ScalarTable:
    """One real per node (data functions such as alpha, beta, c, mu)."""

    grid: Grid
    values: np.ndarray
    nonnegative: bool = False

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).reshape(-1)
        if arr.shape[0] != self.grid.N + 1:
            raise ValueError(f"ScalarTable needs {self.grid.N + 1} entries, got {arr.shape[0]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("ScalarTable entries must be finite")
        if self.nonnegative and np.any(arr < 0):
            raise ValueError("ScalarTable entries must be nonnegative")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, grid: Grid, value: float, nonnegative: bool = False) -> "ScalarTable":
        return cls(grid, np.full(grid.N + 1, float(value)), nonnegative)

    @classmethod
    def from_function(cls, grid: Grid, f, nonnegative: bool = False) -> "ScalarTable":
        return cls(grid, np.array([float(f(t)) for t in grid.nodes]), nonnegative)

    @property
    def midvalues(self) -> np.ndarray:
        return 0.5 * (self.values[:-1] + self.values[1:])


def conjugate_exponent(p: float) -> float:
    """``q`` with ``1/p + 1/q = 1``; ``inf`` for ``p == 1``."""
    if p < 1:
        raise ValueError(f"exponent p must be >= 1, got {p!r}")
    return np.inf if p == 1 else p / (p - 1.0)


def cumulative_trapezoid(values: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoid integrals from node 0 to every node (first entry 0)."""
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * dt * (values[:-1] + values[1:]), axis=0)
    return out


def trapezoid_integrate(f: ScalarTable, up_to: int | None = None) -> float:
    """Composite trapezoid value of ``f`` over ``[0, t_{up_to}]``."""
    N = f.grid.N
    if up_to is None:
        up_to = N
    if int(up_to) != up_to or not 0 <= up_to <= N:
        raise IndexError(f"up_to must be a node index in [0, {N}], got {up_to!r}")
    v = f.values[: int(up_to) + 1]
    return float(f.grid.dt * (v.sum() - 0.5 * (v[0] + v[-1]))) if up_to > 0 else 0.0


def lp_norm(w: Selection, p: float) -> float:
    """``(int_0^T |w(t)|^p dt)^(1/p)`` for a piecewise-constant ``w``."""
    if p < 1:
        raise ValueError(f"exponent p must be >= 1, got {p!r}")
    mags = np.linalg.norm(w.values, axis=1)
    return float((w.grid.dt * np.sum(mags**p)) ** (1.0 / p))


def bielecki_weights(alpha: ScalarTable, M: float, p: float) -> np.ndarray:
    """Node weights ``exp(-2^(2p-1) * M * r(t_i))`` with ``r(t) = int_0^t alpha^p``."""
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M!r}")
    if p < 1:
        raise ValueError(f"exponent p must be >= 1, got {p!r}")
    r = cumulative_trapezoid(alpha.values**p, alpha.grid.dt)
    return np.exp(-(2.0 ** (2 * p - 1)) * M * r)


def bielecki_norm(w: Selection, alpha: ScalarTable, M: float, p: float) -> float:
    """Exponentially weighted L^p norm under which the selection map contracts.

    Node weights are averaged onto subintervals and paired with the constant
    value of ``w`` there.
    """
    _check_same_grid(w.grid, alpha.grid)
    nw = bielecki_weights(alpha, M, p)
    sub = 0.5 * (nw[:-1] + nw[1:])
    mags = np.linalg.norm(w.values, axis=1)
    return float((w.grid.dt * np.sum(sub * mags**p)) ** (1.0 / p))


def sup_norm(x: Trajectory) -> float:
    return float(np.max(np.linalg.norm(x.values, axis=1)))
