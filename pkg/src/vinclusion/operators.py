"""Problem instances and the operators acting on selections.

Discretisation
--------------
A selection ``w`` is constant on each subinterval ``[t_j, t_{j+1})``.  The
Volterra operator is evaluated at the nodes with the kernel sampled at the
subinterval midpoints,

    V(w)(t_i) = sum_{j < i} dt * k(t_i, m_j) w_j,    m_j = (t_j + t_{j+1}) / 2,

and membership ``w(t) in F(t, x(t))`` is collocated at the midpoints, where
the piecewise-linear trajectory takes the value ``(x_j + x_{j+1}) / 2``.  The
resulting scheme is second order for smooth data.

Hausdorff distance between selection sets
-----------------------------------------
For ``G(h, u) = {w : w(t) in A_u(t) a.e.}`` with pointwise sets ``A_u(t)``, the
set is decomposable, so for any ``w1 in G(h, u1)`` the nearest element of
``G(h, u2)`` can be chosen pointwise.  Hence

    sup_{w1} d(w1, G(h, u2)) = ( int rho(t) e(A_{u1}(t), A_{u2}(t))^p dt )^(1/p)

in the weighted norm with weight ``rho``, i.e. supremum and integral
interchange.  The Hausdorff distance is the larger of the two one-sided
aggregates.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .fields import FieldData, SetField, derive_field_data, lint_field
from .kernels import KernelOperator, big_M, derive_kernel_mu, lint_kernel
from .timebase import (
    Grid,
    GridMismatchError,
    ScalarTable,
    Selection,
    Trajectory,
    bielecki_norm,
    bielecki_weights,
    conjugate_exponent,
    lp_norm,
)

__all__ = [
    "ProblemInstance",
    "Residual",
    "volterra_apply",
    "nemytskii_residual",
    "gp_project_step",
    "gp_extreme_step",
    "selection_excess",
    "selection_hausdorff",
    "contraction_ratio_probe",
    "two_variable_bound",
]


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Kernel, field, inhomogeneity, exponent and grid of one integral inclusion."""

    kernel: KernelOperator
    field: SetField
    h: Trajectory
    p: float = 1.0
    data: FieldData | None = None
    mu: ScalarTable | None = None
    lint_seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"exponent p must be >= 1, got {self.p!r}")
        d = self.field.dim
        if self.kernel.dim != d or self.h.dim != d:
            raise ValueError(
                f"dimension mismatch: kernel {self.kernel.dim}, field {d}, h {self.h.dim}")
        if self.data is None:
            object.__setattr__(self, "data", derive_field_data(self.field, self.grid))
        elif self.data.alpha.grid != self.grid:
            raise GridMismatchError("field data grid differs from the inhomogeneity grid")
        if self.mu is None:
            object.__setattr__(self, "mu", derive_kernel_mu(self.kernel, self.grid))
        elif self.mu.grid != self.grid:
            raise GridMismatchError("mu grid differs from the inhomogeneity grid")

    @property
    def grid(self) -> Grid:
        return self.h.grid

    @property
    def dim(self) -> int:
        return self.field.dim

    @property
    def q(self) -> float:
        return conjugate_exponent(self.p)

    @cached_property
    def M(self) -> float:
        return big_M(self.kernel, self.p, self.grid)

    @cached_property
    def node_weights(self) -> np.ndarray:
        return bielecki_weights(self.data.alpha, self.M, self.p)

    @cached_property
    def sub_weights(self) -> np.ndarray:
        w = self.node_weights
        return 0.5 * (w[:-1] + w[1:])

    @cached_property
    def kernel_lint(self):
        return lint_kernel(self.kernel, self.grid, self.mu, q=self.q)

    @cached_property
    def field_lint(self):
        return lint_field(self.field, self.data, self.grid, seed=self.lint_seed)

    def with_h(self, h: Trajectory) -> "ProblemInstance":
        """Same problem with another inhomogeneity (derived tables are reused)."""
        if h.grid != self.grid:
            raise GridMismatchError("new inhomogeneity lives on another grid")
        inst = ProblemInstance(self.kernel, self.field, h, self.p, self.data, self.mu, self.lint_seed)
        for name in ("M", "node_weights", "sub_weights"):
            if name in self.__dict__:
                inst.__dict__[name] = self.__dict__[name]
        return inst

    def bnorm(self, w: Selection) -> float:
        return bielecki_norm(w, self.data.alpha, self.M, self.p)


class Residual(NamedTuple):
    pointwise: np.ndarray  # one distance per subinterval
    aggregate: float


def _check(inst: ProblemInstance, *objs) -> None:
    for o in objs:
        if o.grid != inst.grid:
            raise GridMismatchError(f"{type(o).__name__} lives on {o.grid}, instance on {inst.grid}")


def volterra_apply(inst: ProblemInstance, w: Selection) -> Trajectory:
    """``V(w)(t_i) = sum_{j<i} dt k(t_i, m_j) w_j``."""
    _check(inst, w)
    K = inst.kernel.volterra_table(inst.grid)
    vals = inst.grid.dt * np.einsum("ijab,jb->ia", K, w.values)
    return Trajectory(inst.grid, vals)


def nemytskii_residual(inst: ProblemInstance, x: Trajectory, w: Selection) -> Residual:
    """Distances ``d(w_j, F(m_j, x(m_j)))`` and their L^p norm."""
    _check(inst, x, w)
    mids = inst.grid.midpoints
    proj = inst.field.project_many(mids, x.midvalues, w.values)
    pw = np.linalg.norm(w.values - proj, axis=1)
    agg = lp_norm(Selection(inst.grid, pw), inst.p)
    return Residual(pw, agg)


def gp_project_step(inst: ProblemInstance, u: Selection) -> Selection:
    """Nearest element of ``N_F(h + V(u))`` to ``u``, computed pointwise."""
    x = inst.h + volterra_apply(inst, u)
    return Selection(inst.grid, inst.field.project_many(inst.grid.midpoints, x.midvalues, u.values))


def gp_extreme_step(inst: ProblemInstance, u: Selection, directions: np.ndarray) -> Selection:
    """Support-point selection of ``N_F(h + V(u))`` in per-subinterval ``directions``."""
    x = inst.h + volterra_apply(inst, u)
    e = np.asarray(directions, dtype=float).reshape(inst.grid.N, inst.dim)
    return Selection(inst.grid, inst.field.extreme_many(inst.grid.midpoints, x.midvalues, e))


def _weighted_pnorm(inst: ProblemInstance, pointwise: np.ndarray) -> float:
    return float((inst.grid.dt * np.sum(inst.sub_weights * pointwise**inst.p)) ** (1.0 / inst.p))


def selection_excess(inst: ProblemInstance, u1: Selection, u2: Selection,
                     h1: Trajectory | None = None, h2: Trajectory | None = None) -> float:
    """Weighted one-sided excess ``e(G(h1, u1), G(h2, u2))``."""
    h1 = inst.h if h1 is None else h1
    h2 = inst.h if h2 is None else h2
    _check(inst, u1, u2, h1, h2)
    x1 = h1 + volterra_apply(inst, u1)
    x2 = h2 + volterra_apply(inst, u2)
    pw = inst.field.excess_many(inst.grid.midpoints, x1.midvalues, x2.midvalues)
    return _weighted_pnorm(inst, pw)


def selection_hausdorff(inst: ProblemInstance, u1: Selection, u2: Selection,
                        h1: Trajectory | None = None, h2: Trajectory | None = None) -> float:
    return max(selection_excess(inst, u1, u2, h1, h2), selection_excess(inst, u2, u1, h2, h1))


def contraction_ratio_probe(inst: ProblemInstance, u1: Selection, u2: Selection) -> float:
    """``d_H(G(h, u1), G(h, u2)) / |||u1 - u2|||``; bounded by ``2^(-1/p)`` in the continuum."""
    _check(inst, u1, u2)
    if np.array_equal(u1.values, u2.values):
        raise ValueError("contraction probe needs two distinct selections")
    return selection_hausdorff(inst, u1, u2) / inst.bnorm(u1 - u2)


def two_variable_bound(inst: ProblemInstance, u1: Selection, u2: Selection,
                h1: Trajectory, h2: Trajectory) -> float:
    """``(1/2 (||h1 - h2||^p + |||u1 - u2|||^p))^(1/p)``."""
    p = inst.p
    dh = float(np.max(np.linalg.norm(h1.values - h2.values, axis=1)))
    return (0.5 * (dh**p + inst.bnorm(u1 - u2) ** p)) ** (1.0 / p)
