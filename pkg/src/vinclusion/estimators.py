"""Estimator-style wrappers around the solvers.

The solution map ``h -> x(., h)`` is a transformation of node tables: each
row of ``X`` holds an inhomogeneity sampled at the ``N + 1`` grid nodes
(node-major, components last), and ``transform`` returns the corresponding
solutions in the same layout.  ``fit`` only derives the instance data (field
tables, ``M``, hypothesis lints); nothing is learned from the rows.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .fields import SetField
from .kernels import KernelOperator
from .operators import ProblemInstance
from .solvers import picard_solve, selection_scheme_solve
from .timebase import Grid, Trajectory

__all__ = ["check_node_table", "check_inhomogeneities", "SolutionMap"]


def check_node_table(values, grid: Grid, dim: int = 1, name: str = "table") -> np.ndarray:
    """Validate one node table and return it with shape ``(N + 1, dim)``."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1 and dim == 1:
        v = v[:, None]
    if v.ndim == 1 and v.size == (grid.N + 1) * dim:
        v = v.reshape(grid.N + 1, dim)
    if v.shape != (grid.N + 1, dim):
        raise ValueError(f"{name} must have shape ({grid.N + 1}, {dim}), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def check_inhomogeneities(X, grid: Grid, dim: int) -> np.ndarray:
    """Validate a batch of flattened node tables; returns ``(n, N + 1, dim)``."""
    X = check_array(X, dtype=float, ensure_2d=True)
    width = (grid.N + 1) * dim
    if X.shape[1] != width:
        raise ValueError(f"expected {width} columns ((N + 1) * d), got {X.shape[1]}")
    return X.reshape(X.shape[0], grid.N + 1, dim)


class SolutionMap(TransformerMixin, BaseEstimator):
    """Maps inhomogeneities to solution trajectories of one inclusion.

    Parameters
    ----------
    kernel, field : the operator data of the inclusion.
    T, N : horizon and number of subintervals.
    p : integrability exponent.
    method : ``"selection"`` runs the successive-approximation scheme, whose
        output depends continuously on ``h``; ``"picard"`` runs the
        nearest-selection fixed-point iteration from the zero selection.
    eps, nmax : parameters of the selection scheme.
    tol : stopping tolerance.
    """

    def __init__(self, kernel: KernelOperator = None, field: SetField = None, T: float = 1.0, N: int = 256,
                 p: float = 1.0, method: str = "selection", eps: float = 0.1, nmax: int = 30,
                 tol: float = 1e-10):
        self.kernel = kernel
        self.field = field
        self.T = T
        self.N = N
        self.p = p
        self.method = method
        self.eps = eps
        self.nmax = nmax
        self.tol = tol

    def fit(self, X=None, y=None):
        if self.kernel is None or self.field is None:
            raise ValueError("kernel and field are required")
        if self.method not in ("selection", "picard"):
            raise ValueError(f"method must be 'selection' or 'picard', got {self.method!r}")
        self.grid_ = Grid(self.T, self.N)
        d = self.field.dim
        self.instance_ = ProblemInstance(self.kernel, self.field,
                                         Trajectory(self.grid_, np.zeros((self.N + 1, d))), self.p)
        self.M_ = self.instance_.M
        self.hypotheses_passed_ = bool(self.instance_.kernel_lint.passed and self.instance_.field_lint.passed)
        self.n_features_in_ = (self.N + 1) * d
        if X is not None:
            check_inhomogeneities(X, self.grid_, d)
        return self

    def _solve_one(self, h: np.ndarray) -> np.ndarray:
        inst = self.instance_.with_h(Trajectory(self.grid_, h))
        if self.method == "selection":
            return selection_scheme_solve(inst, eps=self.eps, nmax=self.nmax, tol=self.tol).x.values
        res = picard_solve(inst, tol=self.tol, traj_tol=self.tol)
        if not res.report.converged:
            raise RuntimeError(f"Picard iteration did not converge (last increment {res.report.increments[-1]:.3e})")
        return res.x.values

    def transform(self, X):
        check_is_fitted(self, "instance_")
        H = check_inhomogeneities(X, self.grid_, self.field.dim)
        return np.stack([self._solve_one(h).reshape(-1) for h in H])
