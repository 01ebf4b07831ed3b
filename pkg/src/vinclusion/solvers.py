"""Fixed-point solvers for the integral inclusion.

* :func:`picard_solve` iterates the nearest-selection map
  ``u -> proj(u, F(., h + V(u)))``.  Once an iterate is a member of the
  previous selection set, each increment is bounded by the excess between
  consecutive selection sets, so increments decay geometrically with ratio
  ``2^(-1/p)`` in the weighted norm.
* :func:`selection_scheme_solve` runs the successive-approximation scheme
  that makes ``h -> x(., h)`` continuous, recording every bound of the
  construction in a :class:`SelectionLedger`.
* :func:`periodic_solve` searches for a fixed point of
  ``x -> U(T) x + V(u_x)(T)`` with a semigroup kernel, which yields a
  ``T``-periodic trajectory.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .fields import SetField, SingletonField
from .kernels import SemigroupKernel, kernel_qnorms
from .operators import (
    ProblemInstance,
    gp_extreme_step,
    gp_project_step,
    nemytskii_residual,
    volterra_apply,
)
from .timebase import Grid, ScalarTable, Selection, Trajectory, cumulative_trapezoid, sup_norm

__all__ = [
    "SolveReport",
    "SolveResult",
    "picard_solve",
    "single_valued_solve",
    "UniquenessError",
    "SelectionLedger",
    "LedgerViolation",
    "build_ledger",
    "selection_scheme_solve",
    "PeriodicReport",
    "PeriodicResult",
    "SmallnessError",
    "periodic_solve",
]

log = logging.getLogger(__name__)

# Ratios of increments below this size are dominated by rounding.
RATIO_FLOOR = 1e-12


@dataclass
class SolveReport:
    iterations: int = 0
    increments: list = field(default_factory=list)
    sup_increments: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    converged: bool = False
    residual: float = float("nan")
    fixed_point_defect: float = float("nan")
    tol: float = float("nan")
    traj_tol: float = float("nan")
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "increments": list(map(float, self.increments)),
            "sup_increments": list(map(float, self.sup_increments)),
            "ratios": list(map(float, self.ratios)),
            "converged": self.converged,
            "residual": float(self.residual),
            "fixed_point_defect": float(self.fixed_point_defect),
            "tol": self.tol,
            "traj_tol": self.traj_tol,
        }


class SolveResult(NamedTuple):
    u: Selection
    x: Trajectory
    report: SolveReport


def picard_solve(inst: ProblemInstance, u0: Selection | None = None, tol: float = 1e-8,
                 maxit: int = 200, traj_tol: float = 1e-6, directions=None) -> SolveResult:
    """Iterate ``u_{k+1} = proj(u_k, F(., h + V(u_k)))`` to a fixed point.

    With ``directions`` the projection is replaced by the support point of
    ``F`` in the given per-subinterval directions (extremal selections).
    Stops once the weighted increment is ``<= tol`` and the sup-norm increment
    of the trajectory is ``<= traj_tol``.  Non-convergence is reported, not
    raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    start = time.perf_counter()
    grid = inst.grid
    u = Selection(grid, np.zeros((grid.N, inst.dim))) if u0 is None else u0

    def step(v):
        if directions is None:
            return gp_project_step(inst, v)
        return gp_extreme_step(inst, v, directions)

    report = SolveReport(tol=tol, traj_tol=traj_tol)
    x_prev = inst.h + volterra_apply(inst, u)
    for k in range(1, maxit + 1):
        u_new = step(u)  # a non-finite selection is rejected on construction
        inc = inst.bnorm(u_new - u)
        x_new = inst.h + volterra_apply(inst, u_new)
        sinc = sup_norm(x_new - x_prev)
        report.increments.append(inc)
        report.sup_increments.append(sinc)
        if k >= 2 and report.increments[-2] > RATIO_FLOOR:
            report.ratios.append(inc / report.increments[-2])
        u, x_prev = u_new, x_new
        report.iterations = k
        if inc <= tol and sinc <= traj_tol:
            report.converged = True
            break
    x = x_prev
    report.residual = nemytskii_residual(inst, x, u).aggregate
    report.fixed_point_defect = inst.bnorm(step(u) - u)
    report.wall_clock = time.perf_counter() - start
    if not report.converged:
        log.warning("picard_solve: no convergence after %d iterations (increment %.3e)",
                    report.iterations, report.increments[-1])
    return SolveResult(u, x, report)


class UniquenessError(RuntimeError):
    pass


def single_valued_solve(inst: ProblemInstance, tol: float = 1e-10, maxit: int = 500,
                        seeds=(0.0, 10.0)) -> SolveResult:
    """Solve ``x = h + V(f(., x))`` for a single-valued field.

    The same equation is solved from each constant seed; the trajectories
    must agree within ``10 * tol`` in the sup norm, as uniqueness requires.
    """
    if not isinstance(inst.field, SingletonField):
        raise TypeError("single_valued_solve needs a singleton field")
    results = [picard_solve(inst, Selection.constant(inst.grid, np.full(inst.dim, s)), tol=tol,
                            maxit=maxit, traj_tol=tol)
               for s in seeds]
    base = results[0]
    for other in results[1:]:
        gap = sup_norm(base.x - other.x)
        if gap > 10 * tol:
            raise UniquenessError(f"seed-dependent solution: sup gap {gap:.3e} > {10 * tol:.3e}")
    return base


# ---------------------------------------------------------------------------
# successive approximation with continuous dependence on h


class LedgerViolation(RuntimeError):
    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness


@dataclass
class SelectionLedger:
    """Tables and checked bounds of the successive-approximation scheme."""

    grid: Grid
    p: float
    M: float
    eps: float
    eps_n: np.ndarray  # eps_0 .. eps_{nmax+1}
    gamma: np.ndarray  # node table
    m: np.ndarray  # node table
    beta_n: dict  # n -> node table, filled on demand by beta()
    alpha_p_norm: float
    gamma_l1: float
    abs_tol: float = 1e-12
    _tables: object = field(default=None, repr=False)
    recursion_margin: dict = field(default_factory=dict)  # n -> (min relative margin, t)
    iii_margin: dict = field(default_factory=dict)  # n -> per-subinterval margins
    increments: dict = field(default_factory=dict)  # n -> ||x_{n+1} - x_n||
    increment_bound: dict = field(default_factory=dict)  # n -> bound
    f0_margin: float = float("nan")
    eps_enlarged: bool = False

    def beta(self, n: int) -> np.ndarray:
        """Node table of ``beta_n``; computed and stored on first use."""
        if n not in self.beta_n:
            if n < 1 or n >= len(self.eps_n):
                raise IndexError(f"beta_{n} is outside the ledger range 1..{len(self.eps_n) - 1}")
            self.beta_n[n] = self._tables.beta(n, self.grid.nodes, self.M, self.p,
                                               self.grid.T, self.eps_n[n])
        return self.beta_n[n]

    def increment_bound_for(self, n: int) -> float:
        p = self.p
        return (self.M ** (n + 1) * self.alpha_p_norm**n / math.factorial(n) ** (1 / p)
                * (self.gamma_l1 + self.grid.T * self.eps) ** (1 / p))

    @property
    def passed(self) -> bool:
        rec = all(v[0] >= -1e-6 for v in self.recursion_margin.values())
        iii = all(np.min(v) >= -self.abs_tol for v in self.iii_margin.values())
        inc = all(self.increments[n] <= self.increment_bound[n] * (1 + 1e-9) + self.abs_tol
                  for n in self.increments)
        return rec and iii and inc

    def rows(self):
        """Rows ``(n, t, beta_n(t), iii_margin, increment_bound)`` for tabular export."""
        N = self.grid.N
        for n in sorted(self.beta_n):
            marg = self.iii_margin.get(n)
            bound = self.increment_bound.get(n, self.increment_bound_for(n))
            for i, t in enumerate(self.grid.nodes):
                mi = marg[i] if marg is not None and i < N else float("nan")
                yield n, float(t), float(self.beta_n[n][i]), float(mi), float(bound)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "eps_enlarged": self.eps_enlarged,
            "M": self.M,
            "p": self.p,
            "alpha_p_norm": self.alpha_p_norm,
            "gamma_l1": self.gamma_l1,
            "f0_margin": float(self.f0_margin),
            "recursion_min_relative_margin": {int(n): float(v[0]) for n, v in self.recursion_margin.items()},
            "iii_min_margin": {int(n): float(np.min(v)) for n, v in self.iii_margin.items()},
            "increments": {int(n): float(v) for n, v in self.increments.items()},
            "increment_bounds": {int(n): float(v) for n, v in self.increment_bound.items()},
            "passed": self.passed,
        }


def _trap_upto(values: np.ndarray, dt: float, i: int) -> float:
    v = values[: i + 1]
    return float(dt * (v.sum() - 0.5 * (v[0] + v[-1]))) if i > 0 else 0.0


class _PiecewiseTables:
    """Exact integrals for node tables read as piecewise-linear functions.

    ``alpha^p`` and ``gamma`` are interpolated linearly between nodes, so
    ``m(t) = int_0^t alpha^p`` is piecewise quadratic and every integrand of the
    ledger is a piecewise polynomial.  Gauss-Legendre rules with enough points
    per subinterval integrate them exactly up to rounding.
    """

    def __init__(self, grid: Grid, ap: np.ndarray, gamma: np.ndarray):
        self.grid, self.ap, self.gamma = grid, ap, gamma
        self.m_nodes = cumulative_trapezoid(ap, grid.dt)

    def _locate(self, s):
        j = np.minimum(np.floor(s / self.grid.dt).astype(int), self.grid.N - 1)
        return j, s - self.grid.nodes[j]

    def lin(self, table, s):
        return np.interp(s, self.grid.nodes, table)

    def m(self, s):
        j, r = self._locate(s)
        a = self.ap[j]
        b = (self.ap[j + 1] - self.ap[j]) / self.grid.dt
        return self.m_nodes[j] + a * r + 0.5 * b * r * r

    def gauss(self, G):
        x, w = np.polynomial.legendre.leggauss(G)
        dt = self.grid.dt
        tau = (self.grid.nodes[:-1, None] + 0.5 * dt * (x[None, :] + 1)).reshape(-1)
        wt = np.tile(0.5 * dt * w, self.grid.N)
        owner = np.repeat(np.arange(self.grid.N), G)
        return x, w, tau, wt, owner

    def beta_core(self, n: int, s: np.ndarray) -> np.ndarray:
        """``int_0^s gamma(tau) (m(s) - m(tau))^(n-1) / (n-1)! dtau`` at the points ``s``."""
        G = n + 2
        x, w, tau, wt, owner = self.gauss(G)
        g_tau = self.lin(self.gamma, tau)
        m_tau = self.m(tau)
        js, rs = self._locate(s)
        ms = self.m(s)
        fact = math.factorial(n - 1)
        out = np.empty(s.shape)
        for lo in range(0, s.size, 512):
            sl = slice(lo, lo + 512)
            full = owner[None, :] < js[sl, None]
            vals = np.where(full, g_tau[None, :] * (ms[sl, None] - m_tau[None, :]) ** (n - 1), 0.0)
            acc = vals @ wt
            # partial subinterval [t_j, s]
            ptau = self.grid.nodes[js[sl], None] + 0.5 * rs[sl, None] * (x[None, :] + 1)
            pw = 0.5 * rs[sl, None] * w[None, :]
            acc += np.sum(pw * self.lin(self.gamma, ptau) * (ms[sl, None] - self.m(ptau)) ** (n - 1), axis=1)
            out[sl] = acc / fact
        return out

    def beta(self, n, s, M, p, T, eps_n_val):
        fact = math.factorial(n - 1)
        return M ** (n * p) * (self.beta_core(n, s) + T * eps_n_val * self.m(s) ** (n - 1) / fact)

    def weighted_cumulative(self, n, M, p, T, eps_n_val) -> np.ndarray:
        """``int_0^{t_i} alpha^p beta_n`` at every node."""
        G = n + 3
        _, _, tau, wt, owner = self.gauss(G)
        vals = self.lin(self.ap, tau) * self.beta(n, tau, M, p, T, eps_n_val) * wt
        per_sub = np.bincount(owner, weights=vals, minlength=self.grid.N)
        return np.concatenate([[0.0], np.cumsum(per_sub)])


def build_ledger(inst: ProblemInstance, eps: float, nmax: int, rel_tol: float = 1e-6,
                 check_nmax: int | None = None) -> SelectionLedger:
    """Tabulate ``gamma``, ``m`` and ``eps_n`` (``beta_n`` on demand) and check
    the recursion ``M^p int_0^t alpha^p beta_n <= beta_{n+1}(t)`` at every node
    for ``n <= check_nmax`` (default ``nmax``)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid, p = inst.grid, inst.p
    alpha = inst.data.alpha.values
    beta = inst.data.beta.values
    M = float(np.max(kernel_qnorms(inst.kernel, grid, inst.q)))
    hnorm = np.linalg.norm(inst.h.values, axis=1)
    gamma = 2.0**p * np.maximum(beta**p, alpha**p * hnorm)
    ap = alpha**p
    pw = _PiecewiseTables(grid, ap, gamma)
    eps_n = np.array([(n + 1) / (n + 2) * eps for n in range(nmax + 2)])
    ledger = SelectionLedger(
        grid=grid, p=p, M=M, eps=eps, eps_n=eps_n, gamma=gamma, m=pw.m_nodes, beta_n={},
        alpha_p_norm=float(_trap_upto(ap, grid.dt, grid.N) ** (1 / p)),
        gamma_l1=_trap_upto(gamma, grid.dt, grid.N), _tables=pw,
    )
    check_nmax = nmax if check_nmax is None else min(check_nmax, nmax)
    for n in range(1, check_nmax + 1):
        lhs = M**p * pw.weighted_cumulative(n, M, p, grid.T, eps_n[n])
        rhs = ledger.beta(n + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(rhs > 0, (rhs - lhs) / rhs, np.where(lhs <= 0, np.inf, -np.inf))
        i = int(np.argmin(rel))
        ledger.recursion_margin[n] = (float(rel[i]), float(grid.nodes[i]))
        if rel[i] < -rel_tol:
            raise LedgerViolation(
                f"beta recursion fails at n={n}, t={grid.nodes[i]:.6g}",
                {"n": n, "t": float(grid.nodes[i]), "lhs": float(lhs[i]), "rhs": float(rhs[i])})
    return ledger


class SelectionSchemeResult(NamedTuple):
    x: Trajectory
    f: Selection
    ledger: SelectionLedger
    iterations: int
    residual: float


def selection_scheme_solve(inst: ProblemInstance, eps: float = 0.1, nmax: int = 30,
                           tol: float = 1e-10, abs_tol: float = 1e-12,
                           check_nmax: int = 8) -> SelectionSchemeResult:
    """Successive approximations ``f_0 = proj(0, F(., h))``,
    ``x_{n+1} = h + V(f_n)``, ``f_{n+1} = proj(f_n, F(., x_{n+1}))``.

    Every iterate is checked against the pointwise increment bound
    ``|f_n - f_{n-1}| <= alpha * beta_n^(1/p)`` and the trajectory increment
    bound; a violation raises :class:`LedgerViolation` with its witness.
    """
    grid, p = inst.grid, inst.p
    mids = grid.midpoints
    ledger = build_ledger(inst, eps, nmax, check_nmax=check_nmax)

    f = Selection(grid, inst.field.project_many(mids, inst.h.midvalues, np.zeros((grid.N, inst.dim))))
    gamma_sub = 0.5 * (ledger.gamma[:-1] + ledger.gamma[1:])
    f0p = np.linalg.norm(f.values, axis=1) ** p
    slack = gamma_sub + ledger.eps_n[0] - f0p
    if np.min(slack) <= 0:
        need = float(np.max(f0p - gamma_sub))
        new_eps = 2.0 * need * (1 + 1e-6) + 1e-12
        log.warning("initial selection exceeds the strict bound; enlarging eps from %g to %g", eps, new_eps)
        ledger = build_ledger(inst, max(new_eps, eps), nmax, check_nmax=check_nmax)
        ledger.eps_enlarged = True
        slack = gamma_sub + ledger.eps_n[0] - f0p
    ledger.f0_margin = float(np.min(slack))
    ledger.abs_tol = abs_tol

    alpha = inst.data.alpha.values
    alpha_sub = np.maximum(alpha[:-1], alpha[1:])
    x_prev = inst.h
    x = inst.h + volterra_apply(inst, f)
    n = 0
    while True:
        inc = sup_norm(x - x_prev)
        ledger.increments[n] = inc
        ledger.increment_bound[n] = ledger.increment_bound_for(n)
        if inc > ledger.increment_bound[n] * (1 + 1e-9) + abs_tol:
            raise LedgerViolation(f"trajectory increment bound fails at n={n}",
                                  {"n": n, "increment": inc, "bound": ledger.increment_bound[n]})
        if inc < tol or n >= nmax:
            break
        n += 1
        f_new = Selection(grid, inst.field.project_many(mids, x.midvalues, f.values))
        beta_n = ledger.beta(n)
        rhs = alpha_sub * np.maximum(beta_n[:-1], beta_n[1:]) ** (1 / p)
        margin = rhs - np.linalg.norm(f_new.values - f.values, axis=1)
        ledger.iii_margin[n] = margin
        j = int(np.argmin(margin))
        if margin[j] < -abs_tol:
            raise LedgerViolation(f"pointwise increment bound fails at n={n}, t={mids[j]:.6g}",
                                  {"n": n, "t": float(mids[j]), "margin": float(margin[j])})
        f = f_new
        x_prev, x = x, inst.h + volterra_apply(inst, f)
    residual = nemytskii_residual(inst, x, f).aggregate
    return SelectionSchemeResult(x, f, ledger, n, residual)


# ---------------------------------------------------------------------------
# periodic trajectories


class SmallnessError(ValueError):
    pass


@dataclass
class PeriodicReport:
    outer_iterations: int = 0
    steps: list = field(default_factory=list)  # |x_{k+1} - x_k|
    phi_norms: list = field(default_factory=list)
    R_bounds: list = field(default_factory=list)
    contraction_norm: float = float("nan")  # ||U(T)||
    converged: bool = False
    periodicity_defect: float = float("nan")
    residual: float = float("nan")

    @property
    def R_bound_ok(self) -> bool:
        return all(a <= b for a, b in zip(self.phi_norms, self.R_bounds))

    def to_dict(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "steps": list(map(float, self.steps)),
            "phi_norms": list(map(float, self.phi_norms)),
            "R_bounds": list(map(float, self.R_bounds)),
            "R_bound_ok": self.R_bound_ok,
            "contraction_norm": float(self.contraction_norm),
            "converged": self.converged,
            "periodicity_defect": float(self.periodicity_defect),
            "residual": float(self.residual),
        }


class PeriodicResult(NamedTuple):
    x0: np.ndarray
    x: Trajectory
    u: Selection
    report: PeriodicReport


def periodic_solve(A, F: SetField, grid: Grid, p: float = 1.0, tol: float = 1e-8,
                   maxouter: int = 200, inner_tol: float = 1e-12, x_seed=None,
                   R_rel_tol: float = 1e-3) -> PeriodicResult:
    """Fixed point of ``x -> U(T) x + V(u_x)(T)`` with ``U(t) = exp(-A t)``.

    ``u_x`` is the Picard solution for the inhomogeneity ``U(.) x``, warm-started
    from the previous outer iterate.  The returned trajectory
    ``U(t) x0 + V(u)(t)`` satisfies ``x(T) = x(0)`` up to the outer tolerance.
    """
    kernel = SemigroupKernel(A)
    d = kernel.dim
    UT = kernel.U(grid.T)
    nrm = float(np.linalg.norm(UT, 2))
    if nrm > 0.5:
        raise SmallnessError(f"||exp(-A T)|| = {nrm:.6g} exceeds 1/2")
    Ut = np.array([kernel.U(t) for t in grid.nodes])

    def h_of(x0):
        return Trajectory(grid, np.einsum("nij,j->ni", Ut, x0))

    x0 = np.zeros(d) if x_seed is None else np.atleast_1d(np.asarray(x_seed, dtype=float))
    inst = ProblemInstance(kernel, F, h_of(x0), p)
    kT = float(kernel_qnorms(kernel, grid, inst.q)[-1])
    alpha = inst.data.alpha.values
    beta = inst.data.beta.values
    report = PeriodicReport(contraction_norm=nrm)
    u = None

    def inner(x0, u):
        res = picard_solve(inst.with_h(h_of(x0)), u, tol=inner_tol, traj_tol=inner_tol, maxit=500)
        return res

    res = inner(x0, u)
    for k in range(1, maxouter + 1):
        u = res.u
        phi = res.x.values[-1] - UT @ x0  # V(u)(T)
        # |F(t, z)| <= beta(t) + alpha(t) |z| on the ball containing the solution
        radius = sup_norm(res.x)
        mu = beta + alpha * radius
        R = kT * float(_trap_upto(mu**p, grid.dt, grid.N) ** (1 / p))
        report.phi_norms.append(float(np.linalg.norm(phi)))
        report.R_bounds.append(R * (1 + R_rel_tol))
        x_new = UT @ x0 + phi
        step = float(np.linalg.norm(x_new - x0))
        report.steps.append(step)
        report.outer_iterations = k
        x0 = x_new
        res = inner(x0, u)
        if step <= tol:
            report.converged = True
            break
    report.periodicity_defect = float(np.linalg.norm(res.x.values[-1] - res.x.values[0]))
    report.residual = res.report.residual
    if report.converged and report.periodicity_defect > 10 * tol:
        raise RuntimeError(f"periodicity defect {report.periodicity_defect:.3e} exceeds 10*tol")
    if not report.converged:
        log.warning("periodic_solve: outer loop did not contract within %d iterations", maxouter)
    return PeriodicResult(x0, res.x, res.u, report)
