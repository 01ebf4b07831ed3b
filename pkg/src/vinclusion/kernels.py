"""Matrix-valued Volterra kernels ``k(t, s)`` on ``0 <= s <= t <= T``.

Three variants are available:

* :class:`ConstantKernel` -- ``k(t, s) = K``.
* :class:`SeparableKernel` -- ``k(t, s) = sum_r a_r(t) b_r(s) K_r`` with
  ``a_r, b_r`` drawn from a small registry of closed-form scalar families.
* :class:`SemigroupKernel` -- ``k(t, s) = exp(-A (t - s))``.

The matrix exponential uses scaling and squaring with a diagonal Pade
approximant of fixed order ``PADE_ORDER``; the argument is halved until its
1-norm is at most ``SQUARING_THRESHOLD``.  With both fixed, results are
reproducible bit-for-bit for a given platform rounding mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .timebase import Grid, ScalarTable, conjugate_exponent

__all__ = [
    "PADE_ORDER",
    "SQUARING_THRESHOLD",
    "expm",
    "ScalarFamily",
    "scalar_family",
    "SCALAR_FAMILIES",
    "KernelOperator",
    "ConstantKernel",
    "SeparableKernel",
    "SemigroupKernel",
    "OutsideTriangleError",
    "kernel_qnorm",
    "kernel_qnorms",
    "big_M",
    "HypothesisVerdict",
    "KernelLintReport",
    "lint_kernel",
    "derive_kernel_mu",
]

PADE_ORDER = 8
SQUARING_THRESHOLD = 0.5

_PADE_COEFFS = tuple(
    math.factorial(2 * PADE_ORDER - k) * math.factorial(PADE_ORDER)
    / (math.factorial(2 * PADE_ORDER) * math.factorial(k) * math.factorial(PADE_ORDER - k))
    for k in range(PADE_ORDER + 1)
)


def expm(X) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a (8, 8) Pade approximant."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    norm = np.max(np.sum(np.abs(X), axis=0)) if X.size else 0.0
    s = 0
    if norm > SQUARING_THRESHOLD:
        s = int(math.ceil(math.log2(norm / SQUARING_THRESHOLD)))
    Xs = X / (2.0**s)
    n = X.shape[0]
    I = np.eye(n)
    P = np.zeros_like(Xs)
    Q = np.zeros_like(Xs)
    Xk = I
    for k, c in enumerate(_PADE_COEFFS):
        if k:
            Xk = Xk @ Xs
        P = P + c * Xk
        Q = Q + ((-1) ** k) * c * Xk
    E = np.linalg.solve(Q, P)
    for _ in range(s):
        E = E @ E
    return E


@dataclass(frozen=True)
class ScalarFamily:
    """Closed-form scalar function of time, identified by name and parameters."""

    name: str
    params: tuple = ()

    def __call__(self, t):
        f = SCALAR_FAMILIES[self.name]
        return f(np.asarray(t, dtype=float), *self.params)

    def to_dict(self) -> dict:
        keys = _FAMILY_PARAMS[self.name]
        return {"family": self.name, **dict(zip(keys, self.params))}


SCALAR_FAMILIES: dict[str, Callable] = {
    "one": lambda t: np.ones_like(t),
    "t": lambda t: t,
    "pow": lambda t, a: t**a,
    "exp": lambda t, rate: np.exp(rate * t),
    "sin": lambda t, omega: np.sin(omega * t),
    "cos": lambda t, omega: np.cos(omega * t),
}
_FAMILY_PARAMS = {"one": (), "t": (), "pow": ("a",), "exp": ("rate",), "sin": ("omega",), "cos": ("omega",)}


def scalar_family(spec) -> ScalarFamily:
    """Build a :class:`ScalarFamily` from a name or a ``{"family": ..., **params}`` dict."""
    if isinstance(spec, ScalarFamily):
        return spec
    if isinstance(spec, str):
        spec = {"family": spec}
    name = spec["family"]
    if name not in SCALAR_FAMILIES:
        raise ValueError(f"unknown scalar family {name!r}; known: {sorted(SCALAR_FAMILIES)}")
    params = tuple(float(spec[k]) for k in _FAMILY_PARAMS[name])
    return ScalarFamily(name, params)


class OutsideTriangleError(ValueError):
    """Raised for kernel arguments outside ``0 <= s <= t``."""


class KernelOperator:
    """Base class; subclasses implement :meth:`_eval_many`."""

    dim: int

    def _eval_many(self, t: np.ndarray, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval(self, t: float, s: float) -> np.ndarray:
        if not (0.0 <= s <= t) or not np.isfinite(t):
            raise OutsideTriangleError(f"(t, s) = ({t!r}, {s!r}) is outside 0 <= s <= t")
        return self._eval_many(np.array([t], float), np.array([s], float))[0]

    def eval_many(self, t, s) -> np.ndarray:
        """Broadcast evaluation; returns shape ``broadcast(t, s).shape + (d, d)``.

        No triangle check: callers mask entries with ``s > t``.
        """
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        out = self._eval_many(t.reshape(-1), s.reshape(-1))
        return out.reshape(t.shape + (self.dim, self.dim))

    def volterra_table(self, grid: Grid) -> np.ndarray:
        """``K[i, j] = k(t_i, mid_j)`` for ``j < i`` and zero otherwise."""
        cache = self.__dict__.setdefault("_vt_cache", {})
        if grid not in cache:
            K = self.eval_many(grid.nodes[:, None], grid.midpoints[None, :])
            mask = np.arange(grid.N)[None, :] < np.arange(grid.N + 1)[:, None]
            K = np.where(mask[:, :, None, None], K, 0.0)
            K.flags.writeable = False
            cache[grid] = K
        return cache[grid]

    def node_table(self, grid: Grid) -> np.ndarray:
        """``k(t_i, s_j)`` on all node pairs (entries with ``j > i`` are not meaningful)."""
        return self.eval_many(grid.nodes[:, None], grid.nodes[None, :])


@dataclass(frozen=True, eq=False)
class ConstantKernel(KernelOperator):
    matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError("kernel matrix must be square")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def _eval_many(self, t, s):
        return np.broadcast_to(self.matrix, t.shape + self.matrix.shape).copy()


@dataclass(frozen=True, eq=False)
class SeparableKernel(KernelOperator):
    """``k(t, s) = sum_r a_r(t) * b_r(s) * K_r``."""

    terms: tuple  # of (ScalarFamily, ScalarFamily, matrix)

    def __post_init__(self):
        if not self.terms:
            raise ValueError("separable kernel needs at least one term")
        terms = []
        for a, b, m in self.terms:
            m = np.atleast_2d(np.asarray(m, dtype=float))
            terms.append((scalar_family(a), scalar_family(b), m))
        dims = {m.shape for _, _, m in terms}
        if len(dims) != 1 or next(iter(dims))[0] != next(iter(dims))[1]:
            raise ValueError("separable kernel term matrices must be square and equally sized")
        object.__setattr__(self, "terms", tuple(terms))

    @property
    def dim(self) -> int:
        return self.terms[0][2].shape[0]

    def _eval_many(self, t, s):
        out = np.zeros(t.shape + (self.dim, self.dim))
        for a, b, m in self.terms:
            out += (a(t) * b(s))[:, None, None] * m
        return out


@dataclass(frozen=True, eq=False)
class SemigroupKernel(KernelOperator):
    """``k(t, s) = U(t - s)`` with ``U(tau) = exp(-A tau)``."""

    generator: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.generator, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("generator must be square")
        object.__setattr__(self, "generator", A)

    @property
    def dim(self) -> int:
        return self.generator.shape[0]

    def U(self, tau: float) -> np.ndarray:
        key = float(tau)
        if key not in self._cache:
            self._cache[key] = expm(-self.generator * key)
        return self._cache[key]

    def _eval_many(self, t, s):
        tau = t - s
        uniq, inv = np.unique(tau, return_inverse=True)
        mats = np.array([self.U(x) for x in uniq]).reshape(len(uniq), self.dim, self.dim)
        return mats[inv]


def _opnorm(mats: np.ndarray) -> np.ndarray:
    """Spectral norm of each trailing ``(d, d)`` block."""
    if mats.shape[-1] == 1:
        return np.abs(mats[..., 0, 0])
    return np.linalg.norm(mats, ord=2, axis=(-2, -1))


def kernel_qnorms(k: KernelOperator, grid: Grid, q: float) -> np.ndarray:
    """``||k(t_i, .)||_{L^q[0, t_i]}`` at every node (trapezoid; max for ``q = inf``)."""
    if not q > 1:
        raise ValueError(f"q must lie in (1, inf], got {q!r}")
    norms = _opnorm(k.node_table(grid))
    N = grid.N
    out = np.zeros(N + 1)
    lower = np.tril(np.ones((N + 1, N + 1), dtype=bool))
    if np.isinf(q):
        out = np.max(np.where(lower, norms, 0.0), axis=1)
    else:
        vals = np.where(lower, norms**q, 0.0)
        for i in range(1, N + 1):
            v = vals[i, : i + 1]
            out[i] = (grid.dt * (v.sum() - 0.5 * (v[0] + v[-1]))) ** (1.0 / q)
    return out


def kernel_qnorm(k: KernelOperator, t: float, q: float, grid: Grid) -> float:
    i = grid.node_index(t)
    return float(kernel_qnorms(k, grid, q)[i])


def big_M(k: KernelOperator, p: float, grid: Grid) -> float:
    """``max(1, sup_t ||k(t, .)||_q^p)`` over grid nodes."""
    q = conjugate_exponent(p)
    return float(max(1.0, np.max(kernel_qnorms(k, grid, q)) ** p))


@dataclass
class HypothesisVerdict:
    name: str
    passed: bool
    label: str  # "verified" or "sample-consistent"
    witness: dict | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "label": self.label,
                "witness": self.witness, "detail": self.detail}


@dataclass
class KernelLintReport:
    verdicts: dict
    sup_qnorm: float
    q: float

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "q": self.q, "sup_qnorm": self.sup_qnorm,
                "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()}}


def _fd_time_derivative_norms(k: KernelOperator, grid: Grid) -> np.ndarray:
    """Difference-quotient norms of ``d/dt k(t_i, s_j)``; NaN where undefined.

    Central differences at step ``dt`` where both neighbours stay in the
    triangle, one-sided otherwise.
    """
    N, dt = grid.N, grid.dt
    Kn = k.node_table(grid)
    D = np.full((N + 1, N + 1), np.nan)
    for i in range(N):
        if i:
            j = np.arange(i)
            D[i, j] = _opnorm((Kn[i + 1, j] - Kn[i - 1, j]) / (2 * dt))
        D[i, i] = _opnorm((Kn[i + 1, i] - Kn[i, i]) / dt)
    j = np.arange(N)
    D[N, j] = _opnorm((Kn[N, j] - Kn[N - 1, j]) / dt)
    return D


def derive_kernel_mu(k: KernelOperator, grid: Grid) -> ScalarTable:
    """Smallest node table consistent with the sampled time-derivative bound."""
    D = _fd_time_derivative_norms(k, grid)
    mu = np.nanmax(np.where(np.isnan(D), -np.inf, D), axis=0)
    mu = np.where(np.isfinite(mu), mu, 0.0)
    return ScalarTable(grid, np.maximum(mu, 0.0), nonnegative=True)


def _moduli(k: KernelOperator, grid: Grid, q: float):
    """Discrete moduli of continuity of ``s -> k(t, s)`` and ``t -> k(t, .)``.

    Returns ``(w2, (t, s), w6, t)`` with the location of each maximum.
    """
    Kn = k.node_table(grid)
    nodes = grid.nodes
    w2, at2 = 0.0, (0.0, 0.0)
    w6, at6 = 0.0, 0.0
    for i in range(1, grid.N + 1):
        diffs = _opnorm(Kn[i, 1 : i + 1] - Kn[i, :i])
        j = int(np.argmax(diffs))
        if diffs[j] > w2:
            w2, at2 = float(diffs[j]), (float(nodes[i]), float(nodes[j]))
        # t-continuity compared on the common domain [0, t_{i-1}]
        diffs = _opnorm(Kn[i, :i] - Kn[i - 1, :i])
        if np.isinf(q):
            v = float(np.max(diffs))
        elif i == 1:
            v = 0.0
        else:
            f = diffs**q
            v = float((grid.dt * (f.sum() - 0.5 * (f[0] + f[-1]))) ** (1.0 / q))
        if v > w6:
            w6, at6 = v, float(nodes[i])
    return w2, at2, w6, at6


def lint_kernel(k: KernelOperator, grid: Grid, mu: ScalarTable, q: float = np.inf,
                rel_tol: float = 1e-9, cond_limit: float = 1e12) -> KernelLintReport:
    """Sampled checks of the kernel hypotheses (continuity, invertibility, derivative bound)."""
    verdicts = {}

    D = _fd_time_derivative_norms(k, grid)
    allowed = mu.values[None, :] * (1 + rel_tol) + 1e-12
    gap = np.where(np.isnan(D), -np.inf, D - allowed)
    i, j = np.unravel_index(np.argmax(gap), gap.shape)
    ok = bool(gap[i, j] <= 0)
    verdicts["K4"] = HypothesisVerdict(
        "K4", ok, "sample-consistent",
        None if ok else {"t": float(grid.nodes[i]), "s": float(grid.nodes[j]),
                         "derivative_norm": float(D[i, j]), "mu": float(mu.values[j])},
        {"max_derivative_norm": float(np.nanmax(D)) if np.any(~np.isnan(D)) else 0.0},
    )

    diag = k.eval_many(grid.nodes, grid.nodes)
    sv = np.linalg.svd(diag, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(sv[:, -1] > 0, sv[:, 0] / sv[:, -1], np.inf)
    worst = int(np.argmax(cond))
    ok = bool(np.all(np.isfinite(cond)) and cond[worst] < cond_limit)
    verdicts["K3"] = HypothesisVerdict(
        "K3", ok, "sample-consistent",
        None if ok else {"t": float(grid.nodes[worst]), "s": float(grid.nodes[worst]),
                         "condition_number": float(cond[worst])},
        {"max_condition_number": float(cond[worst])},
    )

    w2c, at2, w6c, at6 = _moduli(k, grid, q)
    w2f, _, w6f, _ = _moduli(k, grid.refine(2), q)
    for name, c, f, where in (("K2", w2c, w2f, at2), ("K6", w6c, w6f, (at6, None))):
        ok = bool(f <= c * (1 + rel_tol) + 1e-14)
        verdicts[name] = HypothesisVerdict(
            name, ok, "sample-consistent",
            None if ok else {"t": where[0], "s": where[1], "modulus_N": c, "modulus_2N": f},
            {"modulus_N": c, "modulus_2N": f},
        )

    sup_q = float(np.max(kernel_qnorms(k, grid, q)))
    return KernelLintReport(verdicts, sup_q, q)
