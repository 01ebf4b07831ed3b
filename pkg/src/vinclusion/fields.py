"""Set-valued right-hand sides ``F(t, x)`` and their data functions.

Built-in families have convex compact values that depend continuously on
``(t, x)``, so measurability of ``F(., x)`` and upper hemicontinuity of
``F(t, .)`` hold by construction and are not checked at runtime.  In R^d the
Hausdorff measure of noncompactness vanishes on bounded sets, so a
noncompactness estimate holds trivially with a zero modulus.

All families are evaluated in batches: ``t`` has shape ``(n,)`` and ``x``
shape ``(n, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convexsets import Ball, Box, ConvexRegion, DimensionMismatchError, Point, distance, farthest_norm, hausdorff
from .kernels import HypothesisVerdict, scalar_family
from .timebase import Grid, ScalarTable

__all__ = [
    "Coefficient",
    "coefficient",
    "SetField",
    "SingletonField",
    "AffineBoxField",
    "AffineBallField",
    "FieldData",
    "FieldLintReport",
    "field_eval",
    "derive_field_data",
    "lint_field",
]


class Coefficient:
    """Time-dependent array ``a(t)``: a sum of scalar families times constant arrays,
    or a node table interpolated linearly."""

    def __init__(self, terms=None, table=None, T=None, shape=None):
        if (terms is None) == (table is None):
            raise ValueError("give exactly one of terms or table")
        if terms is not None:
            self.terms = tuple((scalar_family(f), np.asarray(v, dtype=float)) for f, v in terms)
            shapes = {v.shape for _, v in self.terms}
            if len(shapes) != 1:
                raise ValueError("coefficient terms must share a shape")
            self.shape = next(iter(shapes))
            self.table = None
        else:
            tab = np.asarray(table, dtype=float)
            if tab.ndim < 1 or tab.shape[0] < 2 or T is None:
                raise ValueError("a coefficient table needs >= 2 node rows and a horizon T")
            if not np.all(np.isfinite(tab)):
                raise ValueError("coefficient table entries must be finite")
            self.table, self.T = tab, float(T)
            self.shape = tab.shape[1:]
            self.terms = None
        if shape is not None and tuple(self.shape) != tuple(shape):
            raise DimensionMismatchError(f"coefficient has shape {self.shape}, expected {tuple(shape)}")

    @classmethod
    def constant(cls, value) -> "Coefficient":
        return cls(terms=[("one", value)])

    @property
    def is_constant(self) -> bool:
        return self.terms is not None and all(f.name == "one" for f, _ in self.terms)

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.terms is not None:
            out = np.zeros(t.shape + tuple(self.shape))
            for f, v in self.terms:
                out += np.multiply.outer(f(t), v)
            return out
        n = self.table.shape[0] - 1
        pos = np.clip(t / self.T * n, 0, n)
        i = np.minimum(np.floor(pos).astype(int), n - 1)
        lam = (pos - i).reshape(t.shape + (1,) * len(self.shape))
        return (1 - lam) * self.table[i] + lam * self.table[i + 1]

    def to_dict(self) -> dict:
        if self.terms is not None:
            return {"terms": [{**f.to_dict(), "value": v.tolist()} for f, v in self.terms]}
        return {"table": self.table.tolist()}


def coefficient(spec, shape, T: float | None = None) -> Coefficient:
    """Coerce a constant, a ``{"terms": ...}``/``{"table": ...}`` dict or a Coefficient."""
    if isinstance(spec, Coefficient):
        c = spec
    elif isinstance(spec, dict):
        if "terms" in spec:
            c = Coefficient(terms=[(t, t["value"]) for t in spec["terms"]])
        elif "table" in spec:
            c = Coefficient(table=spec["table"], T=spec.get("T", T))
        else:
            raise ValueError(f"coefficient dict needs 'terms' or 'table', got {sorted(spec)}")
    else:
        v = np.asarray(spec, dtype=float)
        if v.shape != tuple(shape):
            v = np.broadcast_to(v, shape).copy()
        c = Coefficient.constant(v)
    if tuple(c.shape) != tuple(shape):
        raise DimensionMismatchError(f"coefficient has shape {c.shape}, expected {tuple(shape)}")
    return c


def _opnorms(C: np.ndarray) -> np.ndarray:
    if C.shape[-1] == 1 and C.shape[-2] == 1:
        return np.abs(C[..., 0, 0])
    return np.linalg.norm(C, ord=2, axis=(-2, -1))


class SetField:
    """Base class of convex-valued fields."""

    dim: int
    kind: str

    def _check(self, t, x):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.dim:
            raise DimensionMismatchError(f"state dimension {x.shape[-1]} != field dimension {self.dim}")
        return t, x

    # batch interface -------------------------------------------------
    def centers(self, t, x) -> np.ndarray:
        raise NotImplementedError

    def project_many(self, t, x, y) -> np.ndarray:
        raise NotImplementedError

    def extreme_many(self, t, x, e) -> np.ndarray:
        """Support points of ``F(t, x)`` in the directions ``e`` (rows)."""
        raise NotImplementedError

    def excess_many(self, t, x1, x2) -> np.ndarray:
        """Pointwise excess ``e(F(t, x1), F(t, x2))``.

        Values at equal ``t`` are translates of one another, so the excess is
        the distance between centres.
        """
        return np.linalg.norm(self.centers(t, x1) - self.centers(t, x2), axis=-1)

    def farthest_many(self, t, x) -> np.ndarray:
        raise NotImplementedError

    def alpha(self, t) -> np.ndarray:
        """Lipschitz modulus in ``x`` (Hausdorff metric)."""
        raise NotImplementedError

    def beta(self, t) -> np.ndarray:
        """Upper bound of ``sup{|y| : y in F(t, 0)}``."""
        raise NotImplementedError

    @property
    def x_independent(self) -> bool:
        return False

    # single-point interface ------------------------------------------
    def region(self, t: float, x) -> ConvexRegion:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(eq=False)
class SingletonField(SetField):
    """``F(t, x) = {f(t, x)}``.

    ``f`` maps ``(t: (n,), x: (n, d)) -> (n, d)`` and ``lipschitz`` maps ``t`` to
    the Lipschitz modulus of ``f(t, .)``.
    """

    f: Callable
    lipschitz: Callable
    dim: int
    spec: dict | None = None
    independent_of_x: bool = False
    kind: str = field(default="singleton", init=False)

    @classmethod
    def affine(cls, C, d=None, T: float | None = None) -> "SingletonField":
        """``f(t, x) = C(t) x + d(t)``."""
        n = _matrix_dim(C)
        Cc = coefficient(C, (n, n), T)
        dc = coefficient(np.zeros(n) if d is None else d, (n,), T)
        spec = {"family": "affine", "C": Cc.to_dict(), "d": dc.to_dict()}

        def f(t, x):
            return np.einsum("nij,nj->ni", Cc(t), x) + dc(t)

        return cls(f, lambda t: _opnorms(Cc(t)), n, spec, independent_of_x=_is_zero(Cc))

    @classmethod
    def constant(cls, value) -> "SingletonField":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        out = cls.affine(np.zeros((v.size, v.size)), v)
        out.spec = {"family": "constant", "value": v.tolist()}
        return out

    @classmethod
    def zero(cls, dim: int) -> "SingletonField":
        out = cls.constant(np.zeros(dim))
        out.spec = {"family": "zero", "dim": dim}
        return out

    @classmethod
    def linear(cls, lam) -> "SingletonField":
        """``f(t, x) = lam * x`` (scalar ``lam`` means one dimension) or ``L x``."""
        L = np.atleast_2d(np.asarray(lam, dtype=float))
        out = cls.affine(L)
        out.spec = {"family": "linear", "matrix": L.tolist()}
        return out

    @classmethod
    def sine(cls, amplitude: float, dim: int = 1) -> "SingletonField":
        """``f(t, x) = amplitude * sin(x)`` componentwise."""
        a = float(amplitude)
        return cls(lambda t, x: a * np.sin(x), lambda t: np.full(np.shape(np.atleast_1d(t)), abs(a)),
                   dim, {"family": "sine", "amplitude": a, "dim": dim})

    def centers(self, t, x):
        t, x = self._check(t, x)
        return np.asarray(self.f(t, x), dtype=float).reshape(x.shape)

    def project_many(self, t, x, y):
        return self.centers(t, x)

    def extreme_many(self, t, x, e):
        return self.centers(t, x)

    def farthest_many(self, t, x):
        return np.linalg.norm(self.centers(t, x), axis=-1)

    def alpha(self, t):
        return np.asarray(self.lipschitz(np.atleast_1d(np.asarray(t, float))), dtype=float)

    def beta(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        return self.farthest_many(t, np.zeros((t.size, self.dim)))

    @property
    def x_independent(self) -> bool:
        return self.independent_of_x

    def region(self, t, x):
        return Point(self.centers(t, x)[0])

    def to_dict(self) -> dict:
        if self.spec is None:
            raise ValueError("this singleton field wraps an unregistered callable")
        return {"variant": "singleton", **self.spec}


class _AffineSetField(SetField):
    """``F(t, x) = C(t) x + d(t) + K(t)`` for a centred convex body ``K(t)``."""

    def __init__(self, C, d, size, T: float | None = None):
        n = _matrix_dim(C)
        self.dim = n
        self.C = coefficient(C, (n, n), T)
        self.d = coefficient(np.zeros(n) if d is None else d, (n,), T)
        self.size = coefficient(size, self._size_shape(), T)
        probe = self.size(np.linspace(0, 1, 3))
        if np.any(probe < 0):
            raise ValueError("set sizes must be nonnegative")

    def centers(self, t, x):
        t, x = self._check(t, x)
        return np.einsum("nij,nj->ni", self.C(t), x) + self.d(t)

    def alpha(self, t):
        return _opnorms(self.C(np.atleast_1d(np.asarray(t, float))))

    @property
    def x_independent(self) -> bool:
        return _is_zero(self.C)

    def to_dict(self) -> dict:
        return {"variant": self.kind, "C": self.C.to_dict(), "d": self.d.to_dict(),
                self._size_key: self.size.to_dict()}


def _matrix_dim(C) -> int:
    if isinstance(C, Coefficient):
        return C.shape[0]
    if isinstance(C, dict):
        if "terms" in C:
            return np.atleast_2d(np.asarray(C["terms"][0]["value"])).shape[0]
        return np.asarray(C["table"]).shape[1]
    return np.atleast_2d(np.asarray(C, dtype=float)).shape[0]


def _is_zero(c: Coefficient) -> bool:
    return c.terms is not None and all(np.all(v == 0) for _, v in c.terms)


class AffineBoxField(_AffineSetField):
    """``F(t, x) = Box(C(t) x + d(t), r(t))``."""

    kind = "affine_box"
    _size_key = "r"

    def __init__(self, C, d=None, r=0.0, T: float | None = None):
        super().__init__(C, d, r, T)

    def _size_shape(self):
        return (self.dim,)

    def project_many(self, t, x, y):
        c = self.centers(t, x)
        r = self.size(np.atleast_1d(t))
        return np.clip(y, c - r, c + r)

    def extreme_many(self, t, x, e):
        return self.centers(t, x) + np.sign(e) * self.size(np.atleast_1d(t))

    def farthest_many(self, t, x):
        c = self.centers(t, x)
        r = self.size(np.atleast_1d(t))
        return np.linalg.norm(np.abs(c) + r, axis=-1)

    def beta(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        return np.linalg.norm(self.d(t), axis=-1) + np.linalg.norm(self.size(t), axis=-1)

    def region(self, t, x):
        return Box(self.centers(t, x)[0], self.size(np.atleast_1d(t))[0])


class AffineBallField(_AffineSetField):
    """``F(t, x) = Ball(C(t) x + d(t), rho(t))``."""

    kind = "affine_ball"
    _size_key = "rho"

    def __init__(self, C, d=None, rho=0.0, T: float | None = None):
        super().__init__(C, d, rho, T)

    def _size_shape(self):
        return ()

    def project_many(self, t, x, y):
        c = self.centers(t, x)
        rho = self.size(np.atleast_1d(t))
        v = y - c
        n = np.linalg.norm(v, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(n > rho, rho / n, 1.0)
        return c + scale[:, None] * v

    def extreme_many(self, t, x, e):
        e = np.asarray(e, dtype=float)
        n = np.linalg.norm(e, axis=-1, keepdims=True)
        u = np.divide(e, n, out=np.zeros_like(e), where=n > 0)
        return self.centers(t, x) + self.size(np.atleast_1d(t))[:, None] * u

    def farthest_many(self, t, x):
        return np.linalg.norm(self.centers(t, x), axis=-1) + self.size(np.atleast_1d(t))

    def beta(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        return np.linalg.norm(self.d(t), axis=-1) + self.size(t)

    def region(self, t, x):
        return Ball(self.centers(t, x)[0], float(self.size(np.atleast_1d(t))[0]))


def field_eval(F: SetField, t: float, x) -> ConvexRegion:
    """The convex value ``F(t, x)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (F.dim,):
        raise DimensionMismatchError(f"state of shape {x.shape} for a field of dimension {F.dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")
    return F.region(float(t), x)


@dataclass(frozen=True)
class FieldData:
    """Lipschitz modulus ``alpha``, bound ``beta`` at the origin and growth ``c``."""

    alpha: ScalarTable
    beta: ScalarTable
    c: ScalarTable

    def __post_init__(self):
        for name in ("alpha", "beta", "c"):
            tab = getattr(self, name)
            if np.any(tab.values < 0):
                raise ValueError(f"{name} must be nonnegative")
        if not (self.alpha.grid == self.beta.grid == self.c.grid):
            raise ValueError("field data tables must share a grid")


def derive_field_data(F: SetField, grid: Grid) -> FieldData:
    """Tabulate certified ``alpha``, ``beta`` and ``c = max(alpha, beta)`` on the nodes."""
    if not isinstance(F, SetField):
        raise TypeError(f"unsupported field type {type(F).__name__}")
    t = grid.nodes
    a = F.alpha(t)
    b = F.beta(t)
    return FieldData(
        ScalarTable(grid, a, nonnegative=True),
        ScalarTable(grid, b, nonnegative=True),
        ScalarTable(grid, np.maximum(a, b), nonnegative=True),
    )


@dataclass
class FieldLintReport:
    verdicts: dict
    samples: int
    seed: int

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "samples": self.samples, "seed": self.seed,
                "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()}}


def lint_field(F: SetField, data: FieldData, grid: Grid, seed: int = 0, samples: int = 200,
               scale: float = 10.0, rel_tol: float = 1e-9) -> FieldLintReport:
    """Sampled checks of the Lipschitz, origin and growth bounds claimed by ``data``."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, grid.N + 1, size=samples)
    xs = scale * rng.standard_normal((samples, F.dim))
    ys = scale * rng.standard_normal((samples, F.dim))
    worst = {"H3": (-np.inf, None), "H4": (-np.inf, None), "F4": (-np.inf, None)}
    zero = np.zeros(F.dim)
    for i, x, y in zip(idx, xs, ys):
        t = float(grid.nodes[i])
        a, b, c = data.alpha.values[i], data.beta.values[i], data.c.values[i]
        Fx, Fy = F.region(t, x), F.region(t, y)
        dh = hausdorff(Fx, Fy)
        gap = dh - (a * np.linalg.norm(x - y) * (1 + rel_tol) + 1e-12)
        if gap > worst["H3"][0]:
            worst["H3"] = (gap, {"t": t, "x": x.tolist(), "y": y.tolist(), "hausdorff": dh,
                                 "bound": float(a * np.linalg.norm(x - y))})
        d0 = distance(zero, F.region(t, zero))
        gap = d0 - (b * (1 + rel_tol) + 1e-12)
        if gap > worst["H4"][0]:
            worst["H4"] = (gap, {"t": t, "distance": d0, "beta": float(b)})
        fn = farthest_norm(Fx)
        bound = c * (1 + np.linalg.norm(x))
        gap = fn - (bound * (1 + rel_tol) + 1e-12)
        if gap > worst["F4"][0]:
            worst["F4"] = (gap, {"t": t, "x": x.tolist(), "farthest_norm": fn, "bound": float(bound)})
    verdicts = {}
    for name, (gap, wit) in worst.items():
        ok = bool(gap <= 0)
        verdicts[name] = HypothesisVerdict(name, ok, "sample-consistent", None if ok else wit,
                                           {"worst_gap": float(gap)})
    return FieldLintReport(verdicts, samples, seed)
