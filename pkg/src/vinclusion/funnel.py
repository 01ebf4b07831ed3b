"""Sampling the solution set, envelope oracles and tube projections.

Funnel samples are extremal solutions: every seed is a fixed pattern of unit
directions, one per subinterval, and the Picard iteration keeps choosing the
support point of ``F`` in that direction.  The first two seeds use a single
block with opposite directions, so for scalar interval fields they trace the
upper and lower envelopes.  Further seeds switch direction on dyadic blocks of
growing count, which fills the interior of the funnel.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .convexsets import Ball, Box, ConvexRegion, Point, Segment, box_hull, hausdorff, project, support
from .fields import SingletonField
from .operators import ProblemInstance, nemytskii_residual
from .solvers import picard_solve, single_valued_solve
from .timebase import Grid, GridMismatchError, Selection, Trajectory

__all__ = [
    "BangBangSeed",
    "bang_bang_directions",
    "bang_bang_seeds",
    "FunnelMember",
    "FunnelSample",
    "sample_funnel",
    "OracleError",
    "scalar_envelope_oracle",
    "enumerate_reachable",
    "usc_probe",
    "Tube",
    "tube_project",
    "step_multifunction",
    "step_distance",
]


# ---------------------------------------------------------------------------
# seeds


@dataclass(frozen=True)
class BangBangSeed:
    seed_id: int
    blocks: int
    directions: np.ndarray  # (N, d) unit directions


def _dyadic_levels(N: int) -> int:
    return int(math.log2(N)) + 1


def bang_bang_directions(grid: Grid, dim: int, K: int, rng_seed: int = 0, block_length: int | None = None,
                         ball: bool = False) -> list[BangBangSeed]:
    """Direction patterns for ``K`` extremal seeds.

    Seeds come in antithetic pairs ``(e, -e)``.  With ``block_length=None`` the
    pair ``i`` uses ``2^(i mod L)`` blocks, ``L`` being the number of dyadic
    levels of the grid; otherwise every seed uses blocks of ``block_length``
    subintervals.  Box fields get random sign vectors, ball fields random unit
    vectors.  Each seed id draws from its own child generator, so a seed does
    not depend on ``K``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    N = grid.N
    levels = _dyadic_levels(N)
    children = np.random.SeedSequence(rng_seed).spawn((K + 1) // 2)
    out = []
    for k in range(K):
        pair = k // 2
        if block_length is None:
            blocks = min(N, 2 ** (pair % levels))
        else:
            if block_length < 1:
                raise ValueError("block_length must be >= 1")
            blocks = math.ceil(N / block_length)
        rng = np.random.default_rng(children[pair])
        if ball:
            e = rng.standard_normal((blocks, dim))
            e /= np.linalg.norm(e, axis=1, keepdims=True)
        else:
            e = rng.choice([-1.0, 1.0], size=(blocks, dim))
        if k % 2:
            e = -e
        owner = np.minimum(np.arange(N) * blocks // N, blocks - 1)
        out.append(BangBangSeed(k, blocks, e[owner]))
    return out


def _is_ball(inst: ProblemInstance) -> bool:
    return inst.field.kind == "affine_ball"


def bang_bang_seeds(inst: ProblemInstance, K: int, rng_seed: int = 0,
                    block_length: int | None = None) -> list[Selection]:
    """``K`` selections taking extreme points of ``F(m_j, h(m_j))``."""
    grid = inst.grid
    seeds = bang_bang_directions(grid, inst.dim, K, rng_seed, block_length, _is_ball(inst))
    mids, hm = grid.midpoints, inst.h.midvalues
    return [Selection(grid, inst.field.extreme_many(mids, hm, s.directions)) for s in seeds]


# ---------------------------------------------------------------------------
# sampling


class FunnelMember(NamedTuple):
    seed_id: int
    u: Selection
    x: Trajectory
    residual: float


@dataclass
class FunnelSample:
    grid: Grid
    members: list = field(default_factory=list)
    failed: dict = field(default_factory=dict)  # seed id -> final increment

    @property
    def trajectories(self) -> np.ndarray:
        """Array ``(K, N + 1, d)`` of converged trajectories, ordered by seed id."""
        return np.stack([m.x.values for m in self.members])

    @property
    def lower(self) -> np.ndarray:
        return self.trajectories.min(axis=0)

    @property
    def upper(self) -> np.ndarray:
        return self.trajectories.max(axis=0)

    @property
    def centroid(self) -> np.ndarray:
        return self.trajectories.mean(axis=0)

    @property
    def max_residual(self) -> float:
        return max(m.residual for m in self.members)

    def to_dict(self) -> dict:
        return {
            "converged": [m.seed_id for m in self.members],
            "failed": {int(k): float(v) for k, v in self.failed.items()},
            "max_residual": self.max_residual,
        }


def sample_funnel(inst: ProblemInstance, K: int = 32, rng_seed: int = 0, tol: float = 1e-10,
                  maxit: int = 200, block_length: int | None = None, jobs: int = 1) -> FunnelSample:
    """Extremal solutions from ``K`` bang-bang seeds.

    Seeds that do not converge are recorded in ``failed``; a
    :class:`RuntimeError` is raised only when none converges.  With ``jobs > 1``
    the seeds run in a thread pool and are merged by seed id.
    """
    grid = inst.grid
    seeds = bang_bang_directions(grid, inst.dim, K, rng_seed, block_length, _is_ball(inst))
    mids, hm = grid.midpoints, inst.h.midvalues

    def run(seed: BangBangSeed):
        u0 = Selection(grid, inst.field.extreme_many(mids, hm, seed.directions))
        return picard_solve(inst, u0, tol=tol, maxit=maxit, traj_tol=tol, directions=seed.directions)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]

    sample = FunnelSample(grid)
    for seed, res in zip(seeds, results):
        if res.report.converged:
            resid = nemytskii_residual(inst, res.x, res.u).aggregate
            sample.members.append(FunnelMember(seed.seed_id, res.u, res.x, resid))
        else:
            sample.failed[seed.seed_id] = res.report.increments[-1]
    if not sample.members:
        raise RuntimeError(f"no funnel seed converged out of {K}")
    return sample


# ---------------------------------------------------------------------------
# scalar oracles


class OracleError(ValueError):
    pass


def _check_scalar_preconditions(inst: ProblemInstance, samples: int = 64) -> None:
    if inst.dim != 1:
        raise OracleError("envelope oracle needs a scalar problem")
    K = inst.kernel.volterra_table(inst.grid)
    if np.min(K) < 0:
        i, j = np.unravel_index(int(np.argmin(K[..., 0, 0])), K.shape[:2])
        raise OracleError(f"kernel is negative at (t, s) = ({inst.grid.nodes[i]:.6g}, "
                          f"{inst.grid.midpoints[j]:.6g})")
    # endpoint monotonicity in x, checked on a sample around the range of h
    span = 1.0 + float(np.max(np.abs(inst.h.values)))
    xs = np.linspace(-10 * span, 10 * span, samples)
    for t in inst.grid.midpoints[:: max(1, inst.grid.N // 16)]:
        tt = np.full(samples, t)
        for s in (-1.0, 1.0):
            ends = inst.field.extreme_many(tt, xs[:, None], np.full((samples, 1), s))[:, 0]
            if np.any(np.diff(ends) < -1e-12 * (1 + np.abs(ends[1:]))):
                raise OracleError(f"endpoint of F(t, .) is not monotone in x at t = {t:.6g}")


def _endpoint_field(inst: ProblemInstance, sign: float) -> SingletonField:
    F = inst.field

    def f(t, x):
        return F.extreme_many(t, x, np.full(np.shape(x), sign))

    return SingletonField(f, F.alpha, 1)


def scalar_envelope_oracle(inst: ProblemInstance, tol: float = 1e-12) -> tuple[Trajectory, Trajectory]:
    """Envelope ``(x_min, x_max)`` of a scalar funnel.

    Solves the single-valued equations with the lower and upper endpoints of
    ``F``.  Requires a nonnegative kernel and endpoints nondecreasing in ``x``;
    both are checked and an :class:`OracleError` names the failure.
    """
    _check_scalar_preconditions(inst)
    out = []
    for sign in (-1.0, 1.0):
        sub = ProblemInstance(inst.kernel, _endpoint_field(inst, sign), inst.h, inst.p, inst.data, inst.mu)
        out.append(single_valued_solve(sub, tol=tol).x)
    return out[0], out[1]


def _march(inst: ProblemInstance, signs, iters: int = 200, tol: float = 1e-15) -> np.ndarray:
    """Forward solve of the midpoint scheme for one sign pattern.

    Step ``j`` solves ``x_{j+1} = h_{j+1} + dt sum_{l<=j} k(t_{j+1}, m_l) w_l``
    where ``w_j`` is the extreme point of ``F(m_j, (x_j + x_{j+1})/2)`` in the
    direction ``signs[j]``; the implicit step is a local fixed-point iteration.
    """
    grid = inst.grid
    t, m, dt = grid.nodes, grid.midpoints, grid.dt
    h = inst.h.values[:, 0]
    k = inst.kernel
    x = np.empty(grid.N + 1)
    w = np.empty(grid.N)
    x[0] = h[0]
    for j in range(grid.N):
        known = h[j + 1] + dt * sum(float(k.eval(t[j + 1], m[l])[0, 0]) * w[l] for l in range(j))
        kjj = dt * float(k.eval(t[j + 1], m[j])[0, 0])
        y = x[j]
        for _ in range(iters):
            S = inst.field.region(m[j], [0.5 * (x[j] + y)])
            wj = signs[j] * support(S, [signs[j]])
            y_new = known + kjj * wj
            if abs(y_new - y) <= tol * (1 + abs(y)):
                y = y_new
                break
            y = y_new
        w[j] = wj
        x[j + 1] = y
    return x


def enumerate_reachable(inst: ProblemInstance, max_N: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Node-wise min and max over all ``2^N`` extremal sign patterns (scalar, small ``N``)."""
    if inst.dim != 1:
        raise OracleError("enumeration needs a scalar problem")
    if inst.grid.N > max_N:
        raise OracleError(f"N = {inst.grid.N} is too large for exhaustive enumeration (max {max_N})")
    xs = np.array([_march(inst, np.array(s)) for s in itertools.product((-1.0, 1.0), repeat=inst.grid.N)])
    return xs.min(axis=0), xs.max(axis=0)


# ---------------------------------------------------------------------------
# upper semicontinuity


def usc_probe(inst: ProblemInstance, h1: Trajectory, h2: Trajectory, K: int = 16, rng_seed: int = 0,
              tol: float = 1e-10) -> float:
    """``max_{x in S(h1)} min_{y in S(h2)} ||x - y||_sup`` over funnel samples with shared seeds."""
    if h1.grid != inst.grid or h2.grid != inst.grid:
        raise GridMismatchError("inhomogeneities must share the instance grid")
    X1 = sample_funnel(inst.with_h(h1), K, rng_seed, tol).trajectories
    X2 = sample_funnel(inst.with_h(h2), K, rng_seed, tol).trajectories
    if len(X1) == 0 or len(X2) == 0:
        raise ValueError("empty funnel sample")
    d = np.linalg.norm(X1[:, None] - X2[None, :], axis=-1).max(axis=-1)
    return float(d.min(axis=1).max())


# ---------------------------------------------------------------------------
# tubes and step multifunctions


def _interp_region(a: ConvexRegion, b: ConvexRegion, lam: float) -> ConvexRegion:
    if type(a) is not type(b):
        raise TypeError("tube slices must share one region variant")
    mix = lambda u, v: (1 - lam) * u + lam * v  # noqa: E731
    if isinstance(a, Point):
        return Point(mix(a.c, b.c))
    if isinstance(a, Ball):
        return Ball(mix(a.c, b.c), mix(a.radius, b.radius))
    if isinstance(a, Box):
        return Box(mix(a.c, b.c), mix(a.half_widths, b.half_widths))
    if isinstance(a, Segment):
        return Segment(mix(a.a, b.a), mix(a.b, b.b))
    raise TypeError(f"unsupported region {type(a).__name__}")


@dataclass(frozen=True, eq=False)
class Tube:
    """Per-node convex slices ``X(t_i)``, linearly interpolated in between."""

    grid: Grid
    slices: tuple

    def __post_init__(self):
        if len(self.slices) != self.grid.N + 1:
            raise ValueError(f"tube needs {self.grid.N + 1} slices, got {len(self.slices)}")
        kinds = {type(s) for s in self.slices}
        if len(kinds) != 1:
            raise TypeError("tube slices must share one region variant")
        object.__setattr__(self, "slices", tuple(self.slices))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Tube":
        return cls(grid, tuple(fn(float(t)) for t in grid.nodes))

    @property
    def dim(self) -> int:
        return self.slices[0].dim

    def at(self, t: float) -> ConvexRegion:
        if not 0 <= t <= self.grid.T:
            raise ValueError(f"t = {t} outside [0, {self.grid.T}]")
        s = t / self.grid.dt
        i = min(int(np.floor(s)), self.grid.N - 1)
        lam = s - i
        if lam == 0.0:
            return self.slices[i]
        return _interp_region(self.slices[i], self.slices[i + 1], lam)


def tube_project(y, tube: Tube, t: float) -> np.ndarray:
    """Nearest point of the slice ``X(t)`` to ``y``."""
    return project(y, tube.at(t))


def step_multifunction(tube: Tube, x, n: int) -> list[Box]:
    """Per-node regions of the dyadic step approximation of ``t -> Pr(t, x)``.

    The horizon is cut into ``2^n`` windows; on each, the region is the box
    hull of the projections of ``x`` onto the slices at the window's nodes
    (both ends included).  Node ``i`` is assigned to the window that starts at
    or before it, the last node to the last window.
    """
    N = tube.grid.N
    if n < 0 or (1 << n) > N or N % (1 << n):
        raise ValueError(f"2^{n} does not divide N = {N}")
    L = N >> n
    proj = np.array([project(x, S) for S in tube.slices])
    hulls = [box_hull(proj[a * L:(a + 1) * L + 1]) for a in range(1 << n)]
    return [hulls[min(i // L, (1 << n) - 1)] for i in range(N + 1)]


def step_distance(tube: Tube, x, n: int) -> np.ndarray:
    """``d_H(Pr_n(t_i), Pr(t_i, x))`` at every node."""
    regions = step_multifunction(tube, x, n)
    return np.array([hausdorff(R, Point(project(x, S))) for R, S in zip(regions, tube.slices)])
