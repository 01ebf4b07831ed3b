import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vinclusion.timebase import (
    Grid,
    GridMismatchError,
    ScalarTable,
    Selection,
    Trajectory,
    bielecki_norm,
    bielecki_weights,
    conjugate_exponent,
    lp_norm,
    sup_norm,
    trapezoid_integrate,
)


def test_grid_nodes_and_spacing():
    g = Grid(2.0, 8)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 2.0
    assert np.all(np.diff(g.nodes) > 0)
    np.testing.assert_allclose(np.diff(g.nodes), g.dt)
    np.testing.assert_allclose(g.midpoints, g.nodes[:-1] + 0.125)
    assert g.refine().N == 16
    assert g.node_index(0.5) == 2
    with pytest.raises(ValueError):
        g.node_index(0.3)


@pytest.mark.parametrize("T,N", [(0.0, 4), (-1.0, 4), (1.0, 1)])
def test_grid_rejects_bad_parameters(T, N):
    with pytest.raises(ValueError):
        Grid(T, N)


def test_row_counts_are_enforced():
    g = Grid(1.0, 4)
    with pytest.raises(ValueError):
        Selection(g, np.zeros((5, 1)))
    with pytest.raises(ValueError):
        Trajectory(g, np.zeros((4, 1)))
    with pytest.raises(ValueError):
        Trajectory(g, np.full((5, 1), np.nan))
    with pytest.raises(ValueError):
        ScalarTable(g, -np.ones(5), nonnegative=True)


def test_values_are_read_only():
    w = Selection.constant(Grid(1.0, 4), 1.0)
    with pytest.raises(ValueError):
        w.values[0, 0] = 3.0


def test_arithmetic_needs_shared_grid():
    a = Selection.constant(Grid(1.0, 4), 1.0)
    b = Selection.constant(Grid(1.0, 8), 1.0)
    with pytest.raises(GridMismatchError):
        a + b


def test_trapezoid_constant():
    g = Grid(2.0, 7)
    assert trapezoid_integrate(ScalarTable.constant(g, 1.0)) == pytest.approx(2.0, rel=1e-15)


def test_trapezoid_exact_on_affine():
    f = ScalarTable.from_function(Grid(1.0, 4), lambda t: t)
    assert trapezoid_integrate(f, 4) == pytest.approx(0.5, abs=1e-15)


def test_trapezoid_square_within_error_bound():
    f = ScalarTable.from_function(Grid(1.0, 100), lambda t: t**2)
    assert abs(trapezoid_integrate(f) - 1 / 3) <= 2e-5


def test_trapezoid_index_out_of_range():
    f = ScalarTable.constant(Grid(1.0, 4), 1.0)
    with pytest.raises(IndexError):
        trapezoid_integrate(f, 5)
    assert trapezoid_integrate(f, 0) == 0.0


@given(st.integers(2, 40), st.data())
def test_trapezoid_additive(N, data):
    g = Grid(1.0, N)
    vals = data.draw(st.lists(st.floats(-1e3, 1e3), min_size=N + 1, max_size=N + 1))
    f = ScalarTable(g, np.array(vals))
    k = data.draw(st.integers(0, N))
    whole = trapezoid_integrate(f)
    head = trapezoid_integrate(f, k)
    tail = trapezoid_integrate(ScalarTable(Grid(1.0, N), np.r_[np.zeros(k), vals[k:]]), N) - (
        0.5 * g.dt * vals[k] if k > 0 else 0.0)
    assert head + tail == pytest.approx(whole, abs=1e-9 * (1 + np.sum(np.abs(vals)) * g.dt))


def test_lp_norm_examples():
    g = Grid(1.0, 16)
    assert lp_norm(Selection.constant(g, 0.0), 1) == 0.0
    assert lp_norm(Selection.constant(Grid(3.0, 5), 1.0), 1) == pytest.approx(3.0)
    assert lp_norm(Selection.constant(g, [3.0, 4.0]), 2) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        lp_norm(Selection.constant(g, 1.0), 0.5)


@given(st.floats(-100, 100).filter(lambda a: a == 0 or abs(a) > 1e-6), st.floats(1, 5),
       st.integers(0, 2**32 - 1))
def test_lp_norm_homogeneous(a, p, seed):
    g = Grid(1.0, 16)
    w = Selection(g, np.random.default_rng(seed).standard_normal((16, 2)))
    assert lp_norm(a * w, p) == pytest.approx(abs(a) * lp_norm(w, p), rel=1e-12)


def test_bielecki_zero_alpha_is_plain_norm():
    g = Grid(1.0, 32)
    w = Selection.from_function(g, lambda t: np.sin(5 * t))
    zero = ScalarTable.constant(g, 0.0)
    assert bielecki_norm(w, zero, 1.0, 2) == pytest.approx(lp_norm(w, 2), rel=1e-15)


def test_bielecki_weight_at_end():
    g = Grid(1.0, 10)
    wts = bielecki_weights(ScalarTable.constant(g, 1.0), 1.0, 1)
    assert wts[-1] == pytest.approx(math.exp(-2.0), rel=1e-14)


def test_bielecki_closed_form_p2():
    g = Grid(1.0, 512)
    w = Selection.constant(g, 1.0)
    val = bielecki_norm(w, ScalarTable.constant(g, 1.0), 1.0, 2)
    exact = math.sqrt((1 - math.exp(-8)) / 8)
    # subinterval-averaged weights: trapezoid error of e^{-8t}
    assert val == pytest.approx(exact, rel=1e-4)


def test_bielecki_rejects_small_M():
    g = Grid(1.0, 4)
    with pytest.raises(ValueError):
        bielecki_norm(Selection.constant(g, 1.0), ScalarTable.constant(g, 1.0), 0.5, 1)


@settings(max_examples=50)
@given(st.floats(1, 4), st.floats(1, 10), st.integers(0, 2**32 - 1))
def test_bielecki_norm_equivalence(p, M, seed):
    rng = np.random.default_rng(seed)
    g = Grid(1.0, 32)
    w = Selection(g, rng.standard_normal((32, 2)))
    alpha = ScalarTable(g, rng.uniform(0, 2, 33), nonnegative=True)
    b = bielecki_norm(w, alpha, M, p)
    plain = lp_norm(w, p)
    r_T = trapezoid_integrate(ScalarTable(g, alpha.values**p))
    assert b <= plain * (1 + 1e-12)
    assert b >= math.exp(-(2 ** (2 * p - 1)) * M * r_T / p) * plain * (1 - 1e-12)


def test_sup_norm_examples():
    g = Grid(1.0, 256)
    assert sup_norm(Trajectory.constant(g, 0.0)) == 0.0
    assert sup_norm(Trajectory.from_function(g, lambda t: [t, -t])) == pytest.approx(math.sqrt(2))
    assert abs(sup_norm(Trajectory.from_function(g, lambda t: np.sin(np.pi * t))) - 1) <= 1e-4


def test_conjugate_exponent():
    assert conjugate_exponent(1) == math.inf
    assert conjugate_exponent(2) == 2
    assert conjugate_exponent(3) == pytest.approx(1.5)
