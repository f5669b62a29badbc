import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lattice_entire.errors import ArityError, DimensionError, DivergenceError, NonlinearityError, ParameterError
from lattice_entire.lattice import (Boundary, CellFunctions, Direction, Kernel, LatticeState, PeriodicNonlinearity,
                                    check_assumptions, check_comparison, derivative_bounds, gaussian_kernel,
                                    integrate, nearest_neighbor_kernel, residual_F, rhs, stability_bound,
                                    validate_nonlinearity)


# -- kernels -----------------------------------------------------------------

@given(k0=st.integers(1, 4), var=st.floats(0.2, 5.0))
def test_gaussian_kernel_axioms(k0, var):
    k = gaussian_kernel(k0, var)
    w = k.weights
    assert np.all(w >= 0)
    assert np.array_equal(w, w[::-1, ::-1])
    assert abs(w.sum() - 1.0) <= 1e-14
    assert k(k0 + 1, 0) == 0.0 and k(0, -k0 - 1) == 0.0


def test_kernel_rejects_bad_weights():
    w = np.zeros((3, 3))
    w[1, 1] = 1.0
    Kernel(1, w)
    with pytest.raises(ParameterError):
        Kernel(1, w * 0.5)
    odd = w.copy()
    odd[0, 1], odd[1, 1] = 0.5, 0.5
    with pytest.raises(ParameterError):
        Kernel(1, odd)
    with pytest.raises(DimensionError):
        Kernel(2, w)


def test_kernel_round_trip():
    k = gaussian_kernel(2, 1.0)
    back = Kernel.from_dict(k.to_dict())
    assert back.half_width == 2 and np.array_equal(back.weights, k.weights)


# -- directions --------------------------------------------------------------

@given(p=st.integers(-9, 9), q=st.integers(-9, 9))
def test_direction_unit_vector(p, q):
    if p == 0 and q == 0:
        with pytest.raises(ParameterError):
            Direction(p, q)
        return
    d = Direction(p, q)
    assert abs(d.cos ** 2 + d.sin ** 2 - 1.0) <= 1e-14
    assert d.reversed().reversed() == d


def test_direction_from_angle():
    assert Direction.from_angle(0.0) == Direction(1, 0)
    assert Direction.from_angle(math.pi / 2) == Direction(0, 1)
    assert Direction.from_angle(math.atan2(1, 2)) == Direction(2, 1)
    with pytest.raises(ParameterError):
        Direction.from_angle(1.0)


# -- nonlinearity ------------------------------------------------------------

def test_cubic_zeros_and_sign_structure(periodic_cubic):
    rep = check_assumptions(periodic_cubic)
    assert rep.a1 and rep.a2
    # the cubic with a < 1/2 is convex at a, so the upper secant bound fails
    assert rep.a3_lower and not rep.a3_upper
    validate_nonlinearity(periodic_cubic, a3="lower")
    with pytest.raises(NonlinearityError):
        validate_nonlinearity(periodic_cubic, a3="full")


@pytest.mark.parametrize("a", [0.0, 1.0, 1.5, -0.1])
def test_middle_zero_out_of_range(a):
    with pytest.raises(NonlinearityError):
        PeriodicNonlinearity(a, 1.0)


def test_periodic_lookup_wraps(periodic_cubic):
    u = np.array([0.6])
    assert periodic_cubic.value(u, 0, 1) == periodic_cubic.value(u, 2, 3)
    assert periodic_cubic.value(u, 0, 0) != periodic_cubic.value(u, 0, 1)


def test_custom_cells_match_cubic():
    a = 0.3
    cell = CellFunctions(lambda u: u * (u - a) * (1 - u), lambda u: -3 * u ** 2 + 2 * (1 + a) * u - a,
                         lambda u: -6 * u + 2 * (1 + a))
    custom = PeriodicNonlinearity(a, cells=[[cell]])
    cubic = PeriodicNonlinearity(a, 1.0)
    u = np.linspace(0, 1, 11)
    np.testing.assert_allclose(custom.value(u), cubic.value(u), atol=1e-15)
    np.testing.assert_allclose(custom.deriv(u), cubic.deriv(u), atol=1e-14)


# -- rhs ---------------------------------------------------------------------

@pytest.mark.parametrize("level", ["zero", "a", "one"])
def test_rhs_vanishes_at_equilibria(kernel, periodic_cubic, level):
    val = {"zero": 0.0, "a": periodic_cubic.a, "one": 1.0}[level]
    st_ = LatticeState(np.full((12, 8), val), -3, 5, 0.0, Boundary(0, val, val))
    assert np.max(np.abs(rhs(st_, kernel, periodic_cubic))) <= 1e-15


def test_single_site_bump(kernel):
    f = PeriodicNonlinearity(0.3, 1.0)
    eps = 1e-3
    u = np.full((11, 11), f.a)
    u[5, 5] += eps  # site (0, 0) with i0 = j0 = -5
    s = LatticeState(u, -5, -5, 0.0, Boundary(0, f.a, f.a))
    r = rhs(s, kernel, f)
    # the neighbour only sees the convolution term: exactly J(1,0) eps up to rounding
    assert abs(r[6, 5] - kernel(1, 0) * eps) <= 1e-16
    # the bumped site picks up the reaction, which is quadratic in eps beyond the linear part
    lin = (kernel(0, 0) - 1.0 + f.deriv(f.a)) * eps
    assert abs(r[5, 5] - lin) <= 2 * abs(f.deriv2(f.a)) * eps ** 2


def test_rhs_translation_equivariance(kernel, periodic_cubic):
    rng = np.random.default_rng(3)
    u = rng.uniform(0, 1, (8, 8))
    s = LatticeState(u, 0, 0, 0.0, Boundary(None, None, None))
    base = rhs(s, kernel, periodic_cubic)
    for shift, axis in ((2, 0), (2, 1)):
        rolled = LatticeState(np.roll(u, shift, axis=axis), 0, 0, 0.0, Boundary(None, None, None))
        np.testing.assert_array_equal(rhs(rolled, kernel, periodic_cubic), np.roll(base, shift, axis=axis))
    # moving the window origin by a full period leaves every rate unchanged
    moved = LatticeState(u, 2, -2, 0.0, Boundary(None, None, None))
    np.testing.assert_array_equal(rhs(moved, kernel, periodic_cubic), base)


def test_rhs_window_too_small(kernel, periodic_cubic):
    with pytest.raises(DimensionError):
        rhs(LatticeState(np.zeros((4, 10))), kernel, periodic_cubic)


# -- integration -------------------------------------------------------------

def test_equilibrium_one_is_constant(kernel, periodic_cubic):
    s = LatticeState(np.ones((10, 10)), 0, 0, 0.0, Boundary(0, 1.0, 1.0))
    tr = integrate(s, kernel, periodic_cubic, 0.1, 20.0, times=[5.0, 20.0])
    assert np.all(tr.fields == 1.0)


def test_constant_below_a_decays(kernel, periodic_cubic):
    s = LatticeState(np.full((6, 6), 0.2), 0, 0, 0.0, Boundary(None, None, None))
    tr = integrate(s, kernel, periodic_cubic, 0.1, 60.0, times=[10.0, 30.0, 60.0])
    peaks = tr.fields.max(axis=(1, 2))
    assert np.all(np.diff(peaks) < 0) and peaks[-1] < 1e-6


def test_snapshot_times_hit_exactly(kernel, periodic_cubic):
    s = LatticeState(np.full((6, 6), 0.5), 0, 0, 0.0)
    tr = integrate(s, kernel, periodic_cubic, 0.3, 1.0, times=[0.25, 1.0])
    np.testing.assert_array_equal(tr.times, [0.25, 1.0])


def test_dt_above_stability_bound(kernel, periodic_cubic):
    s = LatticeState(np.full((6, 6), 0.5))
    bound = stability_bound(periodic_cubic)
    with pytest.raises(ParameterError):
        integrate(s, kernel, periodic_cubic, 1.01 * bound, 1.0)
    with pytest.warns(RuntimeWarning):
        integrate(s, kernel, periodic_cubic, 1.01 * bound, 1.0, allow_unstable_dt=True)


def test_divergence_names_site_and_time(kernel):
    blow = CellFunctions(lambda u: np.where(u > 0.7, np.inf, 0.0), lambda u: 0 * u, lambda u: 0 * u)
    f = PeriodicNonlinearity(0.3, cells=[[blow]])
    u = np.full((30, 30), 0.5)
    u[15, 15] = 0.8
    with pytest.raises(DivergenceError) as exc:
        integrate(LatticeState(u, 10, 20), kernel, f, 0.1, 1.0, allow_unstable_dt=True)
    ctx = exc.value.context
    # within one RK4 step the blow-up spreads at most three kernel widths from its source
    i, j = ctx["site"]
    assert abs(i - 25) <= 6 and abs(j - 35) <= 6
    assert ctx["t"] == pytest.approx(0.1)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_ordered_data_stay_ordered(seed, kernel, periodic_cubic):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(0, 1, (12, 12))
    hi = np.clip(lo + rng.uniform(0, 0.3, lo.shape), 0, 1)
    kw = dict(times=[2.0, 5.0])
    a = integrate(LatticeState(hi), kernel, periodic_cubic, 0.1, 5.0, **kw)
    b = integrate(LatticeState(lo), kernel, periodic_cubic, 0.1, 5.0, **kw)
    rep = check_comparison(a, b)
    assert rep.passed, rep


# -- residual, comparison, derivative bounds ---------------------------------

def test_residual_of_equilibrium(kernel, periodic_cubic):
    a = periodic_cubic.a
    r = residual_F(lambda i, j, t: np.full(np.shape(i), a), kernel, periodic_cubic, np.arange(4), np.arange(4), 1.0)
    assert np.max(np.abs(r)) <= 1e-16


def test_residual_sign_convention(kernel):
    # v = e^t on a linear-in-u system-free check: F = v' - (Jv - v + f(v)) with f = 0 cells
    zero = CellFunctions(lambda u: 0 * u, lambda u: 0 * u, lambda u: 0 * u)
    f = PeriodicNonlinearity(0.3, cells=[[zero]])
    r = residual_F(lambda i, j, t: np.full(np.shape(i), 2.0 * t), kernel, f, np.array([0]), np.array([0]), 1.0)
    assert r[0] == pytest.approx(2.0, abs=1e-8)  # supersolution of u' = Ju - u


def test_comparison_identical_and_swapped(kernel, periodic_cubic):
    rng = np.random.default_rng(0)
    lo = rng.uniform(0, 0.5, (8, 8))
    a = integrate(LatticeState(lo + 0.2), kernel, periodic_cubic, 0.1, 2.0, times=[1.0, 2.0])
    b = integrate(LatticeState(lo), kernel, periodic_cubic, 0.1, 2.0, times=[1.0, 2.0])
    same = check_comparison(a, a)
    assert same.passed and same.min_gap == 0.0
    swapped = check_comparison(b, a)
    assert not swapped.passed and swapped.first_violation[0] == 1.0


def test_comparison_grid_mismatch(kernel, periodic_cubic):
    a = integrate(LatticeState(np.zeros((6, 6))), kernel, periodic_cubic, 0.1, 1.0)
    b = integrate(LatticeState(np.zeros((6, 7))), kernel, periodic_cubic, 0.1, 1.0)
    with pytest.raises(DimensionError):
        check_comparison(a, b)


def test_derivative_bounds(kernel, periodic_cubic):
    const = integrate(LatticeState(np.ones((6, 6)), t=0.0), kernel, periodic_cubic, 0.1, 5.0,
                      times=[2.0, 3.0, 4.0, 5.0])
    assert derivative_bounds(const) == (0.0, 0.0)
    short = integrate(LatticeState(np.ones((6, 6))), kernel, periodic_cubic, 0.1, 5.0, times=[2.0, 5.0])
    with pytest.raises(ArityError):
        derivative_bounds(short)


def test_nearest_neighbor_kernel():
    k = nearest_neighbor_kernel()
    assert k(1, 0) == k(0, -1) == 0.25 and k(0, 0) == 0.0
