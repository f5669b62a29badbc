import json

import numpy as np
import pytest

from lattice_entire.errors import AnchoringError, InfeasibleSpeedError, InsufficientRangeError, ParameterError
from lattice_entire.fronts import (FrontProfile, ProfileGrid, critical_speed, critical_speed_info, measure_decay,
                                   normalize_phase, solve_bistable_front, solve_monostable_front, view_crossing)
from lattice_entire.lattice import (Boundary, Direction, LatticeState, PeriodicNonlinearity, integrate,
                                    nearest_neighbor_kernel, residual_F)


@pytest.fixture(scope="module")
def cubic03():
    return PeriodicNonlinearity(0.3, 1.0)


@pytest.fixture(scope="module")
def bistable03(kernel, east, cubic03):
    return solve_bistable_front(kernel, cubic03, east)


@pytest.fixture(scope="module")
def lower03(kernel, east, cubic03):
    crit = critical_speed(kernel, cubic03, "lower", east)
    return solve_monostable_front(kernel, cubic03, "lower", -(crit + 0.5), east, critical=crit)


def crossing_speed(kernel, f, front, level, t_end=20.0, half=150):
    """Integrate the sampled front on a strip and fit the level-crossing position."""
    i = np.arange(-half, half + 1)
    u0 = np.repeat(front.value(i, 0, i.astype(float))[:, None], 5, axis=1)
    lo, hi = front.limits
    st = LatticeState(u0, -half, 0, 0.0, Boundary(0, lo, hi))
    times = np.linspace(2.0, t_end, 19)
    tr = integrate(st, kernel, f, 0.05, t_end, times=times)
    pos = []
    for row in tr.fields[:, :, 0]:
        k = int(np.argmax(np.diff(np.sign(row - level)) != 0))
        x0, x1, y0, y1 = i[k], i[k + 1], row[k], row[k + 1]
        pos.append(x0 + (level - y0) * (x1 - x0) / (y1 - y0))
    return -np.polyfit(times, pos, 1)[0]


# -- bistable ----------------------------------------------------------------

def test_bistable_front_orientation(bistable03):
    assert bistable03.limits == (1.0, 0.0)
    # 1 invades 0 for a < 1/2, so the front moves to +x and the view speed is negative
    assert bistable03.speed < 0
    assert bistable03.residual <= 1e-3


def test_bistable_speed_agrees_with_direct_integration(kernel, cubic03, bistable03):
    c = crossing_speed(kernel, cubic03, bistable03, 0.5)
    assert abs(c - bistable03.speed) <= 1e-3


def test_periodic_speed_bracketed(kernel, east, periodic_cubic):
    s = [solve_bistable_front(kernel, PeriodicNonlinearity(0.3, mu), east).speed for mu in (0.8, 1.2)]
    per = solve_bistable_front(kernel, periodic_cubic, east)
    assert min(s) < per.speed < max(s)
    assert per.residual <= 1e-3


def test_reflection_identity(bistable03):
    xi = np.linspace(-5, 5, 41)
    view = bistable03.value(0, 0, xi)
    table = bistable03.table_eval(np.zeros(xi.shape, dtype=int), -xi)[0]
    np.testing.assert_allclose(view, table, atol=1e-10)


# -- monostable --------------------------------------------------------------

def test_monostable_lower_front(lower03):
    assert lower03.limits == (0.0, 0.3)
    assert lower03.residual <= 1e-3
    xi, vals, ders = lower03.view_samples()
    assert np.min(ders) >= -1e-10


def test_monostable_translates_at_prescribed_speed(kernel, cubic03, lower03):
    c = crossing_speed(kernel, cubic03, lower03, 0.15)
    assert abs(c - lower03.speed) <= 1e-3


@pytest.mark.parametrize("branch,sign,limits", [("lower", 1, (0.3, 0.0)), ("upper", 1, (0.3, 1.0)),
                                                ("upper", -1, (1.0, 0.3))])
def test_reflected_views_have_the_right_limits(kernel, east, cubic03, branch, sign, limits):
    crit = critical_speed(kernel, cubic03, branch, east)
    prof = solve_monostable_front(kernel, cubic03, branch, sign * (crit + 0.3), east, critical=crit)
    assert prof.limits == limits
    assert abs(prof.value(0, 0, -60.0) - limits[0]) < 1e-4 and abs(prof.value(0, 0, 60.0) - limits[1]) < 1e-4


def test_upper_branch_matches_flipped_lower_branch(kernel, east, cubic03):
    # u -> 1 - u maps f to f~(u) = -f(1 - u) with middle zero 1 - a; its lower branch is the upper branch of f
    a = cubic03.a
    flipped = PeriodicNonlinearity(1 - a, 1.0)
    v = np.linspace(0, 1 - a, 57)
    np.testing.assert_allclose(cubic03.branch("upper").value(v), flipped.branch("lower").value(v), atol=1e-15)
    crit = critical_speed(kernel, cubic03, "upper", east)
    up = solve_monostable_front(kernel, cubic03, "upper", crit + 0.3, east, critical=crit)
    lo = solve_monostable_front(kernel, flipped, "lower", crit + 0.3, east, critical=crit)
    xi = np.linspace(-20, 20, 81)
    # up = a + W and lo = (1 - a) - W, built from the same reduced table
    np.testing.assert_allclose(up.value(0, 0, xi) - a, (1 - a) - lo.value(0, 0, xi), atol=1e-10)


def test_subcritical_speed_rejected(kernel, east, cubic03):
    crit = critical_speed(kernel, cubic03, "lower", east)
    with pytest.raises(InfeasibleSpeedError) as exc:
        solve_monostable_front(kernel, cubic03, "lower", -(crit - 0.1), east, critical=crit)
    assert exc.value.context["critical"] == pytest.approx(crit)


# -- critical speed ----------------------------------------------------------

def test_critical_speed_nearest_neighbour_positive():
    f = PeriodicNonlinearity(0.3, 1.0)
    assert critical_speed(nearest_neighbor_kernel(), f, "lower", Direction(1, 0)) > 0


def test_critical_speed_homogeneous_formula(kernel, east):
    f = PeriodicNonlinearity(0.3, 1.0)
    r = f.deriv(f.a)  # g'(0) of the lower branch
    lam = np.linspace(0.01, 10, 200001)
    ks = np.arange(-2, 3)
    sym = sum(kernel(k1, k2) * np.exp(-lam * k1) for k1 in ks for k2 in ks)
    brute = np.min((sym - 1 + r) / lam)
    assert critical_speed(kernel, f, "lower", east) == pytest.approx(brute, abs=1e-6)


def test_critical_speed_monotone_in_growth_rate(kernel, east):
    speeds = [critical_speed(kernel, PeriodicNonlinearity(0.3, mu), "lower", east) for mu in (0.5, 1.0, 2.0, 4.0)]
    assert np.all(np.diff(speeds) > 0)


def test_pushed_upper_branch_measured(kernel, east, cubic_small_a):
    info = critical_speed_info(kernel, cubic_small_a, "upper", east)
    assert not info.linearly_determined
    assert info.empirical > info.linear and info.value == info.empirical


# -- phase normalization -----------------------------------------------------

def test_normalize_is_identity_on_anchored(bistable03):
    again = normalize_phase(bistable03)
    assert abs(view_crossing(again, bistable03.anchor_value)) <= 1e-12
    xi = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(again.value(0, 0, xi), bistable03.value(0, 0, xi), atol=1e-12)


def test_normalize_round_trip(lower03):
    moved = lower03.shifted(3.7)
    back = normalize_phase(moved)
    xi = np.linspace(-10, 10, 101)
    np.testing.assert_allclose(back.value(0, 0, xi), lower03.value(0, 0, xi), atol=1e-8)


def test_periodic_cells_shift_rigidly(kernel, east, periodic_cubic):
    prof = solve_bistable_front(kernel, periodic_cubic, east)
    before = view_crossing(prof, 0.5, cell=1) - view_crossing(prof, 0.5, cell=0)
    moved = normalize_phase(prof.shifted(-2.3))
    after = view_crossing(moved, 0.5, cell=1) - view_crossing(moved, 0.5, cell=0)
    assert after == pytest.approx(before, abs=1e-9)


def test_anchor_outside_range(lower03):
    with pytest.raises(AnchoringError):
        normalize_phase(lower03, anchor_value=0.5)


# -- decay -------------------------------------------------------------------

def synthetic_front(eta, a=1.0, dxi=0.05, half=60.0):
    n = int(round(2 * half / dxi)) + 1
    grid = ProfileGrid(-half, dxi, n, int(round(1 / dxi)))
    x = grid.nodes
    v = a / (1 + np.exp(-eta * x))
    d = eta * v * (1 - v / a)
    s = eta * d * (1 - 2 * v / a)
    return FrontProfile("synthetic", Direction(1, 0), False, 1.0, 0.0, a, (1, 1), grid, v[None], d[None], s[None],
                        eta, eta, 0.5 * a)


@pytest.mark.parametrize("eta", [0.3, 1.0, 2.5])
def test_decay_of_logistic_profile(eta):
    dec = measure_decay(synthetic_front(eta))
    assert dec.eta1 == pytest.approx(eta, rel=0.02)
    assert dec.eta2 == pytest.approx(eta, rel=0.02)
    assert dec.C1 <= dec.C2 and dec.rho > 0


def test_decay_needs_tail_points():
    with pytest.raises(InsufficientRangeError):
        measure_decay(synthetic_front(1.0, half=3.0))


def test_experiment_fronts_have_positive_constants(fronts12, fronts13):
    for fs in (fronts12, fronts13):
        for p in fs.fronts:
            d = p.decay
            assert d.eta1 > 0 and d.eta2 > 0 and d.rho > 0 and d.C1 > 0 and d.C1 <= d.C2


# -- residual of a sampled front ---------------------------------------------

def test_front_as_traveling_solution(kernel, cubic03, bistable03):
    c = bistable03.speed
    i = np.arange(-15, 16)
    j = np.zeros_like(i)
    r = residual_F(lambda ii, jj, t: bistable03.value(ii, jj, ii + c * t), kernel, cubic03, i, j, 0.7)
    assert np.max(np.abs(r)) <= bistable03.residual + 1e-7


# -- serialization -----------------------------------------------------------

def test_profile_json_round_trip(lower03):
    lower03.decay = lower03.decay or measure_decay(lower03)
    back = FrontProfile.from_dict(json.loads(json.dumps(lower03.to_dict())))
    assert back.content_hash() == lower03.content_hash()
    xi = np.linspace(-30, 30, 61)
    np.testing.assert_array_equal(back.value(0, 0, xi), lower03.value(0, 0, xi))


def test_unknown_branch_rejected(kernel, east):
    with pytest.raises(ParameterError):
        solve_monostable_front(kernel, PeriodicNonlinearity(0.3, 1.0), "middle", 2.0, east, critical=0.1)
