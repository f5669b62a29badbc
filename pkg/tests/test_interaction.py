import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from lattice_entire.errors import DomainError, ParameterError
from lattice_entire.interaction import (QDomainPoint, ShiftParams, coupling_F, excluded_curve, ode_residual,
                                        phase_constants, q_eval, q_forms, q_grad, q_hessian_factors, qtilde_eval,
                                        qtilde_forms, qtilde_grad, shift_eval, shift_gap_fit, shift_limits,
                                        validate_kappa)
from lattice_entire.lattice import PeriodicNonlinearity
from lattice_entire.verify import (canonical_shift_params, factor_sweeps, fd_gradient, gradient_errors,
                                   gradient_suite, ode_oracle, sign_structure)

A_VALUES = (0.1, 0.3, 0.5, 0.7, 0.9)


@st.composite
def d1_points(draw, gap=1e-3):
    a = draw(st.sampled_from(A_VALUES))
    y = draw(st.floats(gap, 1 - gap))
    z = draw(st.floats(gap, a - gap))
    w = draw(st.floats(a + gap, 1 - gap))
    return y, z, w, a


# -- Q -----------------------------------------------------------------------

def test_three_forms_agree_at_reference_point():
    forms = q_forms(0.4, 0.1, 0.6, 0.3)
    assert max(forms) - min(forms) <= 1e-12
    assert q_eval(0.4, 0.1, 0.6, 0.3) == pytest.approx(forms[0], abs=1e-12)


@given(d1_points())
def test_forms_agree_and_range(p):
    y, z, w, a = p
    forms = np.array(q_forms(y, z, w, a), dtype=float)
    assert np.ptp(forms) <= 1e-12
    assert 0.0 <= q_eval(y, z, w, a) <= 1.0


@given(d1_points())
def test_face_identities(p):
    y, z, w, a = p
    assert q_eval(y, 0.0, w, a) == y
    assert q_eval(y, a, w, a) == w
    assert q_eval(y, z, 1.0, a) == 1.0
    assert q_eval(0.0, z, a, a) == z


def test_faces_exact_examples():
    a = 0.3
    assert q_eval(0.7, 0.0, 0.5, a) == 0.7
    assert q_eval(0.7, a, 0.5, a) == 0.5
    assert q_eval(0.7, 0.1, 1.0, a) == 1.0
    assert q_eval(0.0, 0.2, a, a) == 0.2


@pytest.mark.parametrize("point,curve", [((1.0, 0.3, 0.5), "{y=1, z=a}"), ((1.0, 0.1, 1.0), "{y=1, w=1}"),
                                         ((0.4, 0.0, 1.0), "{z=0, w=1}")])
def test_excluded_curves(point, curve):
    y, z, w = point
    assert excluded_curve(y, z, w, 0.3) == curve
    with pytest.raises(DomainError):
        QDomainPoint(y, z, w, 0.3)
    with pytest.raises(DomainError) as exc:
        q_eval(y, z, w, 0.3)
    assert curve in str(exc.value)


def test_domain_point_bounds():
    QDomainPoint(0.5, 0.1, 0.6, 0.3)
    with pytest.raises(DomainError):
        QDomainPoint(0.5, 0.4, 0.6, 0.3)
    with pytest.raises(ParameterError):
        QDomainPoint(0.5, 0.1, 0.6, 1.0)


def fd4_gradient(fun, y, z, w, a, h=1e-6):
    # near the corners the plain central difference is off by ~1e-6 from truncation alone
    def d(shift):
        f = lambda s: fun(*shift(s), a)
        return (8 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12 * h)
    return (d(lambda s: (y + s, z, w)), d(lambda s: (y, z + s, w)), d(lambda s: (y, z, w + s)))


@settings(max_examples=200)
@given(d1_points())
def test_gradient_matches_finite_differences(p):
    y, z, w, a = p
    g = q_grad(y, z, w, a)
    fd = fd4_gradient(q_eval, y, z, w, a)
    assert np.max(gradient_errors(np.array(g.as_tuple(), dtype=float), np.array(fd))) <= 1e-6


def test_central_difference_at_reference_point():
    g = q_grad(0.4, 0.1, 0.6, 0.3)
    fd = fd_gradient(q_eval, 0.4, 0.1, 0.6, 0.3)
    assert np.max(gradient_errors(np.array(g.as_tuple(), dtype=float), np.array(fd))) <= 1e-6


def test_gradient_suite_and_negative_control():
    rng = np.random.default_rng(11)
    assert gradient_suite(A_VALUES, 300, rng)["passed"]
    bad = gradient_suite(A_VALUES, 300, np.random.default_rng(11), corrupt="qw_sign")
    assert not bad["passed"]


@given(d1_points())
def test_monotone_in_y_and_w(p):
    y, z, w, a = p
    g = q_grad(y, z, w, a)
    assert g.qy >= -1e-12 and g.qw >= -1e-12
    # Q_z = (1-y)(1-w) Q2 with Q2 proportional to (w - y)
    assert np.sign(g.qz) == np.sign(w - y) or abs(g.qz) <= 1e-12


def test_sign_structure_report():
    rep = sign_structure((0.3, 0.7), 4000, np.random.default_rng(0))
    for row in rep.values():
        assert row["min_qy"] >= 0 and row["min_qw"] >= 0
        assert row["qz_negative_only_where_y_gt_w"]
        assert 0 < row["qz_negative_fraction"] < 1


def test_witnesses_finite_at_prefactor_zero():
    a = 0.3
    g = q_grad(0.5, a, 0.6, a)  # prefactor of Q_y vanishes at z = a
    assert g.qy == 0.0 and np.isfinite(g.Q1) and g.Q1 > 0
    g = q_grad(0.5, 0.1, 1.0, a)  # prefactor of Q_z vanishes at w = 1
    assert g.qz == 0.0 and np.isfinite(g.Q2)


def test_hessian_factors_interior_and_sweeps():
    rep = q_hessian_factors(0.4, 0.1, 0.6, 0.3)
    assert rep.passed and len(rep.ratios) == 14
    sweeps = factor_sweeps((0.3,))
    assert sweeps["passed"]
    rows = sweeps["per_a"]["0.3"]
    assert rows["R3"]["vanishing"]
    assert rows["R1"]["variation"] < 0.1


def test_coupling_vanishes_on_faces():
    a = 0.3
    f = PeriodicNonlinearity(a, 1.0)
    y = np.linspace(0.05, 0.95, 7)
    w = np.linspace(a + 0.05, 0.95, 7)
    assert np.max(np.abs(coupling_F(y, 0.0, w, a, f))) <= 1e-12
    assert np.max(np.abs(coupling_F(y, a, w, a, f))) <= 1e-12


# -- Q~ ----------------------------------------------------------------------

def test_qtilde_faces():
    a = 0.3
    assert qtilde_eval(0.6, 0.0, 0.2, a) == pytest.approx(0.6, abs=1e-15)
    assert qtilde_eval(0.6, a, 0.2, a) == pytest.approx(0.2, abs=1e-15)
    assert qtilde_eval(0.6, 0.1, 0.0, a) == pytest.approx(0.0, abs=1e-15)
    assert qtilde_eval(1.0, 0.1, 0.2, a) == pytest.approx(1.0, abs=1e-15)
    assert qtilde_eval(0.0, 0.1, a, a) == pytest.approx(0.1, abs=1e-15)


def test_qtilde_reference_point():
    v = qtilde_eval(0.5, 0.2, 0.1, 0.3)
    assert np.isfinite(v) and 0.0 <= v <= 1.0
    forms = qtilde_forms(0.5, 0.2, 0.1, 0.3)
    assert max(forms) - min(forms) <= 1e-12


@settings(max_examples=200)
@given(a=st.sampled_from(A_VALUES), u=st.tuples(*[st.floats(1e-3, 1 - 1e-3)] * 3))
def test_qtilde_gradient_and_range(a, u):
    y, z, w = u[0], a * u[1], a * u[2]
    assume(min(z, w, a - z, a - w) > 1e-3)
    assert 0.0 <= qtilde_eval(y, z, w, a) <= 1.0
    g = np.array(qtilde_grad(y, z, w, a).as_tuple(), dtype=float)
    fd = np.array(fd4_gradient(qtilde_eval, y, z, w, a))
    assert np.max(gradient_errors(g, fd)) <= 1e-6


# -- shifts ------------------------------------------------------------------

@pytest.fixture(params=["theorem12", "theorem13"])
def shifts(request):
    return canonical_shift_params(request.param)


def test_initial_values(shifts):
    assert shift_eval(shifts, "p1", 0.0) == pytest.approx(shifts.p0, abs=1e-14)
    assert shift_eval(shifts, "r1", 0.0) == pytest.approx(shifts.r0, abs=1e-14)


def test_odes_hold(shifts):
    t = -np.geomspace(1e-2, 300, 200)
    for n in ("p1", "p2", "r1", "r2"):
        assert np.max(np.abs(ode_residual(shifts, n, t))) <= 1e-8


def test_closed_forms_match_integration(shifts):
    oracle = ode_oracle(shifts, -5.0)
    for n, v in oracle.items():
        assert shift_eval(shifts, n, -5.0) == pytest.approx(v, abs=1e-8)


def test_limit_at_minus_200(shifts):
    lims = shift_limits(shifts)
    k, s1, L, p0 = shifts.kappa, shifts.s1, shifts.L, shifts.p0
    assert lims["p1"] == pytest.approx(-np.log(np.exp(-k * p0) + L / s1) / k, abs=1e-14)
    assert abs(shift_eval(shifts, "p1", -200.0) - s1 * -200.0 - lims["p1"]) <= 1e-8


def test_gap_identity_and_bound(shifts):
    # beyond about t = -40 the gap is below the rounding of the shifts themselves
    t = np.append(-np.geomspace(1e-3, 40, 300)[::-1], 0.0)
    fit = shift_gap_fit(shifts, t)
    assert fit.max_identity_error <= 1e-12
    assert fit.positive and fit.monotone and np.isfinite(fit.N)
    gap = lambda s: shift_eval(shifts, "p1", s) - shift_eval(shifts, "r1", s)
    assert gap(-50.0) < gap(0.0)
    assert fit.N >= fit.gap_0
    assert np.all(gap(t) <= fit.N * np.exp(shifts.kappa * shifts.s1 * t) * (1 + 1e-12))


@settings(max_examples=50)
@given(L=st.floats(1e-3, 1.0), kappa=st.floats(0.05, 2.0), s1=st.floats(0.1, 2.0), ds=st.floats(0.0, 2.0),
       p0=st.floats(-10.0, -0.5))
def test_shift_ordering_property(L, kappa, s1, ds, p0):
    try:
        params = ShiftParams.from_p0(L, kappa, s1, s1 + ds + 1e-3, p0)
    except ParameterError:
        assume(False)
    gap0 = params.p0 - params.r0
    assume(gap0 > 1e-7)
    # keep to times where the gap stays well above the rounding of the shifts
    t_min = max(-50.0, np.log(1e-8 / gap0) / (params.kappa * params.s1))
    t = np.linspace(t_min, 0, 51)
    p1, r1 = shift_eval(params, "p1", t), shift_eval(params, "r1", t)
    p2, r2 = shift_eval(params, "p2", t), shift_eval(params, "r2", t)
    assert np.all(p1 > r1) and np.all(p2 > r2)
    np.testing.assert_allclose(p1 - r1, p2 - r2, atol=1e-12)
    assert np.all(np.array([p1, p2, r1, r2]) <= -params.delta + 1e-12)


def test_shift_domain_and_validation():
    params = canonical_shift_params()
    with pytest.raises(DomainError):
        shift_eval(params, "p1", 0.5)
    with pytest.raises(ParameterError):
        shift_eval(params, "q1", -1.0)
    with pytest.raises(ParameterError):
        params.replace(p0=params.p0 + 0.1)  # breaks the relation between p0 and r0
    with pytest.raises(ParameterError):
        ShiftParams.from_r0(10.0, 1.0, 0.5, 1.0, -0.1)  # exp(-k r0) below 2L/s1
    with pytest.raises(ParameterError):
        params.replace(t0=1.0)


def test_validate_kappa():
    params = ShiftParams.from_p0(0.1, 0.05, 0.5, 1.0, -5.0, delta=1.0)
    t0 = validate_kappa(params, 1.0)
    assert np.isfinite(t0) and t0 <= 0
    flat = ShiftParams.from_p0(0.1, 0.05, 0.5, 0.5, -5.0, delta=1.0)
    assert validate_kappa(flat, 1.0) == 0.0
    with pytest.raises(ParameterError):
        validate_kappa(ShiftParams.from_p0(0.1, 1e3, 0.5, 1.0, -0.5), 1.0)


def test_phase_constants():
    p12 = canonical_shift_params("theorem12")
    ph = phase_constants(p12)
    expected = -np.log(p12.E - p12.L / p12.s1) / p12.kappa
    assert ph.omega == pytest.approx(expected, abs=1e-14)
    assert ph.front_phases == (-ph.omega, ph.omega, ph.omega)
    p13 = canonical_shift_params("theorem13")
    ph = phase_constants(p13)
    assert ph.omega2_derived == pytest.approx(ph.omega1 - p13.p0 - p13.r0)
    # the third shift settles at the derived phase, not the printed one
    lim = shift_limits(p13)["r2"]
    assert -lim == pytest.approx(ph.omega2_derived, abs=1e-12)
