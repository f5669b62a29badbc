"""Auxiliary rational functions Q and Q~, their derivatives, and the shift systems.

Q glues a decreasing front y (1 -> 0), an increasing front z (0 -> a) and an
increasing front w (a -> 1) into one field.  Q~ is the companion used when the
third front is a -> 0.  Every routine is vectorized over numpy arrays.

The partial derivatives below were obtained by hand and reduce, with

    D = (1 - y) z (1 - a) + (a - z)(1 - w),

to

    Q_y = a (a - z)(1 - w)^2 (1 - z) / D^2
    Q_z = a (1 - a)(1 - y)(1 - w)(w - y) / D^2
    Q_w = a (1 - a) z (1 - y)^2 (1 - z) / D^2

so the factorization witnesses Q1, Q2, Q3 are smooth wherever D > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import DomainError, ParameterError
from .lattice import Reaction

TINY = 1e-300
DOMAIN_TOL = 1e-12


def _arr(*xs):
    return [np.asarray(x, dtype=float) for x in xs]


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QDomainPoint:
    y: float
    z: float
    w: float
    a: float

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise ParameterError("middle zero a must lie in (0, 1)", a=self.a)
        t = DOMAIN_TOL
        if not (-t <= self.y <= 1 + t and -t <= self.z <= self.a + t and self.a - t <= self.w <= 1 + t):
            raise DomainError("point outside [0,1]x[0,a]x[a,1]", y=self.y, z=self.z, w=self.w, a=self.a)
        curve = excluded_curve(self.y, self.z, self.w, self.a)
        if curve is not None:
            raise DomainError(f"point lies on the excluded curve {curve}", y=self.y, z=self.z, w=self.w)

    @property
    def args(self):
        return self.y, self.z, self.w


def excluded_curve(y, z, w, a, tol: float = 1e-12) -> Optional[str]:
    """Name of the excluded boundary curve closest to (y, z, w), if on one."""
    if abs(1 - y) <= tol and abs(a - z) <= tol:
        return "{y=1, z=a}"
    if abs(1 - y) <= tol and abs(1 - w) <= tol:
        return "{y=1, w=1}"
    if abs(z) <= tol and abs(1 - w) <= tol:
        return "{z=0, w=1}"
    return None


def _nearest_curve(y, z, w, a) -> str:
    d = {
        "{y=1, z=a}": max(abs(1 - y), abs(a - z)),
        "{y=1, w=1}": max(abs(1 - y), abs(1 - w)),
        "{z=0, w=1}": max(abs(z), abs(1 - w)),
    }
    return min(d, key=d.get)


def q_denominator(y, z, w, a):
    y, z, w = _arr(y, z, w)
    return (1 - y) * z * (1 - a) + (a - z) * (1 - w)


def _check_den(den, y, z, w, a, tilde=False):
    bad = ~(np.abs(den) > TINY)
    if np.any(bad):
        k = np.flatnonzero(np.broadcast_to(bad, np.broadcast(y, z, w).shape).ravel())[0]
        yb, zb, wb = (float(np.broadcast_to(v, bad.shape).ravel()[k]) for v in (y, z, w))
        if tilde:
            curve = "zero set of (1-y)za + (a-z)w"
        else:
            curve = _nearest_curve(yb, zb, wb, a)
        raise DomainError(f"denominator vanishes near {curve}", y=yb, z=zb, w=wb, a=a)


# ---------------------------------------------------------------------------
# Q
# ---------------------------------------------------------------------------


def q_forms(y, z, w, a):
    """The three algebraically equal forms of Q, each evaluated as written."""
    y, z, w = _arr(y, z, w)
    den = q_denominator(y, z, w, a)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = (1 - y) * z * (w - a) + y * (a - z) * (1 - w)
        base_z = z + (1 - z) * num / den
        base_y = y + (1 - y) * z * (1 - a) * (w - y) / den
        base_w = w + (a - z) * (1 - w) * (y - w) / den
    return base_z, base_y, base_w


def q_eval(y, z, w, a):
    """Q(y, z, w).

    All three forms are exact; the one whose correction term is smallest in
    magnitude (its base point is nearest the result) is returned, which keeps
    the face identities exact in floating point.
    """
    y, z, w = _arr(y, z, w)
    den = q_denominator(y, z, w, a)
    _check_den(den, y, z, w, a)
    num = (1 - y) * z * (w - a) + y * (a - z) * (1 - w)
    corr = np.stack(np.broadcast_arrays(
        (1 - z) * num / den,
        (1 - y) * z * (1 - a) * (w - y) / den,
        (a - z) * (1 - w) * (y - w) / den,
    ))
    base = np.stack(np.broadcast_arrays(z, y, w))
    pick = np.argmin(np.abs(corr), axis=0)
    out = np.take_along_axis(base + corr, pick[None], axis=0)[0]
    return out if out.ndim else float(out)


@dataclass
class QGradient:
    qy: np.ndarray
    qz: np.ndarray
    qw: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    Q3: np.ndarray

    def as_tuple(self):
        return self.qy, self.qz, self.qw


def q_grad(y, z, w, a) -> QGradient:
    y, z, w = _arr(y, z, w)
    den = q_denominator(y, z, w, a)
    _check_den(den, y, z, w, a)
    d2 = den * den
    Q1 = a * (1 - w) * (1 - z) / d2
    Q2 = a * (1 - a) * (w - y) / d2
    Q3 = a * (1 - a) * (1 - y) * (1 - z) / d2
    return QGradient(
        qy=(a - z) * (1 - w) * Q1,
        qz=(1 - y) * (1 - w) * Q2,
        qw=(1 - y) * z * Q3,
        Q1=Q1, Q2=Q2, Q3=Q3,
    )


# Second-derivative factorizations: (label, derivative pair, prefactor).
# A prefactor given as a sum stands for a decomposition yR6 + (w-a)R7 and is
# checked through the ratio against y + (w - a).
HESSIAN_FACTORS = [
    ("R1", "yy", lambda y, z, w, a: z),
    ("R2", "yy", lambda y, z, w, a: a - z),
    ("R3", "yy", lambda y, z, w, a: 1 - w),
    ("R4", "zz", lambda y, z, w, a: 1 - y),
    ("R5", "zz", lambda y, z, w, a: 1 - w),
    ("R6+R7", "zz", lambda y, z, w, a: y + (w - a)),
    ("R8", "ww", lambda y, z, w, a: 1 - y),
    ("R9", "ww", lambda y, z, w, a: z),
    ("R10", "ww", lambda y, z, w, a: a - z),
    ("R11", "yz", lambda y, z, w, a: 1 - w),
    ("R12", "zw", lambda y, z, w, a: 1 - y),
    ("R13", "yw", lambda y, z, w, a: 1 - y),
    ("R14", "yw", lambda y, z, w, a: z),
    ("R15+R16", "yw", lambda y, z, w, a: (a - z) + (1 - w)),
]

_IDX = {"y": 0, "z": 1, "w": 2}


def q_hessian(y, z, w, a, h: float = 1e-5, grad=None) -> Dict[str, float]:
    """Second partials by central differences of an analytic gradient."""
    grad = grad or (lambda *p: q_grad(*p, a).as_tuple())
    p = [float(y), float(z), float(w)]
    out = {}
    for pair in ("yy", "zz", "ww", "yz", "zw", "yw"):
        first, second = _IDX[pair[0]], _IDX[pair[1]]
        hi, lo = list(p), list(p)
        hi[second] += h
        lo[second] -= h
        out[pair] = (float(grad(*hi)[first]) - float(grad(*lo)[first])) / (2 * h)
    return out


@dataclass
class FactorReport:
    ratios: Dict[str, float]
    cap: float
    passed: bool
    violations: list = field(default_factory=list)


def q_hessian_factors(y, z, w, a, h: float = 1e-5, cap: float = 1e6) -> FactorReport:
    """Ratios R_l = (second partial) / (stated prefactor) at one interior point."""
    hess = q_hessian(y, z, w, a, h=h)
    ratios, bad = {}, []
    for label, pair, pref in HESSIAN_FACTORS:
        r = hess[pair] / pref(y, z, w, a)
        ratios[label] = r
        if not np.isfinite(r) or abs(r) > cap:
            bad.append(label)
    return FactorReport(ratios=ratios, cap=cap, passed=not bad, violations=bad)


def coupling_F(y, z, w, a, f: Reaction, ci=0, cj=0, q=None, grad=None):
    """f(Q) - Q_y f(y) - Q_z f(z) - Q_w f(w) for the cell (ci, cj)."""
    y, z, w = _arr(y, z, w)
    q = q_eval(y, z, w, a) if q is None else q
    g = q_grad(y, z, w, a) if grad is None else grad
    return (f.value(np.asarray(q), ci, cj) - g.qy * f.value(y, ci, cj)
            - g.qz * f.value(z, ci, cj) - g.qw * f.value(w, ci, cj))


# ---------------------------------------------------------------------------
# Q~ (third front a -> 0)
# ---------------------------------------------------------------------------


def qtilde_denominator(y, z, w, a):
    y, z, w = _arr(y, z, w)
    return (1 - y) * z * a + (a - z) * w


def qtilde_forms(y, z, w, a):
    y, z, w = _arr(y, z, w)
    den = qtilde_denominator(y, z, w, a)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = (1 - y) * z * (a - w) * (-z) + y * (a - z) * w * (1 - z)
        base_z = z + num / den
        base_y = y + a * z * (1 - y) * (w - y) / den
        base_w = w + w * (a - z) * (y - w) / den
    return base_z, base_y, base_w


def qtilde_eval(y, z, w, a):
    y, z, w = _arr(y, z, w)
    den = qtilde_denominator(y, z, w, a)
    _check_den(den, y, z, w, a, tilde=True)
    num = (1 - y) * z * (a - w) * (-z) + y * (a - z) * w * (1 - z)
    corr = np.stack(np.broadcast_arrays(
        num / den,
        a * z * (1 - y) * (w - y) / den,
        w * (a - z) * (y - w) / den,
    ))
    base = np.stack(np.broadcast_arrays(z, y, w))
    pick = np.argmin(np.abs(corr), axis=0)
    out = np.take_along_axis(base + corr, pick[None], axis=0)[0]
    return out if out.ndim else float(out)


def qtilde_grad(y, z, w, a) -> QGradient:
    """Gradient of Q~; Q1..Q3 hold the same style of witnesses."""
    y, z, w = _arr(y, z, w)
    den = qtilde_denominator(y, z, w, a)
    _check_den(den, y, z, w, a, tilde=True)
    d2 = den * den
    Q1 = w * (a * w + a * z - a * w * z - w * z) / d2
    Q2 = a * a * w * (w - y) / d2
    Q3 = a * z * (a * y + a * z - a * y * z - y * z) / d2
    return QGradient(
        qy=(a - z) * Q1,
        qz=(1 - y) * Q2,
        qw=(1 - y) * Q3,
        Q1=Q1, Q2=Q2, Q3=Q3,
    )


def coupling_F_tilde(y, z, w, a, f: Reaction, ci=0, cj=0, q=None, grad=None):
    y, z, w = _arr(y, z, w)
    q = qtilde_eval(y, z, w, a) if q is None else q
    g = qtilde_grad(y, z, w, a) if grad is None else grad
    return (f.value(np.asarray(q), ci, cj) - g.qy * f.value(y, ci, cj)
            - g.qz * f.value(z, ci, cj) - g.qw * f.value(w, ci, cj))


@dataclass
class QLowerBounds:
    """Measured infima of the Q derivatives on the regimes where each is used."""

    eps1: float
    eps2: float
    eps3: float
    regimes: Dict[str, str] = field(default_factory=lambda: {
        "eps1": "z <= 0 (Q_y)",
        "eps2": "0 <= z <= (-p2-p1)/2 (Q_z)",
        "eps3": "z >= (-p2-p1)/2 (Q_w)",
    })

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# Shift systems
# ---------------------------------------------------------------------------

SCENARIOS = ("theorem12", "theorem13")


@dataclass(frozen=True)
class ShiftParams:
    """Constants of the shift system.

    For ``theorem12`` the shifts solve
        p1' = s1 + L e^{k p1},  r1' = s1 - L e^{k r1},
        p2' = s2 + L e^{k p1},  r2' = s2 - L e^{k r1},
    with p1(0) = p2(0) = p0 and r1(0) = r2(0) = r0.  For ``theorem13`` the L
    terms of p2 and r2 change sign and their initial values are r0 and p0.
    """

    L: float
    kappa: float
    s1: float
    s2: float
    p0: float
    r0: float
    delta: float
    t0: float = 0.0
    scenario: str = "theorem12"

    def __post_init__(self):
        for name in ("kappa", "s1", "s2", "delta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be positive", **{name: v})
        if not (np.isfinite(self.L) and self.L >= 0):
            raise ParameterError("L must be nonnegative", L=self.L)
        if self.scenario not in SCENARIOS:
            raise ParameterError("unknown scenario", scenario=self.scenario)
        if self.t0 > 0:
            raise ParameterError("t0 must be <= 0", t0=self.t0)
        E = np.exp(-self.kappa * self.r0)
        if not E > 2 * self.ell:
            raise ParameterError("exp(-kappa r0) must exceed 2L/s1", E=E, two_ell=2 * self.ell)
        p0 = -np.log(E - 2 * self.ell) / self.kappa
        if abs(p0 - self.p0) > 1e-9 * max(1.0, abs(p0)):
            raise ParameterError("p0 does not satisfy its defining relation with r0", p0=self.p0, expected=p0)
        if not self.p0 < -self.delta:
            raise ParameterError("p0 must be below -delta", p0=self.p0, delta=self.delta)

    @property
    def ell(self) -> float:
        return self.L / self.s1

    @property
    def E(self) -> float:
        return float(np.exp(-self.kappa * self.r0))

    @classmethod
    def from_r0(cls, L, kappa, s1, s2, r0, delta=None, t0=0.0, scenario="theorem12") -> "ShiftParams":
        """p0 from r0; delta defaults to exp(kappa delta) = exp(-kappa r0)/4."""
        E = np.exp(-kappa * r0)
        ell = L / s1
        if not E > 2 * ell:
            raise ParameterError("exp(-kappa r0) must exceed 2L/s1", r0=r0, L=L, s1=s1, kappa=kappa)
        if delta is None:
            delta = np.log(E / 4) / kappa
            if delta <= 0:
                raise ParameterError("r0 too close to 0 for the default delta", r0=r0, kappa=kappa)
        p0 = -np.log(E - 2 * ell) / kappa
        return cls(L=float(L), kappa=float(kappa), s1=float(s1), s2=float(s2), p0=float(p0), r0=float(r0),
                   delta=float(delta), t0=float(t0), scenario=scenario)

    @classmethod
    def from_p0(cls, L, kappa, s1, s2, p0, delta=None, t0=0.0, scenario="theorem12") -> "ShiftParams":
        """r0 from p0 through exp(-kappa r0) = exp(-kappa p0) + 2L/s1."""
        r0 = -np.logaddexp(-kappa * p0, np.log(2 * L / s1)) / kappa if L > 0 else p0
        return cls.from_r0(L, kappa, s1, s2, r0, delta=delta, t0=t0, scenario=scenario)

    @staticmethod
    def max_r0(L, kappa, s1, delta) -> float:
        """Largest admissible r0 for a given delta."""
        return float(-np.log(2 * L / s1 + np.exp(kappa * delta)) / kappa)

    def with_L(self, L: float) -> "ShiftParams":
        """Same r0 with a new L (p0 and the default-style delta refreshed)."""
        E = self.E
        ell = L / self.s1
        if not E > 2 * ell + np.exp(self.kappa * self.delta):
            delta = np.log(E / 4) / self.kappa
        else:
            delta = self.delta
        return ShiftParams.from_r0(L, self.kappa, self.s1, self.s2, self.r0, delta=delta, t0=self.t0,
                                   scenario=self.scenario)

    def replace(self, **kw) -> "ShiftParams":
        d = asdict(self)
        d.update(kw)
        if "p0" not in kw and any(k in kw for k in ("L", "kappa", "s1", "r0")):
            return ShiftParams.from_r0(d["L"], d["kappa"], d["s1"], d["s2"], d["r0"], delta=d["delta"],
                                       t0=d["t0"], scenario=d["scenario"])
        return ShiftParams(**d)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


SHIFT_NAMES = ("p1", "p2", "r1", "r2")


def _log_args(params: ShiftParams, t):
    k, s1, ell = params.kappa, params.s1, params.ell
    x = np.exp(k * s1 * t)
    ep = np.exp(-k * params.p0)
    return ep + ell * (1 - x), params.E - ell * (1 - x)


def shift_eval(params: ShiftParams, which: str, t):
    """Closed-form shift value at t <= 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t > 0):
        raise DomainError("shift functions are defined for t <= 0 only", t=float(np.max(t)))
    if which not in SHIFT_NAMES:
        raise ParameterError("unknown shift", which=which)
    k, s1, s2 = params.kappa, params.s1, params.s2
    ap, ar = _log_args(params, t)
    p1 = s1 * t - np.log(ap) / k
    r1 = s1 * t - np.log(ar) / k
    if which == "p1":
        out = p1
    elif which == "r1":
        out = r1
    elif params.scenario == "theorem12":
        out = (p1 if which == "p2" else r1) + (s2 - s1) * t
    else:
        base = params.p0 + params.r0 + (s1 + s2) * t
        out = base - (p1 if which == "p2" else r1)
    return out if out.ndim else float(out)


def shift_rhs(params: ShiftParams, which: str, t, value=None):
    """Right-hand side of the defining ODE, evaluated on the closed forms."""
    L, k, s1, s2 = params.L, params.kappa, params.s1, params.s2
    p1 = shift_eval(params, "p1", t)
    r1 = shift_eval(params, "r1", t)
    flip = -1.0 if params.scenario == "theorem13" else 1.0
    if which == "p1":
        return s1 + L * np.exp(k * p1)
    if which == "r1":
        return s1 - L * np.exp(k * r1)
    if which == "p2":
        return s2 + flip * L * np.exp(k * p1)
    if which == "r2":
        return s2 - flip * L * np.exp(k * r1)
    raise ParameterError("unknown shift", which=which)


def shift_initial(params: ShiftParams, which: str) -> float:
    if which in ("p1",) or (which == "p2" and params.scenario == "theorem12"):
        return params.p0
    if which in ("r1",) or (which == "r2" and params.scenario == "theorem12"):
        return params.r0
    return params.r0 if which == "p2" else params.p0


def shift_limits(params: ShiftParams) -> Dict[str, float]:
    """lim (shift - slope * t) as t -> -inf, for each shift."""
    k, ell = params.kappa, params.ell
    lp = -np.log(np.exp(-k * params.p0) + ell) / k
    lr = -np.log(params.E - ell) / k
    if params.scenario == "theorem12":
        return {"p1": lp, "r1": lr, "p2": lp, "r2": lr}
    base = params.p0 + params.r0
    return {"p1": lp, "r1": lr, "p2": base - lp, "r2": base - lr}


def shift_slopes(params: ShiftParams) -> Dict[str, float]:
    return {"p1": params.s1, "r1": params.s1, "p2": params.s2, "r2": params.s2}


def ode_residual(params: ShiftParams, which: str, t, h: float = 1e-5):
    """Central-difference derivative minus the ODE right-hand side."""
    t = np.asarray(t, dtype=float)
    tt = np.minimum(t, -h)  # keep the stencil inside t <= 0
    d = (shift_eval(params, which, tt + h) - shift_eval(params, which, tt - h)) / (2 * h)
    return d - shift_rhs(params, which, tt)


@dataclass
class GapFit:
    N: float
    max_identity_error: float
    gap_0: float
    gap_far: float
    monotone: bool
    positive: bool

    def to_dict(self):
        return asdict(self)


def shift_gap_fit(params: ShiftParams, t_grid: Optional[Sequence[float]] = None) -> GapFit:
    """Gap identity between the p and r shifts and the constant N of the exponential bound."""
    if t_grid is None:
        t_grid = -np.geomspace(1e-3, 400.0, 400)[::-1]
        t_grid = np.append(t_grid, 0.0)
    t = np.asarray(t_grid, dtype=float)
    g1 = shift_eval(params, "p1", t) - shift_eval(params, "r1", t)
    g2 = shift_eval(params, "p2", t) - shift_eval(params, "r2", t)
    sign = 1.0 if params.scenario == "theorem12" else -1.0
    ident = float(np.max(np.abs(g1 - sign * g2)))
    x = np.exp(params.kappa * params.s1 * t)
    N = float(np.max(g1 / x))
    order = np.argsort(t)
    return GapFit(
        N=N,
        max_identity_error=ident,
        gap_0=float(g1[order][-1]),
        gap_far=float(g1[order][0]),
        monotone=bool(np.all(np.diff(g1[order]) >= -1e-15)),
        positive=bool(np.all(g1 > 0)),
    )


def kappa_condition(params: ShiftParams, eta_min: float, t):
    """Boolean mask of the kappa inequalities on both shift pairs at times t."""
    t = np.asarray(t, dtype=float)
    k = params.kappa
    ok = np.ones(t.shape, dtype=bool)
    for a_, b_ in (("p1", "p2"), ("r1", "r2")):
        s_a = shift_eval(params, a_, t)
        s_b = shift_eval(params, b_, t)
        lhs = eta_min * (s_b - s_a) / 2  # the max over eta1, eta2 of a negative quantity
        if params.s2 == params.s1 and params.scenario == "theorem12":
            # equal speeds: the pair never separates and only k s_a < 0 is left
            ok &= k * s_a < 0
        else:
            ok &= (lhs < k * s_a) & (k * s_a < 0)
    return ok


def validate_kappa(params: ShiftParams, decay, t_min: float = -1e4, n: int = 200001) -> float:
    """Largest t0 <= 0 such that the kappa inequalities hold for all t <= t0.

    ``decay`` is a DecayEstimates, a sequence of them (the minimum rate is
    used) or a plain positive number.
    """
    eta_min = _eta_min(decay)
    t = np.linspace(t_min, 0.0, n)
    ok = kappa_condition(params, eta_min, t)
    if not ok[0]:
        raise ParameterError(
            "kappa too large: the exponential-gap inequalities fail as t -> -inf; choose a smaller kappa",
            kappa=params.kappa, eta_min=eta_min, s1=params.s1, s2=params.s2)
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return 0.0
    return float(t[bad[0] - 1])


def _eta_min(decay) -> float:
    if isinstance(decay, (int, float, np.floating)):
        return float(decay)
    if hasattr(decay, "eta1"):
        return float(min(decay.eta1, decay.eta2))
    return float(min(_eta_min(d) for d in decay))


def default_kappa(decays) -> float:
    """min(eta1, eta2, rho)/4 over the given decay estimates."""
    rates = []
    for d in decays:
        rates += [d.eta1, d.eta2, d.rho]
    return float(min(rates)) / 4.0


# ---------------------------------------------------------------------------
# Phase constants
# ---------------------------------------------------------------------------


@dataclass
class PhaseConstants:
    scenario: str
    omega: float
    omega_plus: float  # -(1/k) ln(e^{-k r0} + L/s1): the competing reading
    omega1: Optional[float] = None
    omega2: Optional[float] = None  # omega1 + p0 + r0 as printed for the second scenario
    omega2_derived: Optional[float] = None  # omega1 - p0 - r0, from the closed forms
    front_phases: tuple = ()  # phases actually realized by the lower construction

    def to_dict(self):
        return asdict(self)


def phase_constants(params: ShiftParams, scenario: Optional[str] = None) -> PhaseConstants:
    scenario = scenario or params.scenario
    k, ell, E = params.kappa, params.ell, params.E
    arg = E - ell
    if not arg > 0:
        raise ParameterError("log argument exp(-kappa r0) - L/s1 must be positive", value=arg)
    omega = float(-np.log(arg) / k)
    omega_plus = float(-np.log(E + ell) / k)
    if scenario == "theorem12":
        return PhaseConstants(scenario, omega, omega_plus, front_phases=(-omega, omega, omega))
    s = params.p0 + params.r0
    return PhaseConstants(scenario, omega, omega_plus, omega1=omega, omega2=omega + s,
                          omega2_derived=omega - s, front_phases=(-omega, omega, -(omega - s)))
