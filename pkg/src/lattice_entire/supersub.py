"""Super- and sub-solutions built from three fronts and the shift system.

With z = i cos(theta) + j sin(theta) + cbar t the upper function is

    Ubar = Q(phi1(z - p1), phi2(z + p1), phi3(z + p2))

and the lower one uses r1, r2 in place of p1, p2 (Q~ and the alternative
shift system for the ``theorem13`` scenario).  Substituting the front
equations gives the exact decomposition

    F(Ubar) = L e^{kappa p1} A - H - Fc,
    F(Ulow) = -L e^{kappa r1} A - H - Fc,

where A collects the front slopes, H is the nonlocal remainder and Fc the
reaction coupling.  The scan below evaluates F directly (time derivative by
the chain rule) and uses the decomposition for diagnostics and to pick L.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import CertificationError, DomainError, ParameterError
from .fronts import FrontProfile
from .interaction import (
    ShiftParams,
    coupling_F,
    coupling_F_tilde,
    q_eval,
    q_grad,
    qtilde_eval,
    qtilde_grad,
    shift_eval,
    shift_rhs,
    validate_kappa,
)
from .lattice import Kernel, Reaction

EPS_SCAN = 1e-6
A_FLOOR = 1e-10  # ratio statistics skip points with A below this fraction of its maximum
REGIMES = (
    "z<=p1",
    "p1<=z<=0",
    "0<=z<=-p1",
    "-p1<=z<=(-p2-p1)/2",
    "(-p2-p1)/2<=z<=-p2",
    "z>=-p2",
)
SCHEMA_VERSION = "1.0"

EXPECTED_LIMITS = {
    "theorem12": ((1.0, 0.0), (0.0, "a"), ("a", 1.0)),
    "theorem13": ((1.0, 0.0), (0.0, "a"), ("a", 0.0)),
}


@dataclass
class SuperSubConfig:
    fronts: tuple  # (phi1, phi2, phi3) as views in a common direction
    kernel: Kernel
    reaction: Reaction
    params: ShiftParams
    scenario: str = "theorem12"
    n_z: int = 600
    n_t: int = 80
    t_span: float = 60.0
    margin: float = 30.0
    eta: Optional[tuple] = None  # (eta1, eta2) used in the envelopes
    q_override: Optional[str] = None  # diagnostic: "linear" replaces Q by its first argument

    def __post_init__(self):
        self.fronts = tuple(self.fronts)
        if len(self.fronts) != 3:
            raise ParameterError("exactly three fronts are required", n=len(self.fronts))
        if self.scenario not in EXPECTED_LIMITS:
            raise ParameterError("unknown scenario", scenario=self.scenario)
        if self.params.scenario != self.scenario:
            self.params = replace(self.params, scenario=self.scenario)
        c1, c2, c3 = self.speeds
        if not (c1 < c2 < c3):
            raise ParameterError("fronts must satisfy c1 < c2 < c3", c1=c1, c2=c2, c3=c3)
        d = self.fronts[0].direction
        per = self.fronts[0].periods
        for ph in self.fronts[1:]:
            if ph.direction != d or tuple(ph.periods) != tuple(per):
                raise ParameterError("fronts must share direction and periods")
        a = self.a
        for ph, lim in zip(self.fronts, EXPECTED_LIMITS[self.scenario]):
            want = tuple(a if v == "a" else v for v in lim)
            if not np.allclose(ph.limits, want, atol=1e-12):
                raise ParameterError("front limits do not match the scenario", label=ph.label,
                                     limits=ph.limits, expected=want)
        if abs(self.params.s1 - self.s1) > 1e-12 or abs(self.params.s2 - self.s2) > 1e-12:
            raise ParameterError("shift parameters use speeds inconsistent with the fronts",
                                 s1=self.params.s1, s2=self.params.s2, expected=(self.s1, self.s2))
        if self.scenario == "theorem12" and not self.s2 > self.s1:
            raise ParameterError("s2 > s1 required", s1=self.s1, s2=self.s2)

    # -- derived constants -------------------------------------------------
    @property
    def a(self) -> float:
        return float(self.reaction.a)

    @property
    def speeds(self):
        return tuple(float(ph.speed) for ph in self.fronts)

    @property
    def cbar(self) -> float:
        c1, c2, _ = self.speeds
        return 0.5 * (c1 + c2)

    @property
    def s1(self) -> float:
        c1, c2, _ = self.speeds
        return 0.5 * (c2 - c1)

    @property
    def s2(self) -> float:
        return self.speeds[2] - self.cbar

    @property
    def direction(self):
        return self.fronts[0].direction

    @property
    def periods(self):
        return tuple(self.fronts[0].periods)

    @property
    def ncell(self) -> int:
        n1, n2 = self.periods
        return n1 * n2

    @property
    def etas(self):
        if self.eta is not None:
            return tuple(self.eta)
        decays = [ph.decay for ph in self.fronts]
        if any(d is None for d in decays):
            raise ParameterError("decay estimates missing on a front; measure them or pass eta")
        return min(d.eta1 for d in decays), min(d.eta2 for d in decays)

    def with_params(self, params: ShiftParams) -> "SuperSubConfig":
        return replace(self, params=params)

    def t_grid(self, t0: Optional[float] = None, n_t: Optional[int] = None, span: Optional[float] = None):
        """Geometric grid from t0 down to t0 - span."""
        t0 = self.params.t0 if t0 is None else t0
        n_t = n_t or self.n_t
        span = self.t_span if span is None else span
        return t0 - (np.geomspace(1.0, span + 1.0, n_t) - 1.0)

    def summary(self) -> dict:
        c1, c2, c3 = self.speeds
        return {
            "scenario": self.scenario,
            "speeds": [c1, c2, c3],
            "cbar": self.cbar,
            "s1": self.s1,
            "s2": self.s2,
            "fronts": [ph.label for ph in self.fronts],
            "front_hashes": [ph.content_hash() for ph in self.fronts],
            "params": self.params.to_dict(),
            "n_z": self.n_z,
            "n_t": self.n_t,
            "t_span": self.t_span,
            "margin": self.margin,
            "eta": list(self.etas),
        }


# ---------------------------------------------------------------------------
# Pointwise evaluation
# ---------------------------------------------------------------------------


def _q_funcs(config: SuperSubConfig):
    if config.scenario == "theorem13":
        return qtilde_eval, qtilde_grad, coupling_F_tilde
    return q_eval, q_grad, coupling_F


def _shift_names(which: str):
    if which == "upper":
        return "p1", "p2"
    if which == "lower":
        return "r1", "r2"
    raise ParameterError("which must be 'upper' or 'lower'", which=which)


def _cells(config: SuperSubConfig, ncopies: int):
    n1, n2 = config.periods
    c = np.arange(config.ncell)
    return np.repeat(c // n2, ncopies), np.repeat(c % n2, ncopies)


def _compose(config: SuperSubConfig, ci, cj, z, sa, sb):
    """Front values/derivatives at moving-frame coordinate z for one shift pair."""
    ph1, ph2, ph3 = config.fronts
    v1, d1 = ph1.evaluate(ci, cj, z - sa)
    v2, d2 = ph2.evaluate(ci, cj, z + sa)
    v3, d3 = ph3.evaluate(ci, cj, z + sb)
    a = config.a
    # clip round-off excursions of the interpolants into the Q domain
    v1 = np.clip(v1, 0.0, 1.0)
    v2 = np.clip(v2, 0.0, a)
    v3 = np.clip(v3, a, 1.0) if config.scenario == "theorem12" else np.clip(v3, 0.0, a)
    return (v1, v2, v3), (d1, d2, d3)


def _qvalue(config, v):
    qe, _, _ = _q_funcs(config)
    if config.q_override == "linear":
        return np.asarray(v[0], dtype=float).copy()
    return np.asarray(qe(*v, config.a), dtype=float)


def upper_lower_value(config: SuperSubConfig, which: str, i, j, t: float):
    _check_t(config, t)
    na, nb = _shift_names(which)
    sa = shift_eval(config.params, na, t)
    sb = shift_eval(config.params, nb, t)
    i = np.asarray(i)
    j = np.asarray(j)
    z = config.direction.project(i, j) + config.cbar * t
    v, _ = _compose(config, i, j, np.asarray(z, dtype=float), sa, sb)
    try:
        out = _qvalue(config, v)
    except DomainError as exc:
        raise DomainError(str(exc), i=i.tolist(), j=j.tolist(), t=t) from exc
    return out if out.ndim else float(out)


def build_upper(config: SuperSubConfig, i, j, t: float):
    """Ubar_{i,j}(t)."""
    return upper_lower_value(config, "upper", i, j, t)


def build_lower(config: SuperSubConfig, i, j, t: float):
    """Ulow_{i,j}(t)."""
    return upper_lower_value(config, "lower", i, j, t)


def _check_t(config: SuperSubConfig, t):
    if np.any(np.asarray(t) > config.params.t0 + 1e-12):
        raise DomainError("time beyond t0: the pair is only constructed for t <= t0",
                          t=float(np.max(t)), t0=config.params.t0)


@dataclass
class PointTerms:
    """All residual ingredients at a batch of (cell, z) points and one time."""

    t: float
    z: np.ndarray
    ci: np.ndarray
    cj: np.ndarray
    U: np.ndarray
    F: np.ndarray
    A: np.ndarray
    H: np.ndarray
    Fc: np.ndarray
    regime: np.ndarray
    half_bound: np.ndarray
    qgrad: tuple
    env: np.ndarray
    drive: float  # L e^{kappa s}


def regime_index(z, sa, sb):
    """Index into REGIMES for moving coordinate z given the shift pair."""
    z = np.asarray(z, dtype=float)
    mid = 0.5 * (-sb - sa)
    edges = [sa, 0.0, -sa, mid, -sb]
    return np.searchsorted(np.asarray(edges), z, side="left")


def point_terms(config: SuperSubConfig, which: str, z, t: float, ci=None, cj=None) -> PointTerms:
    """Residual F and its decomposition at moving-frame points z (all cells if ci is None)."""
    _check_t(config, t)
    z = np.asarray(z, dtype=float)
    if ci is None:
        ci, cj = _cells(config, z.size)
        z = np.tile(z, config.ncell)
    P = config.params
    na, nb = _shift_names(which)
    sa = float(shift_eval(P, na, t))
    sb = float(shift_eval(P, nb, t))
    da = float(shift_rhs(P, na, t))
    db = float(shift_rhs(P, nb, t))
    a = config.a
    qe, qg, cf = _q_funcs(config)
    kernel, f = config.kernel, config.reaction
    d = config.direction
    cbar = config.cbar
    sgn3 = 1.0 if config.scenario == "theorem12" else -1.0

    v, dv = _compose(config, ci, cj, z, sa, sb)
    if config.q_override == "linear":
        U = v[0].copy()
        g = (np.ones_like(z), np.zeros_like(z), np.zeros_like(z))
        Fc = f.value(U, ci, cj) - f.value(v[0], ci, cj)
    else:
        U = np.asarray(qe(*v, a), dtype=float)
        G = qg(*v, a)
        g = (G.qy, G.qz, G.qw)
        Fc = cf(*v, a, f, ci, cj, q=U, grad=G)
    # nonlocal parts
    JU = np.zeros_like(z)
    Jphi = [np.zeros_like(z) for _ in range(3)]
    for k1, k2, w in kernel.support():
        zn = z - d.project(k1, k2)
        vn, _ = _compose(config, ci - k1, cj - k2, zn, sa, sb)
        Un = vn[0] if config.q_override == "linear" else np.asarray(qe(*vn, a), dtype=float)
        JU += w * Un
        for k in range(3):
            Jphi[k] += w * vn[k]
    dtU = g[0] * dv[0] * (cbar - da) + g[1] * dv[1] * (cbar + da) + g[2] * dv[2] * (cbar + db)
    F = dtU - (JU - U + f.value(U, ci, cj))
    H = (JU - U) - sum(g[k] * (Jphi[k] - v[k]) for k in range(3))
    A = -g[0] * dv[0] + g[1] * dv[1] + sgn3 * g[2] * dv[2]
    reg = regime_index(z, sa, sb)
    t1 = g[0] * np.abs(dv[0])
    t2 = g[1] * np.abs(dv[1])
    t3 = g[2] * np.abs(dv[2])
    half = np.select([reg == 0, reg <= 2, reg <= 4], [0.5 * t1, 0.5 * (t1 + t2), 0.5 * (t2 + t3)], 0.5 * t3)
    eta1, eta2 = config.etas
    gap = sb - sa
    with np.errstate(under="ignore"):
        env_left = np.exp(eta1 * sa) + np.exp(eta1 * sb)
        env_mid = np.exp(eta2 * sa) + np.exp(eta1 * gap / 2)
        env_right = np.exp(eta2 * sa) + np.exp(eta2 * gap / 2)
    if config.scenario == "theorem13":
        gap = abs(gap)
        env_mid = np.exp(eta2 * sa) + np.exp(-eta1 * gap / 2)
        env_right = np.exp(eta2 * sa) + np.exp(-eta2 * gap / 2)
    env = np.select([z <= 0, z <= 0.5 * (-sb - sa)], [env_left, env_mid], env_right)
    drive = P.L * np.exp(P.kappa * sa)
    return PointTerms(t=t, z=z, ci=ci, cj=cj, U=U, F=F, A=A, H=H, Fc=Fc, regime=reg, half_bound=half,
                      qgrad=g, env=np.broadcast_to(env, z.shape).astype(float), drive=float(drive))


@dataclass
class AValue:
    value: float
    regime: str
    half_bound: float
    bound_holds: bool


def A_eval(config: SuperSubConfig, i, j, t: float, which: str = "upper") -> AValue:
    z = float(config.direction.project(i, j) + config.cbar * t)
    n1, n2 = config.periods
    pt = point_terms(config, which, np.array([z]), t, ci=np.array([i % n1]), cj=np.array([j % n2]))
    A = float(pt.A[0])
    if not A > 0:
        raise CertificationError("A is not positive", i=i, j=j, t=t, A=A)
    hb = float(pt.half_bound[0])
    return AValue(A, REGIMES[int(pt.regime[0])], hb, bool(A >= hb - 1e-15))


# ---------------------------------------------------------------------------
# Scans
# ---------------------------------------------------------------------------


def z_window(config: SuperSubConfig, t: float, n_z: Optional[int] = None):
    """Moving-frame sample points covering all three fronts of both functions."""
    P = config.params
    s = [float(shift_eval(P, k, t)) for k in ("p1", "r1", "p2", "r2")]
    lo = min(s[0], s[1]) - config.margin
    hi = max(-s[0], -s[1], -s[2], -s[3]) + config.margin
    return np.linspace(lo, hi, n_z or config.n_z)


@dataclass
class ScanPoint:
    t: float
    z: float
    i: int
    j: int
    F_upper: float
    F_lower: float
    A: float
    regime: str


@dataclass
class ResidualReport:
    min_F_upper: float
    max_F_lower: float
    argmin_upper: dict
    argmax_lower: dict
    min_A: float
    regime_bounds_ok: bool
    regime_violations: int
    M1: float
    M2: float
    M1_by_regime: Dict[str, float]
    M2_by_regime: Dict[str, float]
    skipped: int
    L: float
    eps_scan: float
    n_points: int
    t_range: tuple
    passed: bool
    rows: List[ScanPoint] = field(default_factory=list, repr=False)
    config_summary: dict = field(default_factory=dict)

    def to_dict(self, include_rows: bool = False) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "rows"}
        d["schema_version"] = SCHEMA_VERSION
        d["t_range"] = list(self.t_range)
        if include_rows:
            d["rows"] = [asdict(r) for r in self.rows]
        return d

    def to_json(self, path=None, **kw) -> str:
        s = json.dumps(self.to_dict(**kw), indent=2, sort_keys=True, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(s)
        return s

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "t", "F_upper", "F_lower", "A", "regime"])
            for r in self.rows:
                w.writerow([r.i, r.j, repr(r.t), repr(r.F_upper), repr(r.F_lower), repr(r.A), r.regime])


def _site_of(config: SuperSubConfig, z: float, t: float, ci: int, cj: int):
    """A lattice site in cell (ci, cj) whose projection is nearest z - cbar t."""
    d = config.direction
    xi = z - config.cbar * t
    n1, n2 = config.periods
    if d.is_axis:
        if d.axis == 0:
            i = int(np.round(xi * d.cos))
            i += (ci - i) % n1
            return i, cj
        j = int(np.round(xi * d.sin))
        j += (cj - j) % n2
        return ci, j
    m = int(np.round(xi * d.norm))
    return int(m * d.p), int(m * d.q)


def _ratio_stats(pt: PointTerms, acc_h, acc_f, skipped):
    # far out in the tails A, H and F are all at roundoff level; their ratios carry no information
    ok = (pt.env > 1e-300) & (pt.A > A_FLOOR * float(np.max(pt.A)))
    skipped += int(np.count_nonzero(~ok))
    rh = np.abs(pt.H[ok] / pt.A[ok]) / pt.env[ok]
    rf = np.abs(pt.Fc[ok] / pt.A[ok]) / pt.env[ok]
    reg = pt.regime[ok]
    for r in range(len(REGIMES)):
        m = reg == r
        if np.any(m):
            acc_h[r] = max(acc_h[r], float(np.max(rh[m])))
            acc_f[r] = max(acc_f[r], float(np.max(rf[m])))
    return skipped


def hf_ratio_bounds(config: SuperSubConfig, t_grid=None, n_z: Optional[int] = None):
    """Empirical sup of |H/A| and |Fc/A| relative to the regime envelopes.

    Returns (M1, M2, per-regime dicts, skipped count).
    """
    t_grid = config.t_grid() if t_grid is None else np.asarray(t_grid)
    acc_h = [0.0] * len(REGIMES)
    acc_f = [0.0] * len(REGIMES)
    skipped = 0
    for t in t_grid:
        z = z_window(config, t, n_z)
        for which in ("upper", "lower"):
            pt = point_terms(config, which, z, float(t))
            skipped = _ratio_stats(pt, acc_h, acc_f, skipped)
    return (max(acc_h), max(acc_f), dict(zip(REGIMES, acc_h)), dict(zip(REGIMES, acc_f)), skipped)


def residual_scan(config: SuperSubConfig, t_grid=None, n_z: Optional[int] = None, eps: float = EPS_SCAN,
                  keep_rows: bool = True) -> ResidualReport:
    t_grid = config.t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    _check_t(config, t_grid)
    best_u = (np.inf, None)
    best_l = (-np.inf, None)
    min_A = np.inf
    viol = 0
    acc_h = [0.0] * len(REGIMES)
    acc_f = [0.0] * len(REGIMES)
    skipped = 0
    rows = []
    npts = 0
    for t in t_grid:
        t = float(t)
        z = z_window(config, t, n_z)
        up = point_terms(config, "upper", z, t)
        lo = point_terms(config, "lower", z, t)
        npts += up.z.size
        for pt, sign in ((up, 1), (lo, -1)):
            min_A = min(min_A, float(np.min(pt.A)))
            viol += int(np.count_nonzero(pt.A < pt.half_bound - 1e-14 * (1 + np.abs(pt.half_bound))))
            skipped = _ratio_stats(pt, acc_h, acc_f, skipped)
        k = int(np.argmin(up.F))
        if up.F[k] < best_u[0]:
            best_u = (float(up.F[k]), (t, float(up.z[k]), int(up.ci[k]), int(up.cj[k])))
        k = int(np.argmax(lo.F))
        if lo.F[k] > best_l[0]:
            best_l = (float(lo.F[k]), (t, float(lo.z[k]), int(lo.ci[k]), int(lo.cj[k])))
        if keep_rows:
            ku = int(np.argmin(up.F))
            kl = int(np.argmax(lo.F))
            for k in sorted({ku, kl}):
                i, j = _site_of(config, float(up.z[k]), t, int(up.ci[k]), int(up.cj[k]))
                rows.append(ScanPoint(t, float(up.z[k]), i, j, float(up.F[k]), float(lo.F[k]), float(up.A[k]),
                                      REGIMES[int(up.regime[k])]))

    def loc(b):
        t, z, ci, cj = b[1]
        i, j = _site_of(config, z, t, ci, cj)
        return {"t": t, "z": z, "i": i, "j": j}

    M1, M2 = max(acc_h), max(acc_f)
    passed = bool(best_u[0] >= -eps and best_l[0] <= eps and min_A > 0 and viol == 0
                  and config.params.L > M1 + M2)
    return ResidualReport(
        min_F_upper=best_u[0], max_F_lower=best_l[0], argmin_upper=loc(best_u), argmax_lower=loc(best_l),
        min_A=float(min_A), regime_bounds_ok=viol == 0, regime_violations=viol,
        M1=M1, M2=M2, M1_by_regime=dict(zip(REGIMES, acc_h)),
        M2_by_regime=dict(zip(REGIMES, acc_f)), skipped=skipped, L=config.params.L, eps_scan=eps,
        n_points=npts, t_range=(float(np.min(t_grid)), float(np.max(t_grid))), passed=passed, rows=rows,
        config_summary=config.summary(),
    )


# ---------------------------------------------------------------------------
# L selection
# ---------------------------------------------------------------------------


def refresh_params(config: SuperSubConfig, L: float) -> ShiftParams:
    """Shift constants for a new L with p0 held fixed; r0 and t0 follow."""
    P = config.params
    params = ShiftParams.from_p0(L, P.kappa, P.s1, P.s2, P.p0, delta=P.delta, scenario=config.scenario)
    t0 = validate_kappa(params, min(config.etas))
    return replace(params, t0=min(t0, P.t0))


@dataclass
class ChooseLResult:
    config: SuperSubConfig
    report: ResidualReport
    trace: list

    @property
    def L(self) -> float:
        return self.config.params.L


def choose_L(config: SuperSubConfig, max_iter: int = 8, factor: float = 1.5, growth: float = 2.0,
             t_grid=None, n_z: Optional[int] = None) -> ChooseLResult:
    """Fixed-point selection of L: L <- factor (M1 + M2) until the scan passes."""
    trace = []
    cfg = config
    for it in range(max_iter):
        rep = residual_scan(cfg, t_grid=t_grid, n_z=n_z)
        trace.append({"iteration": it, "L": cfg.params.L, "M1": rep.M1, "M2": rep.M2,
                      "min_F_upper": rep.min_F_upper, "max_F_lower": rep.max_F_lower, "passed": rep.passed})
        if rep.passed:
            return ChooseLResult(cfg, rep, trace)
        L_new = factor * (rep.M1 + rep.M2)
        if L_new <= cfg.params.L:
            L_new = growth * max(cfg.params.L, 1e-3)
        cfg = cfg.with_params(refresh_params(cfg, L_new))
    raise CertificationError("L selection did not produce a passing scan", trace=trace)


# ---------------------------------------------------------------------------
# Gap bound
# ---------------------------------------------------------------------------


@dataclass
class GapReport:
    times: np.ndarray
    gaps: np.ndarray
    C: float
    rate: float
    positive: bool
    envelope_ok: bool

    def to_dict(self):
        return {"times": self.times.tolist(), "gaps": self.gaps.tolist(), "C": self.C, "rate": self.rate,
                "positive": self.positive, "envelope_ok": self.envelope_ok}


def sup_gap(config: SuperSubConfig, t: float, n_z: Optional[int] = None) -> float:
    z = z_window(config, t, n_z)
    ci, cj = _cells(config, z.size)
    zz = np.tile(z, config.ncell)
    P = config.params
    vals = []
    for which in ("upper", "lower"):
        na, nb = _shift_names(which)
        v, _ = _compose(config, ci, cj, zz, float(shift_eval(P, na, t)), float(shift_eval(P, nb, t)))
        vals.append(_qvalue(config, v))
    g = vals[0] - vals[1]
    if np.any(g < 0):
        k = int(np.argmin(g))
        raise CertificationError("upper function below lower function", t=t, z=float(zz[k]), gap=float(g[k]))
    return float(np.max(g))


def gap_bound(config: SuperSubConfig, t_grid=None, n_z: Optional[int] = None) -> GapReport:
    t = config.t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    gaps = np.array([sup_gap(config, float(s), n_z) for s in t])
    rate = config.params.kappa * config.s1
    C = float(np.max(gaps * np.exp(-rate * t)))
    env = C * np.exp(rate * t)
    return GapReport(t, gaps, C, rate, bool(np.all(gaps > 0)), bool(np.all(gaps <= env * (1 + 1e-12))))
