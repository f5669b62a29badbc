"""Pulsating traveling fronts of the lattice system.

A front is stored as an *increasing* table T_c(eta) per periodicity cell c,
satisfying the profile equation in a "table direction" d with speed c_T:

    c_T T_c'(eta) = sum_k J(k) T_{c-k}(eta - k.d) - T_c(eta) + f_c(T_c(eta)).

A :class:`FrontProfile` exposes the table either directly or through a
reflection eta -> -xi, which turns it into a front in direction -d with
speed -c_T.  The decreasing fronts 1 -> 0 and a -> 0 are such reflected views.

Tables are sampled on a uniform grid whose spacing divides the projected
kernel offsets, solved by Newton's method with exponential-tail ghost values
outside the grid, and interpolated by quintic Hermite polynomials built from
values, first derivatives and equation-consistent second derivatives.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import optimize, sparse
from scipy.interpolate import PchipInterpolator
from scipy.sparse.linalg import splu

from .errors import (
    AnchoringError,
    ConvergenceError,
    InfeasibleSpeedError,
    InsufficientRangeError,
    ParameterError,
    SpeedEstimationError,
)
from .lattice import (
    Boundary,
    BranchReaction,
    Direction,
    Kernel,
    LatticeState,
    PeriodicNonlinearity,
    Reaction,
    integrate,
    stability_bound,
)

# eighth-order central first-derivative stencil, offsets -4..4
_FD8 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
_FD_HALF = 4

DEFAULT_DXI = 0.05
TAIL_DEPTH = 30.0  # grid extends until the linear tail has decayed by e^-30
MAX_EXTENT = 400.0
MIN_EXTENT = 12.0


# ---------------------------------------------------------------------------
# Linear tail analysis
# ---------------------------------------------------------------------------


def cell_rate(reaction: Reaction, u: float) -> np.ndarray:
    """Per-cell linearisation f_c'(u) as a flat array in cell order."""
    n1, n2 = reaction.periods
    ci, cj = np.divmod(np.arange(n1 * n2), n2)
    return np.asarray(reaction.deriv(np.full(n1 * n2, float(u)), ci, cj), dtype=float)


def _symbol_matrix(kernel: Kernel, direction: Direction, periods, lam: float, rates) -> np.ndarray:
    """Matrix of the linearised operator acting on e^{lam xi} psi_c."""
    n1, n2 = periods
    n = n1 * n2
    m = np.zeros((n, n))
    for c in range(n):
        ci, cj = divmod(c, n2)
        for k1, k2, w in kernel.support():
            c2 = ((ci - k1) % n1) * n2 + (cj - k2) % n2
            m[c, c2] += w * math.exp(-lam * direction.project(k1, k2))
        m[c, c] += -1.0 + rates[c]
    return m


def principal_symbol(kernel: Kernel, direction: Direction, periods, lam: float, rates) -> float:
    """Principal eigenvalue of the linearised cell operator at exponent lam."""
    m = _symbol_matrix(kernel, direction, periods, lam, rates)
    if m.shape == (1, 1):
        return float(m[0, 0])
    return float(np.max(np.linalg.eigvals(m).real))


def _dispersion(kernel, direction, periods, rates, speed):
    """h(lam) = Lambda(lam) - speed*lam; tails e^{lam xi} need h(lam) = 0."""
    return lambda lam: principal_symbol(kernel, direction, periods, lam, rates) - speed * lam


def tail_rate(kernel, direction, periods, rates, speed, side: str, smaller: bool = True) -> float:
    """Positive decay rate of the tail at ``side`` ('left' or 'right').

    Left tail: T - lo ~ e^{lam eta} as eta -> -inf.  Right tail: hi - T ~
    e^{-mu eta} as eta -> +inf, i.e. exponent -mu in the same relation.  For an
    unstable end state (principal rate > 0) there are two roots and the smaller
    one is returned unless ``smaller`` is False.
    """
    sgn = 1.0 if side == "left" else -1.0
    h = _dispersion(kernel, direction, periods, rates, speed)

    def g(x):
        return h(sgn * x)

    g0 = g(0.0)
    if g0 < 0:  # stable end: single positive root
        hi = 1.0
        while g(hi) < 0:
            hi *= 2.0
            if hi > 1e4:
                raise ConvergenceError("no tail root found", side=side, speed=speed)
        return float(optimize.brentq(g, 0.0, hi, xtol=1e-14, rtol=1e-14))
    if g0 == 0:
        raise ParameterError("degenerate end state (zero linear rate)")
    # unstable end: g convex, positive at 0; find its minimum first
    xs = np.geomspace(1e-4, 60.0, 400)
    vals = np.array([g(x) for x in xs])
    k = int(np.argmin(vals))
    if vals[k] >= 0:
        raise InfeasibleSpeedError("speed below linear critical speed: no real tail exponent", speed=speed)
    lo_b = xs[k - 1] if k > 0 else 1e-6
    hi_b = xs[k + 1] if k + 1 < xs.size else xs[k]
    xm = optimize.minimize_scalar(g, bounds=(lo_b, hi_b), method="bounded", options={"xatol": 1e-12}).x
    if g(xm) >= 0:
        xm = xs[k]
    if smaller:
        return float(optimize.brentq(g, 0.0, xm, xtol=1e-14, rtol=1e-14))
    top = xm * 2.0
    while g(top) < 0:
        top *= 2.0
    return float(optimize.brentq(g, xm, top, xtol=1e-14, rtol=1e-14))


@dataclass(frozen=True)
class CriticalSpeed:
    linear: float
    lam_star: float
    linearly_determined: bool
    empirical: Optional[float]

    @property
    def value(self) -> float:
        if self.linearly_determined or self.empirical is None:
            return self.linear
        return max(self.linear, self.empirical)


def _golden_min(fun, lo=1e-4, hi=60.0):
    xs = np.geomspace(lo, hi, 240)
    vals = np.array([fun(x) for x in xs])
    k = int(np.clip(np.argmin(vals), 1, xs.size - 2))
    res = optimize.minimize_scalar(fun, bracket=(xs[k - 1], xs[k], xs[k + 1]), method="golden", tol=1e-12)
    return float(res.x), float(res.fun)


def kpp_condition(reaction: BranchReaction, samples: int = 4001) -> bool:
    """g(v) <= g'(0) v on [0, top] in every cell (linear determinacy)."""
    n1, n2 = reaction.periods
    v = np.linspace(0.0, reaction.top, samples)[1:]
    for x in range(n1):
        for y in range(n2):
            r = float(reaction.deriv(np.array([0.0]), x, y)[0])
            if np.any(reaction.value(v, x, y) > r * v + 1e-14):
                return False
    return True


def critical_speed_info(kernel: Kernel, f: PeriodicNonlinearity, branch: str, direction: Direction,
                        empirical: bool = True) -> CriticalSpeed:
    """Minimal speed of the reduced monostable system on a branch.

    The linear value min_lam Lambda(lam)/lam is computed by golden-section
    search (Lambda is the principal eigenvalue of the cell symbol; for a
    homogeneous medium Lambda(lam) = sum J e^{-lam k.e} - 1 + g'(0)).  When the
    branch fails the KPP-type secant condition the front may be pushed, so the
    spreading speed is additionally measured by integration.
    """
    g = f.branch(branch)
    rates = cell_rate(g, 0.0)
    if np.max(rates) <= 0:
        raise ParameterError("branch is not monostable: g'(0) <= 0", branch=branch)
    periods = f.periods
    lam, val = _golden_min(lambda x: principal_symbol(kernel, direction, periods, x, rates) / x)
    det = kpp_condition(g)
    emp = None
    if not det and empirical:
        emp = spreading_speed(kernel, g, direction)
    return CriticalSpeed(val, lam, det, emp)


def critical_speed(kernel: Kernel, f: PeriodicNonlinearity, branch: str, direction: Direction) -> float:
    return critical_speed_info(kernel, f, branch, direction).value


# ---------------------------------------------------------------------------
# Relaxation (direct simulation of a step datum)
# ---------------------------------------------------------------------------


@dataclass
class RelaxationResult:
    speed: float
    r2: float
    times: np.ndarray
    positions: np.ndarray
    shape_changes: list
    final: LatticeState
    direction: Direction
    level: float


def _quasi1d_window(direction: Direction, periods, length: int, kernel: Kernel):
    """Window shape and boundary for a quasi one-dimensional run along an axis."""
    if not direction.is_axis:
        raise ParameterError("direct simulation supports axis directions only", p=direction.p, q=direction.q)
    n1, n2 = periods
    ax = direction.axis
    trans_period = n2 if ax == 0 else n1
    need = 2 * kernel.half_width + 1
    width = trans_period * max(1, math.ceil(need / trans_period))
    along_period = n1 if ax == 0 else n2
    length = along_period * math.ceil(length / along_period)
    shape = (length, width) if ax == 0 else (width, length)
    return ax, shape


def _crossing(u_row: np.ndarray, proj: np.ndarray, level: float) -> float:
    """Projection coordinate where an increasing-in-proj row crosses ``level``."""
    order = np.argsort(proj)
    x = proj[order]
    v = u_row[order]
    idx = np.nonzero((v[:-1] < level) & (v[1:] >= level))[0]
    if idx.size == 0:
        return float("nan")
    k = idx[-1]
    return float(x[k] + (level - v[k]) * (x[k + 1] - x[k]) / (v[k + 1] - v[k]))


def relax_front(kernel: Kernel, reaction: Reaction, direction: Direction, lo: float, hi: float,
                level: float, t_total: float = 200.0, dt: float = 0.05, length: int = 200,
                sample_every: float = 1.0) -> RelaxationResult:
    """Integrate a step datum (lo behind, hi ahead in the direction) and fit the speed.

    The window is re-centred on the front whenever it drifts by more than a
    quarter of the window; the speed is the negated slope of the level-crossing
    position over the last half of the run (u = T(x.d + c t)).
    """
    ax, shape = _quasi1d_window(direction, reaction.periods, length, kernel)
    sgn = direction.p if ax == 0 else direction.q  # +1 or -1
    along = shape[ax]
    i0 = -along // 2 if ax == 0 else 0
    j0 = -along // 2 if ax == 1 else 0
    u = np.empty(shape)
    ii = np.arange(i0, i0 + shape[0])[:, None]
    jj = np.arange(j0, j0 + shape[1])[None, :]
    proj = direction.project(ii, jj)
    u[...] = np.where(proj >= 0, hi, lo)
    low_end, high_end = (lo, hi) if sgn > 0 else (hi, lo)
    boundary = Boundary(ax, low_end, high_end)
    state = LatticeState(u, i0, j0, 0.0, boundary)
    times, positions, shapes = [], [], []
    offset = 0
    t = 0.0
    prev = None
    n_chunks = int(round(t_total / sample_every))
    for _ in range(n_chunks):
        traj = integrate(state, kernel, reaction, dt, t + sample_every, check_range=False)
        t += sample_every
        uu = traj.fields[-1]
        ii = np.arange(state.i0, state.i0 + shape[0])[:, None]
        jj = np.arange(state.j0, state.j0 + shape[1])[None, :]
        proj = direction.project(ii, jj)
        row = uu[:, 0] if ax == 0 else uu[0, :]
        prow = proj[:, 0] if ax == 0 else proj[0, :]
        x = _crossing(row, prow, level)
        if not np.isfinite(x):
            raise ConvergenceError("front left the window or vanished", t=t)
        times.append(t)
        positions.append(x)
        if prev is not None:
            shapes.append(float(np.max(np.abs(np.sort(row) - np.sort(prev)))))
        prev = row.copy()
        # re-centre: move the window so the crossing sits mid-window
        centre = 0.5 * (prow.min() + prow.max())
        drift = x - centre
        if abs(drift) > along / 4:
            s = int(round(drift)) * (1 if sgn > 0 else -1)
            new = np.empty_like(uu)
            if ax == 0:
                if s > 0:
                    new[:-s] = uu[s:]
                    new[-s:] = high_end
                else:
                    new[-s:] = uu[:s]
                    new[:-s] = low_end
                state = LatticeState(new, state.i0 + s, state.j0, t, boundary)
            else:
                if s > 0:
                    new[:, :-s] = uu[:, s:]
                    new[:, -s:] = high_end
                else:
                    new[:, -s:] = uu[:, :s]
                    new[:, :-s] = low_end
                state = LatticeState(new, state.i0, state.j0 + s, t, boundary)
            offset += s
        else:
            state = LatticeState(uu, state.i0, state.j0, t, boundary)
    times = np.asarray(times)
    positions = np.asarray(positions)
    half = times >= times[-1] / 2
    tt, xx = times[half], positions[half]
    slope, icpt = np.polyfit(tt, xx, 1)
    resid = xx - (slope * tt + icpt)
    ss = float(np.sum((xx - xx.mean()) ** 2))
    if ss < 1e-12 * max(1, tt.size):
        r2 = 1.0
    else:
        r2 = 1.0 - float(np.sum(resid ** 2)) / ss
    return RelaxationResult(-float(slope), r2, times, positions, shapes, state, direction, level)


def spreading_speed(kernel: Kernel, reaction: BranchReaction, direction: Direction, t_total: float = 160.0) -> float:
    """Empirical spreading speed of the reduced monostable system."""
    res = relax_front(kernel, reaction, direction, 0.0, reaction.top, 0.5 * reaction.top, t_total=t_total,
                      dt=min(0.05, 0.5 * stability_bound(reaction)), length=240)
    if res.r2 < 0.999:
        raise SpeedEstimationError("spreading speed fit failed", r2=res.r2)
    return res.speed


# ---------------------------------------------------------------------------
# Discretised profile operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfileGrid:
    xi0: float
    dxi: float
    n: int
    m: int  # nodes per projected lattice unit 1/|(p, q)|

    @property
    def nodes(self) -> np.ndarray:
        return self.xi0 + self.dxi * np.arange(self.n)

    @property
    def xi1(self) -> float:
        return self.xi0 + self.dxi * (self.n - 1)

    def index_of(self, xi: float) -> int:
        k = int(round((xi - self.xi0) / self.dxi))
        if not 0 <= k < self.n or abs(self.xi0 + k * self.dxi - xi) > 1e-9 * self.dxi:
            raise ParameterError("value is not a grid node", xi=xi)
        return k


def make_grid(direction: Direction, left: float, right: float, dxi: float = DEFAULT_DXI) -> ProfileGrid:
    """Uniform grid containing 0 whose spacing divides 1/|(p, q)|."""
    unit = 1.0 / direction.norm
    m = max(1, int(round(unit / dxi)))
    h = unit / m
    nl = int(math.ceil(left / h))
    nr = int(math.ceil(right / h))
    return ProfileGrid(-nl * h, h, nl + nr + 1, m)


class ProfileOperator:
    """Sparse discretisation of the profile equation with exponential ghosts."""

    def __init__(self, kernel: Kernel, reaction: Reaction, direction: Direction, grid: ProfileGrid,
                 lo: float, hi: float, lam_left: float, lam_right: float):
        self.kernel, self.reaction, self.direction, self.grid = kernel, reaction, direction, grid
        self.lo, self.hi = float(lo), float(hi)
        self.lam_left, self.lam_right = float(lam_left), float(lam_right)
        n1, n2 = reaction.periods
        self.periods = (n1, n2)
        nc = n1 * n2
        self.ncell = nc
        n = grid.n
        self.shifts = []
        for k1, k2, w in kernel.support():
            off = -grid.m * int(direction.integer_projection(k1, k2))
            self.shifts.append((k1, k2, w, off))
        G = max(abs(s[3]) for s in self.shifts) + _FD_HALF + 1
        self.G = G
        ne = n + 2 * G
        h = grid.dxi
        # extension: ext = P phi + b
        rows, cols, vals = [], [], []
        b = np.zeros(nc * ne)
        for c in range(nc):
            base_e, base = c * ne, c * n
            for k in range(n):
                rows.append(base_e + G + k)
                cols.append(base + k)
                vals.append(1.0)
            for g in range(1, G + 1):
                el = math.exp(-self.lam_left * g * h)
                rows.append(base_e + G - g)
                cols.append(base)
                vals.append(el)
                b[base_e + G - g] = self.lo * (1.0 - el)
                er = math.exp(-self.lam_right * g * h)
                rows.append(base_e + G + n - 1 + g)
                cols.append(base + n - 1)
                vals.append(er)
                b[base_e + G + n - 1 + g] = self.hi * (1.0 - er)
        P = sparse.csr_matrix((vals, (rows, cols)), shape=(nc * ne, nc * n))
        # derivative and nonlocal sum on the extended layout
        dr, dc, dv = [], [], []
        sr, sc, sv = [], [], []
        node = np.arange(n)
        for c in range(nc):
            ci, cj = divmod(c, n2)
            r = c * n + node
            for o in range(-_FD_HALF, _FD_HALF + 1):
                if _FD8[o + _FD_HALF] != 0:
                    dr.append(r)
                    dc.append(c * ne + G + node + o)
                    dv.append(np.full(n, _FD8[o + _FD_HALF] / h))
            for k1, k2, w, off in self.shifts:
                c2 = ((ci - k1) % n1) * n2 + (cj - k2) % n2
                sr.append(r)
                sc.append(c2 * ne + G + node + off)
                sv.append(np.full(n, w))
        D = sparse.csr_matrix((np.concatenate(dv), (np.concatenate(dr), np.concatenate(dc))), shape=(nc * n, nc * ne))
        S = sparse.csr_matrix((np.concatenate(sv), (np.concatenate(sr), np.concatenate(sc))), shape=(nc * n, nc * ne))
        self.P, self.b = P, b
        self.D = (D @ P).tocsr()
        self.Db = D @ b
        self.S = (S @ P).tocsr()
        self.Sb = S @ b
        self.Dext = D
        self.Sext = S
        ci, cj = np.divmod(np.arange(nc), n2)
        self.ci = np.repeat(ci, n)
        self.cj = np.repeat(cj, n)

    def derivative(self, phi):
        return self.D @ phi + self.Db

    def nonlocal_part(self, phi):
        return self.S @ phi + self.Sb - phi + self.reaction.value(phi, self.ci, self.cj)

    def residual(self, phi, c):
        return c * self.derivative(phi) - self.nonlocal_part(phi)

    def jacobian(self, phi, c):
        fp = self.reaction.deriv(phi, self.ci, self.cj)
        return (c * self.D - self.S + sparse.diags(1.0 - fp)).tocsr()

    def second_derivative(self, phi, dphi, c):
        """phi'' from differentiating the profile equation (or FD when c ~ 0)."""
        if abs(c) > 0.05:
            # derivative ghosts decay at the same exponential rates
            n, ne, G = self.grid.n, self.grid.n + 2 * self.G, self.G
            h = self.grid.dxi
            ext = np.zeros(self.ncell * ne)
            for cc in range(self.ncell):
                seg = dphi[cc * n:(cc + 1) * n]
                e = ext[cc * ne:(cc + 1) * ne]
                e[G:G + n] = seg
                g = np.arange(1, G + 1)
                e[G - g] = seg[0] * np.exp(-self.lam_left * g * h)
                e[G + n - 1 + g] = seg[-1] * np.exp(-self.lam_right * g * h)
            sd = self.Sext @ ext
            fp = self.reaction.deriv(phi, self.ci, self.cj)
            return (sd - dphi + fp * dphi) / c
        return self.D @ dphi


def newton_profile(op: ProfileOperator, phi0: np.ndarray, c0: float, anchor_index: int, anchor_value: float,
                   free_speed: bool, tol: float = 1e-12, max_iter: int = 60):
    """Damped Newton for the profile equation with a phase pin.

    With ``free_speed`` the speed is an unknown and the pin is an extra
    equation; otherwise the pin replaces the equation at the anchor node.
    Returns (phi, c, history).
    """
    phi = phi0.astype(float).copy()
    c = float(c0)
    N = phi.size
    hist = []

    def full_res(ph, cc):
        r = op.residual(ph, cc)
        if free_speed:
            return np.concatenate([r, [ph[anchor_index] - anchor_value]])
        r = r.copy()
        r[anchor_index] = ph[anchor_index] - anchor_value
        return r

    res = full_res(phi, c)
    nrm = float(np.max(np.abs(res)))
    for it in range(max_iter):
        hist.append(nrm)
        if nrm < tol:
            break
        Jm = op.jacobian(phi, c)
        if free_speed:
            col = op.derivative(phi)
            pin = sparse.csr_matrix(([1.0], ([0], [anchor_index])), shape=(1, N))
            A = sparse.bmat([[Jm, sparse.csr_matrix(col[:, None])], [pin, None]], format="csc")
        else:
            Jm = Jm.tolil()
            Jm[anchor_index, :] = 0.0
            Jm[anchor_index, anchor_index] = 1.0
            A = Jm.tocsc()
        try:
            step = splu(A).solve(-res)
        except RuntimeError as exc:
            raise ConvergenceError("singular Newton system", iteration=it) from exc
        alpha = 1.0
        while True:
            phi_n = phi + alpha * step[:N]
            c_n = c + alpha * step[N] if free_speed else c
            res_n = full_res(phi_n, c_n)
            nrm_n = float(np.max(np.abs(res_n)))
            if nrm_n < (1.0 - 1e-4 * alpha) * nrm or alpha < 1.0 / 4096:
                break
            alpha *= 0.5
        if not np.isfinite(nrm_n):
            raise ConvergenceError("Newton produced non-finite values", iteration=it)
        if alpha < 1.0 / 4096 and nrm_n >= nrm:
            raise ConvergenceError("Newton stagnated", iteration=it, residual=nrm, history=hist)
        phi, c, res, nrm = phi_n, c_n, res_n, nrm_n
    else:
        hist.append(nrm)
    if nrm >= tol * 1e3:
        raise ConvergenceError("Newton did not converge", residual=nrm, history=hist)
    return phi, c, hist


# ---------------------------------------------------------------------------
# Quintic Hermite interpolation
# ---------------------------------------------------------------------------


def hermite5(y0, y1, d0, d1, s0, s1, t, h):
    """Value and derivative of the quintic Hermite interpolant on one interval."""
    t2 = t * t
    t3 = t2 * t
    t4 = t3 * t
    t5 = t4 * t
    H0 = 1 - 10 * t3 + 15 * t4 - 6 * t5
    H1 = t - 6 * t3 + 8 * t4 - 3 * t5
    H2 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5)
    H3 = 0.5 * (t3 - 2 * t4 + t5)
    H4 = -4 * t3 + 7 * t4 - 3 * t5
    H5 = 10 * t3 - 15 * t4 + 6 * t5
    dH0 = -30 * t2 + 60 * t3 - 30 * t4
    dH1 = 1 - 18 * t2 + 32 * t3 - 15 * t4
    dH2 = 0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4)
    dH3 = 0.5 * (3 * t2 - 8 * t3 + 5 * t4)
    dH4 = -12 * t2 + 28 * t3 - 15 * t4
    dH5 = -dH0
    v = y0 * H0 + h * d0 * H1 + h * h * s0 * H2 + h * h * s1 * H3 + h * d1 * H4 + y1 * H5
    dv = (y0 * dH0 + h * d0 * dH1 + h * h * s0 * dH2 + h * h * s1 * dH3 + h * d1 * dH4 + y1 * dH5) / h
    return v, dv


# ---------------------------------------------------------------------------
# FrontProfile
# ---------------------------------------------------------------------------


@dataclass
class DecayEstimates:
    eta1: float
    eta2: float
    C1: float
    C2: float
    C0: float
    rho: float
    fit_residual_left: float
    fit_residual_right: float
    n_left: int
    n_right: int

    @property
    def fit_residual(self) -> float:
        return max(self.fit_residual_left, self.fit_residual_right)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(eq=False)
class FrontProfile:
    """Tabulated pulsating front, exposed as a (possibly reflected) view.

    ``table`` values are increasing in eta from ``lo`` to ``hi`` and satisfy the
    profile equation in ``table_direction`` with speed ``table_speed``.  The
    view coordinate is xi = -eta when ``reflected`` and xi = eta otherwise.
    """

    label: str
    direction: Direction
    reflected: bool
    table_speed: float
    lo: float
    hi: float
    periods: tuple
    grid: ProfileGrid
    values: np.ndarray  # (ncell, n)
    derivs: np.ndarray
    seconds: np.ndarray
    lam_left: float
    lam_right: float
    anchor_value: float
    residual: float = float("nan")
    kernel: Optional[Kernel] = None
    reaction: Optional[Reaction] = None
    polished: bool = True
    meta: dict = field(default_factory=dict)
    decay: Optional[DecayEstimates] = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        self.derivs = np.atleast_2d(np.asarray(self.derivs, dtype=float))
        self.seconds = np.atleast_2d(np.asarray(self.seconds, dtype=float))
        for arr in (self.values, self.derivs, self.seconds):
            arr.setflags(write=False)
        # edge rates matching value and slope at the grid ends (C^1 tails)
        with np.errstate(divide="ignore", invalid="ignore"):
            dl = self.values[:, 0] - self.lo
            dr = self.hi - self.values[:, -1]
            el = np.where(dl > 0, self.derivs[:, 0] / dl, self.lam_left)
            er = np.where(dr > 0, self.derivs[:, -1] / dr, self.lam_right)
        self._edge_left = np.clip(np.nan_to_num(el, nan=self.lam_left), 0.5 * self.lam_left, 2.0 * self.lam_left)
        self._edge_right = np.clip(np.nan_to_num(er, nan=self.lam_right), 0.5 * self.lam_right, 2.0 * self.lam_right)

    # -- orientation -----------------------------------------------------
    @property
    def table_direction(self) -> Direction:
        return self.direction.reversed() if self.reflected else self.direction

    @property
    def speed(self) -> float:
        """Speed of the view: u = phi(i cos + j sin + speed t)."""
        return -self.table_speed if self.reflected else self.table_speed

    @property
    def limits(self):
        """(alpha, beta): limits of the view at xi -> -inf and +inf."""
        return (self.hi, self.lo) if self.reflected else (self.lo, self.hi)

    @property
    def ncell(self) -> int:
        return self.values.shape[0]

    def cell_index(self, i, j):
        n1, n2 = self.periods
        return np.mod(i, n1) * n2 + np.mod(j, n2)

    # -- evaluation --------------------------------------------------------
    def table_eval(self, cell, eta):
        """Table value and derivative at (cell, eta); arrays broadcast."""
        eta = np.asarray(eta, dtype=float)
        shape = np.broadcast_shapes(eta.shape, np.shape(cell))
        eta = np.broadcast_to(eta, shape).ravel()
        cell = np.broadcast_to(np.asarray(cell), shape).ravel()
        g = self.grid
        x = (eta - g.xi0) / g.dxi
        k = np.clip(np.floor(x).astype(np.int64), 0, g.n - 2)
        t = x - k
        y0 = self.values[cell, k]
        y1 = self.values[cell, k + 1]
        d0 = self.derivs[cell, k]
        d1 = self.derivs[cell, k + 1]
        s0 = self.seconds[cell, k]
        s1 = self.seconds[cell, k + 1]
        v, dv = hermite5(y0, y1, d0, d1, s0, s1, t, g.dxi)
        left = x < 0
        right = x > g.n - 1
        if np.any(left):
            lam = self._edge_left[cell[left]]
            amp = self.values[cell[left], 0] - self.lo
            e = np.exp(lam * (eta[left] - g.xi0))
            v[left] = self.lo + amp * e
            dv[left] = lam * amp * e
        if np.any(right):
            lam = self._edge_right[cell[right]]
            amp = self.hi - self.values[cell[right], -1]
            e = np.exp(-lam * (eta[right] - g.xi1))
            v[right] = self.hi - amp * e
            dv[right] = lam * amp * e
        return v.reshape(shape), dv.reshape(shape)

    def evaluate(self, i, j, xi):
        """(phi, phi') of the view at sites (i, j) and coordinates xi."""
        xi = np.asarray(xi, dtype=float)
        cell = np.broadcast_to(self.cell_index(np.asarray(i), np.asarray(j)), xi.shape)
        if self.reflected:
            v, dv = self.table_eval(cell, -xi)
            return v, -dv
        return self.table_eval(cell, xi)

    def value(self, i, j, xi):
        return self.evaluate(i, j, xi)[0]

    def deriv(self, i, j, xi):
        return self.evaluate(i, j, xi)[1]

    def view_samples(self):
        """View grid and per-cell samples (values, derivatives) in view orientation."""
        if self.reflected:
            return -self.grid.nodes[::-1], self.values[:, ::-1], -self.derivs[:, ::-1]
        return self.grid.nodes, self.values, self.derivs

    # -- diagnostics -------------------------------------------------------
    def table_residual(self, kernel: Optional[Kernel] = None, reaction: Optional[Reaction] = None,
                       points: Optional[np.ndarray] = None) -> float:
        """Sup over cells and points of |c T' - (J*T - T + f(T))| for the interpolant."""
        kernel = kernel or self.kernel
        reaction = reaction or self.reaction
        if kernel is None or reaction is None:
            raise ParameterError("kernel and reaction required for the residual")
        if points is None:
            nodes = self.grid.nodes
            points = np.concatenate([nodes, nodes[:-1] + 0.5 * self.grid.dxi, nodes[:-1] + 0.25 * self.grid.dxi])
        n1, n2 = self.periods
        d = self.table_direction
        worst = 0.0
        for c in range(self.ncell):
            ci, cj = divmod(c, n2)
            v, dv = self.table_eval(np.full(points.shape, c), points)
            conv = np.zeros_like(points)
            for k1, k2, w in kernel.support():
                c2 = ((ci - k1) % n1) * n2 + (cj - k2) % n2
                conv += w * self.table_eval(np.full(points.shape, c2), points - d.project(k1, k2))[0]
            r = self.table_speed * dv - (conv - v + reaction.value(v, ci, cj))
            worst = max(worst, float(np.max(np.abs(r))))
        return worst

    def shifted(self, delta: float) -> "FrontProfile":
        """View translated so that new(xi) = old(xi + delta)."""
        g = self.grid
        dt = -delta if self.reflected else delta
        return replace(self, grid=ProfileGrid(g.xi0 - dt, g.dxi, g.n, g.m), decay=None)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self._meta_dict(), sort_keys=True).encode())
        for arr in (self.values, self.derivs, self.seconds):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def _meta_dict(self):
        return {
            "label": self.label,
            "direction": [self.direction.p, self.direction.q],
            "reflected": self.reflected,
            "table_speed": self.table_speed,
            "speed": self.speed,
            "lo": self.lo,
            "hi": self.hi,
            "limits": list(self.limits),
            "periods": list(self.periods),
            "grid": {"xi0": self.grid.xi0, "dxi": self.grid.dxi, "n": self.grid.n, "m": self.grid.m},
            "lam_left": self.lam_left,
            "lam_right": self.lam_right,
            "anchor_value": self.anchor_value,
            "residual": self.residual,
            "polished": self.polished,
            "meta": self.meta,
        }

    def to_dict(self):
        d = self._meta_dict()
        d["values"] = self.values.tolist()
        d["derivs"] = self.derivs.tolist()
        d["seconds"] = self.seconds.tolist()
        d["decay"] = self.decay.to_dict() if self.decay else None
        d["kernel"] = self.kernel.to_dict() if self.kernel else None
        d["reaction"] = _reaction_dict(self.reaction)
        return d

    @classmethod
    def from_dict(cls, d):
        g = d["grid"]
        prof = cls(
            label=d["label"],
            direction=Direction(*d["direction"]),
            reflected=bool(d["reflected"]),
            table_speed=float(d["table_speed"]),
            lo=float(d["lo"]),
            hi=float(d["hi"]),
            periods=tuple(d["periods"]),
            grid=ProfileGrid(float(g["xi0"]), float(g["dxi"]), int(g["n"]), int(g["m"])),
            values=np.asarray(d["values"]),
            derivs=np.asarray(d["derivs"]),
            seconds=np.asarray(d["seconds"]),
            lam_left=float(d["lam_left"]),
            lam_right=float(d["lam_right"]),
            anchor_value=float(d["anchor_value"]),
            residual=float(d["residual"]),
            kernel=Kernel.from_dict(d["kernel"]) if d.get("kernel") else None,
            reaction=_reaction_from_dict(d.get("reaction")),
            polished=bool(d.get("polished", True)),
            meta=dict(d.get("meta", {})),
        )
        if d.get("decay"):
            prof.decay = DecayEstimates(**d["decay"])
        return prof


def _reaction_dict(r):
    if r is None:
        return None
    if isinstance(r, BranchReaction):
        return {"branch": r.which, "base": r.base.to_dict()}
    return {"branch": None, "base": r.to_dict()}


def _reaction_from_dict(d):
    if not d:
        return None
    base = PeriodicNonlinearity.from_dict(d["base"])
    return base.branch(d["branch"]) if d.get("branch") else base


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------


def _extents(lam_left, lam_right):
    left = float(np.clip(TAIL_DEPTH / lam_left, MIN_EXTENT, MAX_EXTENT))
    right = float(np.clip(TAIL_DEPTH / lam_right, MIN_EXTENT, MAX_EXTENT))
    return left, right


def _finish(op: ProfileOperator, phi, c, label, view_direction, reflected, anchor_value, kernel, reaction, meta,
            lo, hi, value_map=None):
    """Assemble a FrontProfile from a converged table (optionally value-mapped)."""
    n = op.grid.n
    dphi = op.derivative(phi)
    sec = op.second_derivative(phi, dphi, c)
    vals = phi.reshape(op.ncell, n)
    ders = dphi.reshape(op.ncell, n)
    secs = sec.reshape(op.ncell, n)
    prof = FrontProfile(label, view_direction, reflected, float(c), lo, hi, op.periods, op.grid, vals, ders, secs,
                        op.lam_left, op.lam_right, anchor_value, kernel=kernel, reaction=reaction, meta=meta)
    return prof


def _check_monotone(prof: FrontProfile):
    if np.min(prof.derivs) < -1e-10:
        raise ConvergenceError("profile is not monotone", min_derivative=float(np.min(prof.derivs)))


def solve_reduced_front(kernel: Kernel, reaction: Reaction, direction: Direction, speed: float, lo: float, hi: float,
                        anchor_value: float, dxi: float = DEFAULT_DXI, seed_rate: Optional[float] = None,
                        tol: float = 1e-12):
    """Increasing front lo -> hi of ``reaction`` in ``direction`` with prescribed speed.

    The lower end is the unstable state.  Returns (operator, phi, history).
    """
    rates_lo = cell_rate(reaction, lo)
    rates_hi = cell_rate(reaction, hi)
    per = reaction.periods
    lam_l = tail_rate(kernel, direction, per, rates_lo, speed, "left", smaller=True)
    lam_r = tail_rate(kernel, direction, per, rates_hi, speed, "right")
    left, right = _extents(lam_l, lam_r)
    grid = make_grid(direction, left, right, dxi)
    op = ProfileOperator(kernel, reaction, direction, grid, lo, hi, lam_l, lam_r)
    x = grid.nodes
    lam_seed = lam_l if seed_rate is None else seed_rate
    frac = np.where(x < 0, 1.0 / (1.0 + np.exp(-lam_seed * x)), 1.0 - 0.5 * np.exp(-lam_r * np.maximum(x, 0.0)))
    seed = lo + (hi - lo) * frac
    phi0 = np.tile(seed, op.ncell)
    k0 = grid.index_of(0.0)
    phi, c, hist = newton_profile(op, phi0, speed, k0, anchor_value, free_speed=False, tol=tol)
    return op, phi, hist


def solve_monostable_front(kernel: Kernel, f: PeriodicNonlinearity, branch: str, speed: float,
                           direction: Direction, dxi: float = DEFAULT_DXI, margin: float = 1e-2,
                           critical: Optional[float] = None) -> FrontProfile:
    """Monostable front of the reduced system, exposed in the u-variable.

    ``speed`` is the signed speed of the returned view in ``direction``:

    * lower branch, speed < 0: increasing 0 -> a front  a - W(-xi) (W solved in -direction);
    * lower branch, speed > 0: decreasing a -> 0 front  a - W(xi);
    * upper branch, speed > 0: increasing a -> 1 front  a + W(xi);
    * upper branch, speed < 0: decreasing 1 -> a front  a + W(-xi).
    """
    a = f.a
    s = abs(float(speed))
    if critical is None:
        critical = critical_speed(kernel, f, branch, direction)
    if s <= critical + margin:
        raise InfeasibleSpeedError(
            f"speed {s:.6g} not above critical speed {critical:.6g} + {margin}", speed=s, critical=critical)
    g = f.branch(branch)
    top = g.top
    wdir = direction if speed > 0 else direction.reversed()
    op, W, hist = solve_reduced_front(kernel, g, wdir, s, 0.0, top, 0.5 * top, dxi)
    n = op.grid.n
    Wd = op.derivative(W)
    Ws = op.second_derivative(W, Wd, s)
    Wv, Wd, Ws = W.reshape(op.ncell, n), Wd.reshape(op.ncell, n), Ws.reshape(op.ncell, n)
    meta = {"branch": branch, "reduced_speed": s, "critical_speed": critical, "newton_history": hist[-3:]}
    if branch == "upper":
        # u = a + W(eta), table direction wdir, speed s
        vals, ders, secs = a + Wv, Wd, Ws
        grid = op.grid
        lam_l, lam_r = op.lam_left, op.lam_right
        tspeed = s
        tdir = wdir
        lo, hi = a, 1.0
        anchor = 0.5 * (1.0 + a)
    else:
        # u-table T(eta) = a - W(-eta): increasing 0 -> a in direction -wdir, speed -s
        vals, ders, secs = a - Wv[:, ::-1], Wd[:, ::-1], -Ws[:, ::-1]
        g0 = op.grid
        grid = ProfileGrid(-g0.xi1, g0.dxi, g0.n, g0.m)
        lam_l, lam_r = op.lam_right, op.lam_left
        tspeed = -s
        tdir = wdir.reversed()
        lo, hi = 0.0, a
        anchor = 0.5 * a
    reflected = tdir != direction
    label = {("lower", True): "a_to_0", ("lower", False): "0_to_a", ("upper", False): "a_to_1",
             ("upper", True): "1_to_a"}[(branch, reflected)]
    prof = FrontProfile(label, direction, reflected, tspeed, lo, hi, f.periods, grid, vals, ders, secs, lam_l, lam_r,
                        anchor, kernel=kernel, reaction=f, meta=meta)
    _check_monotone(prof)
    prof.residual = prof.table_residual()
    if prof.residual > 1e-3:
        raise ConvergenceError("profile residual gate failed", residual=prof.residual)
    return prof


def solve_u_front(kernel: Kernel, f: PeriodicNonlinearity, lo: float, hi: float, speed: float, direction: Direction,
                  anchor_value: float, dxi: float = DEFAULT_DXI):
    """Increasing lo -> hi front of the full u-equation at a prescribed speed.

    Used to cross-check the reduced-branch path; returns (operator, phi).
    """
    op, phi, _ = solve_reduced_front(kernel, f, direction, speed, lo, hi, anchor_value, dxi)
    return op, phi


def _seed_from_state(state: LatticeState, direction: Direction, speed: float, periods, grid: ProfileGrid,
                     lo: float, hi: float, anchor_value: float):
    """Per-cell seed tables resampled from a relaxed snapshot."""
    n1, n2 = periods
    ni, nj = state.shape
    ii = np.arange(state.i0, state.i0 + ni)[:, None] * np.ones((1, nj), dtype=int)
    jj = np.arange(state.j0, state.j0 + nj)[None, :] * np.ones((ni, 1), dtype=int)
    xi = direction.project(ii, jj) + speed * state.t
    cells = (np.mod(ii, n1) * n2 + np.mod(jj, n2)).ravel()
    xi = xi.ravel()
    u = state.u.ravel()
    seeds = []
    shift = None
    for c in range(n1 * n2):
        m = cells == c
        x, v = xi[m], u[m]
        order = np.argsort(x)
        x, v = x[order], v[order]
        x, idx = np.unique(x, return_index=True)
        v = np.maximum.accumulate(v[idx])
        if c == 0:
            k = np.nonzero((v[:-1] < anchor_value) & (v[1:] >= anchor_value))[0]
            if k.size == 0:
                raise AnchoringError("relaxed state does not cross the anchor value")
            k = k[0]
            shift = x[k] + (anchor_value - v[k]) * (x[k + 1] - x[k]) / (v[k + 1] - v[k])
        seeds.append((x, v))
    out = []
    for x, v in seeds:
        interp = PchipInterpolator(x - shift, v, extrapolate=False)
        s = interp(grid.nodes)
        s = np.where(grid.nodes < x[0] - shift, lo, s)
        s = np.where(grid.nodes > x[-1] - shift, hi, s)
        out.append(np.nan_to_num(s, nan=lo))
    return np.concatenate(out)


def solve_bistable_front(kernel: Kernel, f: PeriodicNonlinearity, direction: Direction, dxi: float = DEFAULT_DXI,
                         relax_time: float = 200.0, dt: float = 0.05, window: int = 200,
                         pinned_speed: float = 0.02, label: str = "1_to_0") -> FrontProfile:
    """Bistable front 1 -> 0 in ``direction`` (speed of the view is -vbar).

    The increasing 0 -> 1 table is obtained in the reversed direction by
    relaxing a step datum (speed from the level-crossing fit at u = a/2) and
    then polishing by Newton's method with the speed as an unknown.  Fronts
    whose relaxed speed is below ``pinned_speed`` are returned unpolished.
    """
    a = f.a
    tdir = direction.reversed()
    rel = relax_front(kernel, f, tdir, 0.0, 1.0, 0.5 * a, t_total=relax_time, dt=dt, length=window)
    if rel.r2 < 0.999:
        raise SpeedEstimationError("speed fit R^2 below 0.999", r2=rel.r2)
    c_relax = rel.speed
    rates0 = cell_rate(f, 0.0)
    rates1 = cell_rate(f, 1.0)
    per = f.periods
    meta = {"relaxation_speed": c_relax, "relaxation_r2": rel.r2,
            "shape_change_trace": [float(x) for x in rel.shape_changes[-5:]]}
    anchor = 0.5 * a
    if abs(c_relax) < pinned_speed:
        # no continuous profile to polish: tabulate the relaxed lattice state
        lam = 1.0
        grid = make_grid(tdir, 20.0, 20.0, dxi)
        seed = _seed_from_state(rel.final, tdir, c_relax, per, grid, 0.0, 1.0, anchor)
        vals = seed.reshape(-1, grid.n)
        ders = np.gradient(vals, grid.dxi, axis=1)
        secs = np.gradient(ders, grid.dxi, axis=1)
        prof = FrontProfile(label, direction, True, c_relax, 0.0, 1.0, per, grid, vals, ders, secs, lam, lam, anchor,
                            kernel=kernel, reaction=f, polished=False, meta=meta)
        prof.residual = prof.table_residual()
        return prof
    lam_l = tail_rate(kernel, tdir, per, rates0, c_relax, "left")
    lam_r = tail_rate(kernel, tdir, per, rates1, c_relax, "right")
    left, right = _extents(lam_l, lam_r)
    grid = make_grid(tdir, left, right, dxi)
    seed = _seed_from_state(rel.final, tdir, c_relax, per, grid, 0.0, 1.0, anchor)
    c = c_relax
    for _ in range(3):
        op = ProfileOperator(kernel, f, tdir, grid, 0.0, 1.0, lam_l, lam_r)
        phi, c, hist = newton_profile(op, seed, c, grid.index_of(0.0), anchor, free_speed=True)
        # refresh ghost rates for the polished speed
        lam_l2 = tail_rate(kernel, tdir, per, rates0, c, "left")
        lam_r2 = tail_rate(kernel, tdir, per, rates1, c, "right")
        if abs(lam_l2 - lam_l) < 1e-12 and abs(lam_r2 - lam_r) < 1e-12:
            break
        lam_l, lam_r, seed = lam_l2, lam_r2, phi
    meta["newton_history"] = hist[-3:]
    prof = _finish(op, phi, c, label, direction, True, anchor, kernel, f, meta, 0.0, 1.0)
    _check_monotone(prof)
    prof.residual = prof.table_residual()
    if prof.residual > 1e-3:
        raise ConvergenceError("profile residual gate failed", residual=prof.residual)
    return prof


# ---------------------------------------------------------------------------
# Phase normalisation and decay fits
# ---------------------------------------------------------------------------


def view_crossing(profile: FrontProfile, value: float, cell: int = 0) -> float:
    """xi at which the view of ``cell`` crosses ``value`` (monotone bisection)."""
    alpha, beta = profile.limits
    lo_v, hi_v = min(alpha, beta), max(alpha, beta)
    if not lo_v < value < hi_v:
        raise AnchoringError("anchor value outside profile range", value=value, limits=(alpha, beta))
    nodes = profile.grid.nodes
    eta_v = profile.values[cell]
    if not eta_v[0] < value < eta_v[-1]:
        raise AnchoringError("anchor value not attained on the grid", value=value)
    k = int(np.searchsorted(eta_v, value))
    a, b = nodes[k - 1], nodes[k]
    cells = np.array([cell])

    def fn(x):
        return profile.table_eval(cells, np.array([x]))[0][0] - value

    eta = optimize.bisect(fn, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return -eta if profile.reflected else eta


def normalize_phase(profile: FrontProfile, anchor_value: Optional[float] = None, cell: int = 0) -> FrontProfile:
    """Translate the view so that ``cell`` crosses the anchor value at xi = 0."""
    v = profile.anchor_value if anchor_value is None else anchor_value
    x = view_crossing(profile, v, cell)
    out = profile.shifted(x)
    out.anchor_value = v
    return out


def measure_decay(profile: FrontProfile, window=(1e-4, 1e-1), min_points: int = 20) -> DecayEstimates:
    """Tail exponents and amplitude brackets of the view.

    Deviations are measured relative to the jump |beta - alpha| so fronts of
    small amplitude (0 -> a with small a) use the same window as 0 -> 1 fronts.
    """
    alpha, beta = profile.limits
    amp = abs(beta - alpha)
    xi, vals, ders = profile.view_samples()
    out = {}
    lo_w, hi_w = window
    for side, lim, sel in (("left", alpha, xi <= -1.0), ("right", beta, xi >= 1.0)):
        xs, dev, dd = [], [], []
        for c in range(vals.shape[0]):
            d = np.abs(vals[c] - lim) / amp
            m = sel & (d >= lo_w) & (d <= hi_w)
            xs.append(xi[m])
            dev.append(d[m] * amp)
            dd.append(np.abs(ders[c][m]))
        x = np.concatenate(xs)
        dv = np.concatenate(dev)
        dd = np.concatenate(dd)
        if x.size < min_points:
            raise InsufficientRangeError("tail too short for a decay fit", side=side, points=int(x.size))
        slope, icpt = np.polyfit(x, np.log(dv), 1)
        res = np.log(dv) - (slope * x + icpt)
        rate = abs(slope)
        sgn = -1.0 if side == "left" else 1.0
        scaled = dv * np.exp(sgn * rate * x)
        dscaled = dd * np.exp(sgn * rate * x)
        out[side] = dict(rate=float(rate), fit=float(np.sqrt(np.mean(res ** 2))), n=int(x.size),
                         cmin=float(scaled.min()), cmax=float(scaled.max()), c0=float(dscaled.max()),
                         rho=float(np.min(dd / dv)))
    L, R = out["left"], out["right"]
    return DecayEstimates(L["rate"], R["rate"], min(L["cmin"], R["cmin"]), max(L["cmax"], R["cmax"]),
                          max(L["c0"], R["c0"]), min(L["rho"], R["rho"]), L["fit"], R["fit"], L["n"], R["n"])
