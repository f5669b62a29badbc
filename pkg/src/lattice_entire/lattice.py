"""Nonlocal periodic lattice system on a truncated window.

The evolution law is

    u_ij' = sum_k J(k) u_{i-k1, j-k2} - u_ij + f_ij(u_ij),

with a compactly supported even kernel ``J`` and a bistable reaction that is
periodic in the lattice indices.  Everything here works on plain numpy arrays;
fields may carry leading batch axes so that many independent runs can share a
single vectorised time loop.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import ArityError, DimensionError, DivergenceError, NonlinearityError, ParameterError

RANGE_TOL = 1e-12


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Kernel:
    """Dispersal weights J(k1, k2) on the square [-k0, k0]^2.

    ``weights[k1 + k0, k2 + k0]`` holds J(k1, k2).
    """

    half_width: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        k0 = int(self.half_width)
        if k0 < 1:
            raise ParameterError("kernel half width must be >= 1", half_width=k0)
        if w.shape != (2 * k0 + 1, 2 * k0 + 1):
            raise DimensionError("kernel weights must be (2k0+1)x(2k0+1)", shape=w.shape, half_width=k0)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ParameterError("kernel weights must be finite and nonnegative")
        if not np.array_equal(w, w[::-1, ::-1]):
            raise ParameterError("kernel must be even: J(k) = J(-k)")
        if abs(w.sum() - 1.0) > 1e-14:
            raise ParameterError("kernel mass must be 1", mass=float(w.sum()))
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "half_width", k0)

    def __call__(self, k1: int, k2: int) -> float:
        k0 = self.half_width
        if abs(k1) > k0 or abs(k2) > k0:
            return 0.0
        return float(self.weights[k1 + k0, k2 + k0])

    def support(self):
        """List of (k1, k2, J) with J > 0, in a fixed deterministic order."""
        k0 = self.half_width
        out = []
        for a in range(-k0, k0 + 1):
            for b in range(-k0, k0 + 1):
                w = self.weights[a + k0, b + k0]
                if w > 0:
                    out.append((a, b, float(w)))
        return out

    def symbol(self, lam: float, direction: "Direction") -> float:
        """sum_k J(k) exp(-lam * k.e) with e the unit direction."""
        return float(sum(w * math.exp(-lam * direction.project(a, b)) for a, b, w in self.support()))

    def to_dict(self):
        return {"half_width": self.half_width, "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["half_width"]), np.asarray(d["weights"], dtype=float))


def _symmetrize_normalize(w):
    w = 0.5 * (w + w[::-1, ::-1])
    w = w / w.sum()
    # exact evenness survives the division because both halves scale identically
    return w


def gaussian_kernel(k0: int = 2, variance: float = 1.0) -> Kernel:
    k = np.arange(-k0, k0 + 1)
    w = np.exp(-(k[:, None] ** 2 + k[None, :] ** 2) / (2.0 * variance))
    return Kernel(k0, _symmetrize_normalize(w))


def nearest_neighbor_kernel() -> Kernel:
    w = np.zeros((3, 3))
    w[0, 1] = w[2, 1] = w[1, 0] = w[1, 2] = 0.25
    return Kernel(1, w)


def default_kernel() -> Kernel:
    return gaussian_kernel(2, 1.0)


# ---------------------------------------------------------------------------
# Direction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Direction:
    """Propagation direction given by a primitive integer vector (p, q).

    Only rational slopes are representable; the unit vector is (p, q)/|(p, q)|.
    Axis directions get exact cosines and sines.
    """

    p: int
    q: int

    def __post_init__(self):
        p, q = int(self.p), int(self.q)
        if p == 0 and q == 0:
            raise ParameterError("direction vector must be nonzero")
        g = math.gcd(p, q)
        object.__setattr__(self, "p", p // g)
        object.__setattr__(self, "q", q // g)

    @property
    def norm(self) -> float:
        return math.hypot(self.p, self.q)

    @property
    def theta(self) -> float:
        return math.atan2(self.q, self.p)

    @property
    def cos(self) -> float:
        if self.q == 0:
            return float(np.sign(self.p))
        if self.p == 0:
            return 0.0
        return self.p / self.norm

    @property
    def sin(self) -> float:
        if self.p == 0:
            return float(np.sign(self.q))
        if self.q == 0:
            return 0.0
        return self.q / self.norm

    @property
    def is_axis(self) -> bool:
        return self.p == 0 or self.q == 0

    @property
    def axis(self) -> int:
        """Lattice axis along which an axis direction points (0 for i, 1 for j)."""
        if not self.is_axis:
            raise ParameterError("direction is not axis aligned", p=self.p, q=self.q)
        return 0 if self.q == 0 else 1

    def reversed(self) -> "Direction":
        return Direction(-self.p, -self.q)

    def project(self, i, j):
        """i cos(theta) + j sin(theta) (works on arrays)."""
        scalar = np.ndim(i) == 0 and np.ndim(j) == 0
        i = np.asarray(i, dtype=float)
        j = np.asarray(j, dtype=float)
        if self.q == 0:
            out = self.p * i + 0.0 * j
        elif self.p == 0:
            out = self.q * j + 0.0 * i
        else:
            out = (self.p * i + self.q * j) / self.norm
        return float(out) if scalar else out

    def integer_projection(self, i, j):
        """p*i + q*j, the projection in units of 1/|(p,q)|."""
        return self.p * np.asarray(i) + self.q * np.asarray(j)

    @classmethod
    def from_angle(cls, theta: float, max_den: int = 12) -> "Direction":
        c, s = math.cos(theta), math.sin(theta)
        for p in range(-max_den, max_den + 1):
            for q in range(-max_den, max_den + 1):
                if (p or q) and math.gcd(p, q) == 1:
                    n = math.hypot(p, q)
                    if abs(p / n - c) < 1e-12 and abs(q / n - s) < 1e-12:
                        return cls(p, q)
        raise ParameterError("irrational or high-denominator direction is not supported", theta=theta)

    def to_dict(self):
        return {"p": self.p, "q": self.q, "theta": self.theta}


# ---------------------------------------------------------------------------
# Periodic nonlinearity
# ---------------------------------------------------------------------------


ScalarFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CellFunctions:
    """Arbitrary per-cell reaction with its first two derivatives."""

    f: ScalarFn
    df: ScalarFn
    d2f: ScalarFn


class Reaction:
    """Interface: a reaction depending on the lattice cell, vectorised over u."""

    periods: tuple

    def value(self, u, ci, cj):  # pragma: no cover - interface
        raise NotImplementedError

    def deriv(self, u, ci, cj):  # pragma: no cover - interface
        raise NotImplementedError

    def deriv2(self, u, ci, cj):  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True)
class PeriodicNonlinearity(Reaction):
    """Bistable reaction f_ij with zeros 0 < a < 1 and periods (N1, N2).

    The default form is mu_ij u (u - a)(1 - u) with ``mu`` an (N1, N2) table.
    Passing ``cells`` (an N1 x N2 nested sequence of :class:`CellFunctions`)
    replaces the cubic by arbitrary per-cell functions.
    """

    a: float
    mu: Optional[np.ndarray] = None
    cells: Optional[tuple] = None
    name: str = "cubic"

    def __post_init__(self):
        if not (0.0 < float(self.a) < 1.0):
            raise NonlinearityError("middle zero a must lie in (0, 1)", a=self.a)
        object.__setattr__(self, "a", float(self.a))
        if self.cells is None:
            mu = np.atleast_2d(np.asarray(1.0 if self.mu is None else self.mu, dtype=float))
            if mu.ndim != 2 or np.any(mu <= 0) or not np.all(np.isfinite(mu)):
                raise NonlinearityError("mu table must be a positive 2-D array")
            mu.setflags(write=False)
            object.__setattr__(self, "mu", mu)
        else:
            rows = tuple(tuple(r) for r in self.cells)
            if len({len(r) for r in rows}) != 1:
                raise NonlinearityError("cell table must be rectangular (N1 x N2)")
            object.__setattr__(self, "cells", rows)
            object.__setattr__(self, "name", "custom" if self.name == "cubic" else self.name)

    @property
    def periods(self):
        if self.cells is None:
            return tuple(self.mu.shape)
        return (len(self.cells), len(self.cells[0]))

    @property
    def homogeneous(self) -> bool:
        return self.periods == (1, 1)

    @property
    def ncell(self) -> int:
        n1, n2 = self.periods
        return n1 * n2

    def _dispatch(self, u, ci, cj, order):
        u = np.asarray(u, dtype=float)
        n1, n2 = self.periods
        if self.cells is None:
            mu = self.mu[np.mod(ci, n1), np.mod(cj, n2)]
            a = self.a
            if order == 0:
                return mu * u * (u - a) * (1.0 - u)
            if order == 1:
                return mu * (-3.0 * u * u + 2.0 * (1.0 + a) * u - a)
            return mu * (-6.0 * u + 2.0 * (1.0 + a))
        ci = np.broadcast_to(np.mod(ci, n1), u.shape)
        cj = np.broadcast_to(np.mod(cj, n2), u.shape)
        out = np.empty_like(u)
        for x in range(n1):
            for y in range(n2):
                m = (ci == x) & (cj == y)
                if np.any(m):
                    fn = self.cells[x][y]
                    out[m] = (fn.f, fn.df, fn.d2f)[order](u[m])
        return out

    def value(self, u, ci=0, cj=0):
        return self._dispatch(u, ci, cj, 0)

    def deriv(self, u, ci=0, cj=0):
        return self._dispatch(u, ci, cj, 1)

    def deriv2(self, u, ci=0, cj=0):
        return self._dispatch(u, ci, cj, 2)

    def branch(self, which: str) -> "BranchReaction":
        return BranchReaction(self, which)

    def to_dict(self):
        if self.cells is not None:
            return {"form": self.name, "a": self.a, "periods": list(self.periods)}
        return {"form": "cubic", "a": self.a, "mu": self.mu.tolist()}

    @classmethod
    def from_dict(cls, d):
        if d.get("form", "cubic") != "cubic":
            raise NonlinearityError("only the cubic form is serialisable", form=d.get("form"))
        return cls(float(d["a"]), np.asarray(d.get("mu", 1.0), dtype=float))


@dataclass(frozen=True)
class BranchReaction(Reaction):
    """Reduced monostable reaction on one side of the middle zero.

    ``lower``: g(v) = -f(a - v) on [0, a], from u = a - v.
    ``upper``: h(v) = f(a + v) on [0, 1 - a], from u = a + v.
    In both cases v = 0 is unstable and the top state is stable.
    """

    base: PeriodicNonlinearity
    which: str

    def __post_init__(self):
        if self.which not in ("lower", "upper"):
            raise ParameterError("branch must be 'lower' or 'upper'", branch=self.which)

    @property
    def periods(self):
        return self.base.periods

    @property
    def top(self) -> float:
        return self.base.a if self.which == "lower" else 1.0 - self.base.a

    def value(self, v, ci=0, cj=0):
        a = self.base.a
        if self.which == "lower":
            return -self.base.value(a - np.asarray(v), ci, cj)
        return self.base.value(a + np.asarray(v), ci, cj)

    def deriv(self, v, ci=0, cj=0):
        a = self.base.a
        if self.which == "lower":
            return self.base.deriv(a - np.asarray(v), ci, cj)
        return self.base.deriv(a + np.asarray(v), ci, cj)

    def deriv2(self, v, ci=0, cj=0):
        a = self.base.a
        if self.which == "lower":
            return -self.base.deriv2(a - np.asarray(v), ci, cj)
        return self.base.deriv2(a + np.asarray(v), ci, cj)


@dataclass
class AssumptionReport:
    a1: bool
    a2: bool
    a3_lower: bool
    a3_upper: bool
    details: dict = field(default_factory=dict)

    @property
    def a3(self) -> bool:
        return self.a3_lower and self.a3_upper


def check_assumptions(f: PeriodicNonlinearity, samples: int = 4001) -> AssumptionReport:
    """Dense-sampling check of the zero/sign structure and the secant bounds."""
    a = f.a
    n1, n2 = f.periods
    a1 = a3l = a3u = True
    details = {}
    tol = 1e-13
    ul = np.linspace(0.0, a, samples)[1:-1]
    uu = np.linspace(a, 1.0, samples)[1:-1]
    for x in range(n1):
        for y in range(n2):
            zeros = f.value(np.array([0.0, a, 1.0]), x, y)
            d = f.deriv(np.array([0.0, a, 1.0]), x, y)
            ok = (
                np.all(np.abs(zeros) <= tol)
                and d[0] < 0
                and d[2] < 0
                and d[1] > 0
                and np.all(f.value(ul, x, y) < 0)
                and np.all(f.value(uu, x, y) > 0)
            )
            if not ok:
                a1 = False
                details.setdefault("a1_cells", []).append((x, y))
            slope = d[1]
            if np.any(f.value(ul, x, y) < slope * (ul - a) - tol):
                a3l = False
                details.setdefault("a3_lower_cells", []).append((x, y))
            if np.any(f.value(uu, x, y) > slope * (uu - a) + tol):
                a3u = False
                details.setdefault("a3_upper_cells", []).append((x, y))
    a2 = n1 >= 1 and n2 >= 1
    return AssumptionReport(bool(a1), bool(a2), a3l, a3u, details)


def validate_nonlinearity(f: PeriodicNonlinearity, a3: str = "full") -> AssumptionReport:
    """Raise :class:`NonlinearityError` unless the requested assumptions hold.

    ``a3`` selects how much of the secant condition is enforced:
    ``"full"``, ``"lower"`` (only on [0, a]) or ``"off"``.
    """
    if a3 not in ("full", "lower", "off"):
        raise ParameterError("a3 mode must be full, lower or off", a3=a3)
    rep = check_assumptions(f)
    if not rep.a1:
        raise NonlinearityError("bistable sign structure violated", cells=rep.details.get("a1_cells"))
    if a3 in ("full", "lower") and not rep.a3_lower:
        raise NonlinearityError("secant bound violated on [0, a]", cells=rep.details.get("a3_lower_cells"))
    if a3 == "full" and not rep.a3_upper:
        raise NonlinearityError("secant bound violated on [a, 1]", cells=rep.details.get("a3_upper_cells"))
    return rep


def max_abs_derivative(f: Reaction, lo: float = 0.0, hi: float = 1.0, samples: int = 2001) -> float:
    u = np.linspace(lo, hi, samples)
    n1, n2 = f.periods
    return float(max(np.max(np.abs(f.deriv(u, x, y))) for x in range(n1) for y in range(n2)))


# ---------------------------------------------------------------------------
# Lattice state and evolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Boundary:
    """Clamp values at the two ends of ``axis``; the other axis wraps.

    ``low``/``high`` equal to ``None`` means that axis wraps as well.
    """

    axis: int = 0
    low: Optional[float] = None
    high: Optional[float] = None

    @property
    def periodic(self) -> bool:
        return self.low is None and self.high is None


@dataclass
class LatticeState:
    """Values u[..., i - i0, j - j0] on a rectangular window at time t."""

    u: np.ndarray
    i0: int = 0
    j0: int = 0
    t: float = 0.0
    boundary: Boundary = field(default_factory=Boundary)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.ndim < 2:
            raise DimensionError("field must be at least 2-D", shape=self.u.shape)
        lo, hi = float(np.min(self.u)), float(np.max(self.u))
        if lo < -RANGE_TOL or hi > 1.0 + RANGE_TOL or not np.isfinite(lo + hi):
            raise ParameterError("state values must lie in [0, 1]", min=lo, max=hi)

    @property
    def shape(self):
        return self.u.shape[-2:]

    def indices(self):
        ni, nj = self.shape
        ii = np.arange(self.i0, self.i0 + ni)[:, None]
        jj = np.arange(self.j0, self.j0 + nj)[None, :]
        return ii, jj

    def copy(self) -> "LatticeState":
        return LatticeState(self.u.copy(), self.i0, self.j0, self.t, self.boundary)


def _check_window(shape, kernel: Kernel):
    need = 2 * kernel.half_width + 1
    if shape[0] < need or shape[1] < need:
        raise DimensionError("window smaller than kernel support", shape=tuple(shape), required=need)


def _pad(u, k0, boundary: Boundary):
    """Pad the last two axes by k0 using clamps along ``axis`` and wraps elsewhere."""
    nb = u.ndim - 2
    width = [(0, 0)] * nb + [(k0, k0), (k0, k0)]
    out = np.pad(u, width, mode="wrap")
    if not boundary.periodic:
        ax = nb + boundary.axis
        sl_lo = [slice(None)] * u.ndim
        sl_hi = [slice(None)] * u.ndim
        sl_lo[ax] = slice(0, k0)
        sl_hi[ax] = slice(out.shape[ax] - k0, out.shape[ax])
        out[tuple(sl_lo)] = boundary.low
        out[tuple(sl_hi)] = boundary.high
    return out


def convolve(u, kernel: Kernel, boundary: Boundary):
    """sum_k J(k) u_{i-k1, j-k2} over the window (last two axes)."""
    k0 = kernel.half_width
    padded = _pad(u, k0, boundary)
    w = kernel.weights[::-1, ::-1].reshape((1,) * (u.ndim - 2) + kernel.weights.shape)
    full = ndimage.correlate(padded, w, mode="constant", cval=0.0)
    return full[..., k0:-k0, k0:-k0]


def site_reaction(f: Reaction, ii, jj):
    """Return u -> f_ij(u) for the fixed site grid (ii, jj).

    For the cubic form the per-site coefficient table is built once.
    """
    if isinstance(f, PeriodicNonlinearity) and f.cells is None:
        n1, n2 = f.periods
        mu = f.mu[np.mod(ii, n1), np.mod(jj, n2)]
        a = f.a
        return lambda u: mu * u * (u - a) * (1.0 - u)
    return lambda u: f.value(u, ii, jj)


def _rate(u, ii, jj, kernel, f, boundary):
    return convolve(u, kernel, boundary) - u + f.value(u, ii, jj)


def rhs(state: LatticeState, kernel: Kernel, f: Reaction) -> np.ndarray:
    """Rate field of the lattice system at every window site (pure)."""
    _check_window(state.shape, kernel)
    ii, jj = state.indices()
    return _rate(state.u, ii, jj, kernel, f, state.boundary)


def stability_bound(f: Reaction) -> float:
    return 2.0 / (1.0 + max_abs_derivative(f))


@dataclass
class Trajectory:
    times: np.ndarray
    fields: np.ndarray  # shape (n_snap, ..., ni, nj)
    i0: int
    j0: int
    boundary: Boundary
    t_start: float
    dt: float

    def state(self, k: int) -> LatticeState:
        return LatticeState(self.fields[k], self.i0, self.j0, float(self.times[k]), self.boundary)

    def indices(self):
        ni, nj = self.fields.shape[-2:]
        return np.arange(self.i0, self.i0 + ni)[:, None], np.arange(self.j0, self.j0 + nj)[None, :]


def _rk4(u, h, rate):
    k1 = rate(u)
    k2 = rate(u + 0.5 * h * k1)
    k3 = rate(u + 0.5 * h * k2)
    k4 = rate(u + h * k3)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _locate_bad(u, ii, jj):
    bad = np.argwhere(~np.isfinite(u))[0]
    i = int(ii.ravel()[bad[-2]])
    j = int(jj.ravel()[bad[-1]])
    return i, j


def integrate(
    state: LatticeState,
    kernel: Kernel,
    f: Reaction,
    dt: float,
    t_end: float,
    times: Optional[Sequence[float]] = None,
    observer: Optional[Callable[[float, np.ndarray], None]] = None,
    allow_unstable_dt: bool = False,
    check_range: bool = True,
) -> Trajectory:
    """Classic RK4 with fixed step ``dt`` from ``state.t`` to ``t_end``.

    Snapshots are taken at ``times`` (default: only ``t_end``); the last step
    before a snapshot is shortened so snapshot times are hit exactly.
    """
    if not dt > 0:
        raise ParameterError("dt must be positive", dt=dt)
    bound = stability_bound(f)
    if dt > bound:
        if not allow_unstable_dt:
            raise ParameterError("dt exceeds stability bound 2/(1+max|f'|)", dt=dt, bound=bound)
        warnings.warn(f"dt={dt} exceeds stability bound {bound:.4g}", RuntimeWarning, stacklevel=2)
    _check_window(state.shape, kernel)
    t0 = float(state.t)
    if times is None:
        times = [t_end]
    times = np.asarray(sorted(float(x) for x in times), dtype=float)
    if times.size and (times[0] < t0 - 1e-12 or times[-1] > t_end + 1e-12):
        raise ParameterError("snapshot times must lie in [t_start, t_end]")
    ii, jj = state.indices()
    boundary = state.boundary

    react = site_reaction(f, ii, jj)

    def rate(v):
        return convolve(v, kernel, boundary) - v + react(v)

    u = state.u.copy()
    t = t0
    snaps = []
    for target in times:
        seg_start, step = t, 0
        while True:
            remaining = target - (seg_start + step * dt)
            if remaining <= 1e-12 * max(1.0, abs(target)):
                break
            h = dt if remaining > dt * (1.0 + 1e-9) else remaining
            u = _rk4(u, h, rate)
            if not np.all(np.isfinite(u)):
                i, j = _locate_bad(u, ii, jj)
                raise DivergenceError("non-finite value during integration", site=(i, j), t=seg_start + step * dt + h)
            if h != dt:
                break
            step += 1
        t = float(target)
        if check_range:
            lo, hi = float(u.min()), float(u.max())
            if lo < -RANGE_TOL or hi > 1.0 + RANGE_TOL:
                raise DivergenceError("solution left [0, 1]", t=t, min=lo, max=hi)
        snaps.append(u.copy())
        if observer is not None:
            observer(t, snaps[-1])
    return Trajectory(times, np.stack(snaps) if snaps else np.empty((0,) + u.shape), state.i0, state.j0, boundary, float(state.t), dt)


# ---------------------------------------------------------------------------
# Residual, comparison and derivative diagnostics
# ---------------------------------------------------------------------------


def residual_F(sampler, kernel: Kernel, f: Reaction, i, j, t: float, h: float = 1e-4):
    """v'(t) - [sum J v(nbr) - v + f(v)] with a central difference in time.

    ``sampler(i, j, t)`` must accept integer arrays and return values of the
    same shape.  Positive values indicate a supersolution.
    """
    if not h > 0:
        raise ParameterError("finite-difference step must be positive", h=h)
    i = np.asarray(i)
    j = np.asarray(j)
    try:
        vdot = (np.asarray(sampler(i, j, t + h)) - np.asarray(sampler(i, j, t - h))) / (2.0 * h)
        v = np.asarray(sampler(i, j, t), dtype=float)
        conv = np.zeros_like(v)
        for k1, k2, w in kernel.support():
            conv = conv + w * np.asarray(sampler(i - k1, j - k2, t))
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise type(exc)(f"sampler failed near site ({i.ravel()[:1]}, {j.ravel()[:1]}) at t={t}: {exc}") from exc
    return vdot - (conv - v + f.value(v, i, j))


@dataclass
class ComparisonReport:
    min_gap: float
    min_lower: float
    passed: bool
    first_violation: Optional[tuple] = None  # (t, i, j, gap)


def check_comparison(u_plus: Trajectory, u_minus: Trajectory, tol: float = 1e-8) -> ComparisonReport:
    """Check u_plus >= u_minus >= 0 at every snapshot and site."""
    if u_plus.fields.shape != u_minus.fields.shape or not np.array_equal(u_plus.times, u_minus.times):
        raise DimensionError("trajectories differ in grid or times", a=u_plus.fields.shape, b=u_minus.fields.shape)
    if (u_plus.i0, u_plus.j0) != (u_minus.i0, u_minus.j0):
        raise DimensionError("trajectories live on different windows")
    gap = u_plus.fields - u_minus.fields
    min_gap = float(gap.min()) if gap.size else 0.0
    min_lower = float(u_minus.fields.min()) if gap.size else 0.0
    passed = min_gap >= -tol and min_lower >= -tol
    viol = None
    if min_gap < -tol:
        bad = np.argwhere(gap < -tol)
        k = bad[np.lexsort(bad.T[::-1])][0]
        ii, jj = u_plus.indices()
        viol = (float(u_plus.times[k[0]]), int(ii.ravel()[k[-2]]), int(jj.ravel()[k[-1]]), float(gap[tuple(k)]))
    return ComparisonReport(min_gap, min_lower, bool(passed), viol)


def derivative_bounds(traj: Trajectory):
    """Empirical sup |u'| and sup |u''| from snapshot finite differences."""
    n = traj.times.size
    if n < 3:
        raise ArityError("need at least 3 snapshots", snapshots=n)
    dts = np.diff(traj.times)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=1e-12):
        raise ParameterError("snapshots must be uniformly spaced")
    if traj.times[0] <= traj.t_start + 1.0:
        raise ParameterError("snapshots must lie after t_start + 1")
    h = dts[0]
    u = traj.fields
    d1 = (u[2:] - u[:-2]) / (2.0 * h)
    d2 = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    return float(np.max(np.abs(d1))), float(np.max(np.abs(d2)))
