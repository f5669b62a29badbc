"""Three-front entire-solution experiments.

The true solution is integrated from the lower function at a deep negative
time, checked against the certified pair while t <= t0, and compared with
the three shifted fronts on moving regions.  In forward time the merging
fronts either fill the window with 1 or leave a single bistable front.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import CertificationError, ParameterError
from .fronts import FrontProfile
from .interaction import phase_constants, PhaseConstants
from .lattice import Boundary, LatticeState, integrate, stability_bound
from .supersub import SCHEMA_VERSION, SuperSubConfig, build_lower, build_upper, z_window
from .interaction import shift_eval

SANDWICH_TOL = 1e-6


@dataclass
class RegionDistance:
    value: float
    n_sites: int
    applicable: bool


def region_distance(state: LatticeState, front: FrontProfile, speed: float, phase: float,
                    region=(None, None), direction=None) -> RegionDistance:
    """sup |u - front(x + speed t + phase)| over sites whose x lies in the region.

    ``region`` is (lo, hi) with None for an open end; sites with x == lo go to
    the region on the left, so the test is lo < x <= hi.
    """
    d = direction or front.direction
    ii, jj = state.indices()
    ii, jj = np.broadcast_arrays(ii, jj)
    x = d.project(ii, jj)
    m = np.ones(x.shape, dtype=bool)
    lo, hi = region
    if lo is not None:
        m &= x > lo
    if hi is not None:
        m &= x <= hi
    if not np.any(m):
        return RegionDistance(float("nan"), 0, False)
    phi = front.value(ii[m], jj[m], x[m] + speed * state.t + phase)
    return RegionDistance(float(np.max(np.abs(state.u[m] - phi))), int(np.count_nonzero(m)), True)


def fit_phase(state: LatticeState, front: FrontProfile, guess: float, band=(0.05, 0.95), direction=None) -> float:
    """Phase ph minimizing sum (u - front(x + c t + ph))^2 over the front core."""
    d = direction or front.direction
    ii, jj = state.indices()
    ii, jj = np.broadcast_arrays(ii, jj)
    x = d.project(ii, jj)
    lo, hi = min(front.limits), max(front.limits)
    lvl = (state.u - lo) / (hi - lo)
    m = (lvl > band[0]) & (lvl < band[1])
    if np.count_nonzero(m) < 2:
        raise CertificationError("no front core found for the phase fit", t=state.t)
    base = x[m] + front.speed * state.t
    u = state.u[m]
    ph = guess
    for _ in range(50):
        v, dv = front.evaluate(ii[m], jj[m], base + ph)
        r = v - u
        g = float(np.dot(dv, dv))
        if g == 0:
            break
        step = float(np.dot(dv, r)) / g
        ph -= step
        if abs(step) < 1e-13:
            break
    return ph


@dataclass
class EntireSolutionReport:
    scenario: str
    phases: dict
    times: List[float]
    d1: List[float]
    d2: List[float]
    d3: List[float]
    d_printed: dict
    sandwich_upper: List[Optional[float]]
    sandwich_lower: List[Optional[float]]
    sandwich_min: float
    forward_metric: List[Optional[float]]
    forward_final: float
    forward_half: float
    drift_speed: Optional[float]
    refit_phase: Optional[float]
    forward_refit: Optional[float]
    gates: dict
    params: dict
    passed: bool

    def to_dict(self):
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        return d

    def to_json(self, path=None) -> str:
        s = json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(s)
        return s

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def write_metric_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "d1", "d2", "d3", "forward_metric", "sandwich_min"])
            for k, t in enumerate(self.times):
                su, sl = self.sandwich_upper[k], self.sandwich_lower[k]
                smin = "" if su is None else repr(min(su, sl))
                fm = self.forward_metric[k]
                w.writerow([repr(t), repr(self.d1[k]), repr(self.d2[k]), repr(self.d3[k]),
                            "" if fm is None else repr(fm), smin])


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


@dataclass
class RunSettings:
    T_start: Optional[float] = None  # default t0 - 40
    T_end: float = 40.0
    dt: float = 0.05
    snapshot_every: float = 1.0
    pad: float = 40.0
    tail_tol: float = 1e-9  # outer tails must fall below this at the window edges
    width: Optional[int] = None  # transverse window size (defaults to a multiple of the period >= kernel size)
    initial: str = "lower"  # lower | upper | average
    metric_times: tuple = (-35.0, -15.0)
    dump_fields: Optional[str] = None


def _window(config: SuperSubConfig, settings: RunSettings, T_start: float, phases):
    d = config.direction
    if not d.is_axis or d.cos < 0 or d.sin < 0:
        raise ParameterError("entire-solution runs support the axis directions (1,0) and (0,1)",
                             direction=(d.p, d.q))
    speeds = config.speeds
    pos = []
    for t in (T_start, settings.T_end):
        for c, ph in zip(speeds, phases):
            pos.append(-c * t - ph)
    pad_lo, pad_hi = _pads(config, settings)
    lo = int(np.floor(min(pos) - pad_lo))
    hi = int(np.ceil(max(pos) + pad_hi))
    n_axis = hi - lo + 1
    k0 = config.kernel.half_width
    n1, n2 = config.periods
    per_t = n2 if d.axis == 0 else n1
    need = 2 * k0 + 1
    width = settings.width or per_t * int(np.ceil(need / per_t))
    if width % per_t:
        raise ParameterError("transverse width must be a multiple of the period", width=width, period=per_t)
    if d.axis == 0:
        return lo, 0, (n_axis, width)
    return 0, lo, (width, n_axis)


def _pads(config: SuperSubConfig, settings: RunSettings):
    """Padding beyond the outermost fronts, long enough for their tails to reach ``tail_tol``."""
    pads = []
    for front, side in ((config.fronts[0], "eta1"), (config.fronts[2], "eta2")):
        rate = getattr(front.decay, side, None) if front.decay is not None else None
        need = np.log(1.0 / settings.tail_tol) / rate if rate else 0.0
        pads.append(max(settings.pad, float(need)))
    return tuple(pads)


def _far_limits(config: SuperSubConfig):
    left = config.fronts[0].limits[0]
    right = config.fronts[2].limits[1]
    return left, right


def _pair_fields(config: SuperSubConfig, state_like: LatticeState, t: float):
    ii, jj = state_like.indices()
    ii, jj = np.broadcast_arrays(ii, jj)
    return build_upper(config, ii, jj, t), build_lower(config, ii, jj, t)


def run_entire(config: SuperSubConfig, settings: Optional[RunSettings] = None) -> EntireSolutionReport:
    """Integrate the entire-solution approximant and collect all metrics."""
    settings = settings or RunSettings()
    P = config.params
    t0 = P.t0
    T_start = t0 - 40.0 if settings.T_start is None else settings.T_start
    if not T_start < settings.T_end:
        raise ParameterError("degenerate run: T_start must be below T_end", T_start=T_start, T_end=settings.T_end)
    if T_start > t0:
        raise ParameterError("T_start must not exceed t0", T_start=T_start, t0=t0)
    if settings.dt > stability_bound(config.reaction):
        raise ParameterError("dt exceeds the stability bound", dt=settings.dt)
    pc = phase_constants(P, config.scenario)
    phases = tuple(pc.front_phases)
    printed = _printed_phases(pc)
    i0, j0, shape = _window(config, settings, T_start, phases)
    d = config.direction
    left, right = _far_limits(config)
    boundary = Boundary(axis=d.axis, low=left if d.cos + d.sin > 0 else right,
                        high=right if d.cos + d.sin > 0 else left)
    probe = LatticeState(np.zeros(shape), i0, j0, T_start, boundary)
    up, lo = _pair_fields(config, probe, T_start)
    init = {"lower": lo, "upper": up, "average": 0.5 * (up + lo)}.get(settings.initial)
    if init is None:
        raise ParameterError("initial must be lower, upper or average", initial=settings.initial)
    state = LatticeState(np.clip(init, 0.0, 1.0), i0, j0, T_start, boundary)

    n_snap = int(round((settings.T_end - T_start) / settings.snapshot_every))
    times = np.linspace(T_start, settings.T_end, n_snap + 1)
    extra = [t for t in settings.metric_times if T_start < t < settings.T_end]
    times = np.unique(np.concatenate([times, extra, [min(t0, settings.T_end)]]))
    times = times[times > T_start]

    traj = integrate(state, config.kernel, config.reaction, settings.dt, settings.T_end, times=times)

    c1, c2, c3 = config.speeds
    rec = {k: [] for k in ("d1", "d2", "d3", "p1", "p2", "p3", "su", "sl", "fm")}
    dump_rows = []
    for k, t in enumerate(traj.times):
        st = traj.state(k)
        m1 = -(c1 + c2) * t / 2
        m2 = -(c2 + c3) * t / 2
        regions = ((None, m1), (m1, m2), (m2, None))
        for n, (ph, front, c, reg) in enumerate(zip(phases, config.fronts, config.speeds, regions)):
            rec[f"d{n + 1}"].append(region_distance(st, front, c, ph, reg).value)
            rec[f"p{n + 1}"].append(region_distance(st, front, c, printed[n], reg).value)
        if t <= t0 + 1e-12:
            up, lo = _pair_fields(config, st, float(t))
            rec["su"].append(float(np.min(up - st.u)))
            rec["sl"].append(float(np.min(st.u - lo)))
            if settings.dump_fields:
                ii, jj = st.indices()
                ii, jj = np.broadcast_arrays(ii, jj)
                for a_, b_, u_, U_, L_ in zip(ii.ravel(), jj.ravel(), st.u.ravel(), up.ravel(), lo.ravel()):
                    dump_rows.append((float(t), int(a_), int(b_), float(u_), float(U_), float(L_)))
        else:
            rec["su"].append(None)
            rec["sl"].append(None)
        rec["fm"].append(_forward_metric(config, st, phases))

    if settings.dump_fields:
        with open(settings.dump_fields, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "i", "j", "u", "Ubar", "Ulower"])
            w.writerows(dump_rows)

    times_l = [float(t) for t in traj.times]
    san = [min(a_, b_) for a_, b_ in zip(rec["su"], rec["sl"]) if a_ is not None]
    sandwich_min = float(min(san)) if san else float("nan")
    fwd_final = float(rec["fm"][-1])
    k_half = int(np.argmin(np.abs(np.asarray(times_l) - settings.T_end / 2)))
    fwd_half = float(rec["fm"][k_half])

    drift, refit, fwd_refit = None, None, None
    if config.scenario == "theorem13":
        drift, refit = _drift(config, traj, phases[0], settings)
        # the surviving front need not keep its backward phase; report both distances
        fwd_refit = region_distance(traj.state(len(traj.times) - 1), config.fronts[0], config.speeds[0], refit).value

    gates = _gates(config, settings, times_l, rec, sandwich_min, fwd_final, fwd_half, drift)
    return EntireSolutionReport(
        scenario=config.scenario,
        phases={"used": list(phases), "printed": list(printed), **pc.to_dict()},
        times=times_l, d1=rec["d1"], d2=rec["d2"], d3=rec["d3"],
        d_printed={"d1": rec["p1"], "d2": rec["p2"], "d3": rec["p3"]},
        sandwich_upper=rec["su"], sandwich_lower=rec["sl"], sandwich_min=sandwich_min,
        forward_metric=rec["fm"], forward_final=fwd_final, forward_half=fwd_half,
        drift_speed=drift, refit_phase=refit, forward_refit=fwd_refit, gates=gates,
        params={"run": asdict(settings), "T_start": T_start, "window": {"i0": i0, "j0": j0, "shape": list(shape)},
                "supersub": config.summary()},
        passed=all(g["passed"] for g in gates.values()),
    )


def _printed_phases(pc: PhaseConstants):
    if pc.scenario == "theorem12":
        return (-pc.omega, pc.omega, pc.omega)
    return (pc.omega1, pc.omega1, -pc.omega2)


def _forward_metric(config: SuperSubConfig, st: LatticeState, phases) -> float:
    if config.scenario == "theorem12":
        return float(np.max(np.abs(st.u - 1.0)))
    return region_distance(st, config.fronts[0], config.speeds[0], phases[0]).value


def _drift(config: SuperSubConfig, traj, phase0: float, settings: RunSettings):
    """Drift speed of the surviving front from phase fits over the last quarter of the run."""
    front = config.fronts[0]
    t_end = settings.T_end
    sel = [k for k, t in enumerate(traj.times) if t >= t_end - max(10.0, t_end / 4)]
    ph = []
    guess = phase0
    for k in sel:
        guess = fit_phase(traj.state(k), front, guess)
        ph.append(guess)
    t = np.asarray(traj.times)[sel]
    slope = float(np.polyfit(t, ph, 1)[0])
    # u = phi(x + c t + ph(t)) moves like phi(x + (c + ph') t)
    return front.speed + slope, float(ph[-1])


def _at(times, values, t):
    k = int(np.argmin(np.abs(np.asarray(times) - t)))
    return float(values[k]), float(times[k])


def _gates(config, settings, times, rec, sandwich_min, fwd_final, fwd_half, drift):
    g = {}
    g["sandwich"] = {"value": sandwich_min, "threshold": -SANDWICH_TOL, "passed": bool(sandwich_min >= -SANDWICH_TOL)}
    ta, tb = settings.metric_times
    for n in (1, 2, 3):
        far, t_far = _at(times, rec[f"d{n}"], ta)
        near, t_near = _at(times, rec[f"d{n}"], tb)
        g[f"d{n}_halving"] = {"value": far / near if near > 0 else float("inf"), "at": [t_far, t_near],
                              "d_far": far, "d_near": near, "threshold": 0.5, "passed": bool(far <= 0.5 * near)}
    g["forward"] = {"value": fwd_final, "threshold": 1e-2, "half": fwd_half,
                    "passed": bool(fwd_final <= 1e-2 and fwd_final <= fwd_half)}
    if drift is not None:
        v = config.speeds[0]
        g["drift"] = {"value": drift, "target": v, "threshold": 1e-3, "passed": bool(abs(drift - v) <= 1e-3)}
    return g


def run_theorem12(config: SuperSubConfig, settings: Optional[RunSettings] = None) -> EntireSolutionReport:
    if config.scenario != "theorem12":
        raise ParameterError("configuration is not a theorem12 scenario", scenario=config.scenario)
    return run_entire(config, settings)


def run_theorem13(config: SuperSubConfig, settings: Optional[RunSettings] = None) -> EntireSolutionReport:
    if config.scenario != "theorem13":
        raise ParameterError("configuration is not a theorem13 scenario", scenario=config.scenario)
    return run_entire(config, settings)
