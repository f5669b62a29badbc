"""Identity, gradient and factorization suites for Q, Q~ and the shift system.

These are the numerical checks behind the ``verify-q`` and
``verify-shifts`` commands.  Each suite returns a plain dict with a
``passed`` flag and the worst offending sample so that a failure can be
reported without re-running anything.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ArityError
from .interaction import (HESSIAN_FACTORS, ShiftParams, coupling_F, q_eval, q_forms, q_grad, q_hessian,
                          qtilde_eval, qtilde_forms, qtilde_grad, shift_eval, shift_gap_fit, shift_initial,
                          shift_limits, shift_slopes, ode_residual, SHIFT_NAMES)
from .lattice import PeriodicNonlinearity

FORM_TOL = 1e-12
FACE_TOL = 1e-12
GRAD_RTOL = 1e-6
GRAD_STEP = 1e-6
GRAD_FLOOR = 1e-4  # derivatives below this size are compared in absolute terms
FACE_GAP = 1e-3  # gradient samples keep this distance from every face
SWEEP = (1e-2, 1e-4, 1e-6)
SWEEP_VARIATION = 0.10
VANISH_FACTOR = 1e-1  # per-step shrink that marks a ratio as tending to zero
COUPLING_TOL = 1e-10
ODE_TOL = 1e-8
LIMIT_TOL = 1e-8
GAP_TOL = 1e-12

# shift constants used when no experiment supplies them
CANONICAL_SHIFT = dict(L=0.1, kappa=1.0, s1=0.5, s2=1.0, p0=-5.0)


def _need_samples(n):
    if n is None or int(n) < 1:
        raise ArityError("sample count must be at least 1", samples=n)
    return int(n)


def sample_d1(rng: np.random.Generator, a: float, n: int, gap: float = 0.0):
    """Uniform samples of [0,1] x [0,a] x [a,1], kept ``gap`` away from the faces."""
    y = rng.uniform(gap, 1 - gap, n)
    z = rng.uniform(gap, a - gap, n)
    w = rng.uniform(a + gap, 1 - gap, n)
    return y, z, w


def sample_tilde(rng: np.random.Generator, a: float, n: int, gap: float = 0.0):
    y = rng.uniform(gap, 1 - gap, n)
    z = rng.uniform(gap, a - gap, n)
    w = rng.uniform(gap, a - gap, n)
    return y, z, w


def _worst(err, y, z, w, a):
    k = int(np.argmax(err))
    return {"a": a, "y": float(y[k]), "z": float(z[k]), "w": float(w[k]), "error": float(err[k])}


# ---------------------------------------------------------------------------
# Q identities
# ---------------------------------------------------------------------------


def q_identity_suite(a_values: Sequence[float], samples: int, rng: np.random.Generator) -> dict:
    n = _need_samples(samples)
    out = {"per_a": {}, "passed": True, "worst": None}
    worst_err = -1.0
    for a in a_values:
        y, z, w = sample_d1(rng, a, n)
        forms = np.stack(q_forms(y, z, w, a))
        spread = np.max(forms, axis=0) - np.min(forms, axis=0)
        q = q_eval(y, z, w, a)
        in_range = bool(np.all((q >= -FACE_TOL) & (q <= 1 + FACE_TOL)))
        faces = _q_faces(rng, a, min(n, 2000))
        yt, zt, wt = sample_tilde(rng, a, n)
        tforms = np.stack(qtilde_forms(yt, zt, wt, a))
        tspread = np.max(tforms, axis=0) - np.min(tforms, axis=0)
        qt = qtilde_eval(yt, zt, wt, a)
        t_range = bool(np.all((qt >= -FACE_TOL) & (qt <= 1 + FACE_TOL)))
        tfaces = _qtilde_faces(rng, a, min(n, 2000))
        ok = (float(np.max(spread)) <= FORM_TOL and in_range and faces["max_error"] <= FACE_TOL
              and float(np.max(tspread)) <= FORM_TOL and t_range and tfaces["max_error"] <= FACE_TOL)
        out["per_a"][str(a)] = {
            "form_spread": float(np.max(spread)), "range_ok": in_range, "faces": faces,
            "tilde_form_spread": float(np.max(tspread)), "tilde_range_ok": t_range, "tilde_faces": tfaces,
            "passed": ok,
        }
        if float(np.max(spread)) > worst_err:
            worst_err = float(np.max(spread))
            out["worst"] = _worst(spread, y, z, w, a)
        out["passed"] &= ok
    return out


def _q_faces(rng, a, n):
    y, z, w = sample_d1(rng, a, n, gap=1e-9)
    zr = rng.uniform(0, a, n)
    checks = {
        "Q(y,0,w)=y": np.abs(q_eval(y, 0.0, w, a) - y),
        "Q(y,a,w)=w": np.abs(q_eval(y, a, w, a) - w),
        "Q(y,z,1)=1": np.abs(q_eval(y, z, 1.0, a) - 1.0),
        "Q(0,z,a)=z": np.abs(q_eval(0.0, zr, a, a) - zr),
    }
    errs = {k: float(np.max(v)) for k, v in checks.items()}
    return {"errors": errs, "max_error": max(errs.values())}


def _qtilde_faces(rng, a, n):
    y, z, w = sample_tilde(rng, a, n, gap=1e-9)
    zr = rng.uniform(0, a, n)
    checks = {
        "Qt(y,0,w)=y": np.abs(qtilde_eval(y, 0.0, w, a) - y),
        "Qt(y,a,w)=w": np.abs(qtilde_eval(y, a, w, a) - w),
        "Qt(y,z,0)=0": np.abs(qtilde_eval(y, z, 0.0, a)),
        "Qt(1,z,w)=1": np.abs(qtilde_eval(1.0, z, w, a) - 1.0),
        "Qt(0,z,a)=z": np.abs(qtilde_eval(0.0, zr, a, a) - zr),
    }
    errs = {k: float(np.max(v)) for k, v in checks.items()}
    return {"errors": errs, "max_error": max(errs.values())}


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def fd_gradient(fun, y, z, w, a, h: float = GRAD_STEP):
    """Central differences of ``fun(y, z, w, a)`` in each argument."""
    return (
        (fun(y + h, z, w, a) - fun(y - h, z, w, a)) / (2 * h),
        (fun(y, z + h, w, a) - fun(y, z - h, w, a)) / (2 * h),
        (fun(y, z, w + h, a) - fun(y, z, w - h, a)) / (2 * h),
    )


def gradient_errors(analytic, numeric):
    """Relative error per component, absolute below GRAD_FLOOR."""
    errs = []
    for an, fd in zip(analytic, numeric):
        scale = np.maximum(np.maximum(np.abs(an), np.abs(fd)), GRAD_FLOOR)
        errs.append(np.abs(an - fd) / scale)
    return np.max(np.stack(errs), axis=0)


def gradient_suite(a_values: Sequence[float], samples: int, rng: np.random.Generator,
                   corrupt: Optional[str] = None) -> dict:
    """Analytic gradients of Q and Q~ against central differences.

    ``corrupt="qw_sign"`` flips the sign of the analytic Q_w; it exists so the
    suite can be shown to catch a wrong derivative.
    """
    n = _need_samples(samples)
    out = {"per_a": {}, "passed": True, "worst": None, "corrupt": corrupt}
    worst = -1.0
    for a in a_values:
        res = {}
        for name, fun, grad, sampler in (("Q", q_eval, q_grad, sample_d1), ("Qt", qtilde_eval, qtilde_grad,
                                                                            sample_tilde)):
            y, z, w = sampler(rng, a, n, gap=FACE_GAP)
            g = grad(y, z, w, a)
            an = [g.qy, g.qz, g.qw]
            if corrupt == "qw_sign":
                an[2] = -an[2]
            err = gradient_errors(an, fd_gradient(fun, y, z, w, a))
            res[name] = float(np.max(err))
            if res[name] > worst:
                worst = res[name]
                out["worst"] = {**_worst(err, y, z, w, a), "function": name}
        ok = max(res.values()) <= GRAD_RTOL
        out["per_a"][str(a)] = {"max_rel_error": res, "passed": ok}
        out["passed"] &= ok
    return out


def sign_structure(a_values: Sequence[float], samples: int, rng: np.random.Generator) -> dict:
    """Where each partial of Q is negative on D1 (informational).

    Q_y and Q_w are nonnegative throughout; Q_z carries the factor (w - y)
    and is negative wherever y > w.
    """
    n = _need_samples(samples)
    out = {}
    for a in a_values:
        y, z, w = sample_d1(rng, a, n, gap=FACE_GAP)
        g = q_grad(y, z, w, a)
        neg_z = g.qz < -1e-12
        out[str(a)] = {
            "min_qy": float(np.min(g.qy)), "min_qz": float(np.min(g.qz)), "min_qw": float(np.min(g.qw)),
            "qz_negative_fraction": float(np.mean(neg_z)),
            "qz_negative_only_where_y_gt_w": bool(np.all(y[neg_z] > w[neg_z])),
        }
    return out


# ---------------------------------------------------------------------------
# Hessian factorizations
# ---------------------------------------------------------------------------

# For every factor: base point and the direction in which its prefactor
# vanishes linearly with the sweep distance d.
_FACE_PATHS = {
    "z": lambda a, d: ((0.4, d, 0.5 * (1 + a)), "z -> 0"),
    "a - z": lambda a, d: ((0.4, a - d, 0.5 * (1 + a)), "z -> a"),
    "1 - w": lambda a, d: ((0.4, 0.5 * a, 1 - d), "w -> 1"),
    "1 - y": lambda a, d: ((1 - d, 0.5 * a, 0.5 * (1 + a)), "y -> 1"),
    "y + (w - a)": lambda a, d: ((0.5 * d, 0.5 * a, a + 0.5 * d), "y -> 0, w -> a"),
    "(a - z) + (1 - w)": lambda a, d: ((0.4, a - 0.5 * d, 1 - 0.5 * d), "z -> a, w -> 1"),
}

_PREFACTOR_NAMES = {
    "R1": "z", "R2": "a - z", "R3": "1 - w", "R4": "1 - y", "R5": "1 - w", "R6+R7": "y + (w - a)",
    "R8": "1 - y", "R9": "z", "R10": "a - z", "R11": "1 - w", "R12": "1 - y", "R13": "1 - y", "R14": "z",
    "R15+R16": "(a - z) + (1 - w)",
}


def factor_sweeps(a_values: Sequence[float], distances=SWEEP, cap: float = 1e6) -> dict:
    """Ratio R_l along a path to the face where its prefactor vanishes.

    Distances are measured in units of min(a, 1 - a), the narrowest side of
    D1, so that the first sweep point is already close to the face for every a.
    """
    out = {"per_a": {}, "passed": True, "worst": None}
    worst = -1.0
    for a in a_values:
        width = min(a, 1 - a)
        rows = {}
        for label, pair, pref in HESSIAN_FACTORS:
            path = _FACE_PATHS[_PREFACTOR_NAMES[label]]
            vals = []
            for d in distances:
                (y, z, w), desc = path(a, d * width)
                hess = q_hessian(y, z, w, a)
                vals.append(hess[pair] / pref(y, z, w, a))
            vals = np.asarray(vals)
            bounded = bool(np.all(np.isfinite(vals)) and np.max(np.abs(vals)) <= cap)
            scale = float(np.max(np.abs(vals)))
            var = float((np.max(vals) - np.min(vals)) / scale) if scale > 0 else 0.0
            # a ratio shrinking in proportion to d means the partial vanishes faster than its
            # prefactor; the bound then holds with room to spare and there is no limit to compare
            vanishing = bool(np.all(np.abs(vals[1:]) <= VANISH_FACTOR * np.abs(vals[:-1])))
            ok = bounded and (var < SWEEP_VARIATION or vanishing)
            rows[label] = {"path": desc, "ratios": vals.tolist(), "variation": var, "vanishing": vanishing,
                           "passed": ok}
            if not ok and var > worst:
                worst = var
                out["worst"] = {"a": a, "factor": label, "variation": var, "ratios": vals.tolist()}
            out["passed"] &= ok
        out["per_a"][str(a)] = rows
    return out


# ---------------------------------------------------------------------------
# Coupling term
# ---------------------------------------------------------------------------


def coupling_suite(a_values: Sequence[float], samples: int, rng: np.random.Generator, mu: float = 1.0) -> dict:
    """Vanishing of the coupling term on the faces and its factorized ratio on sweeps."""
    n = _need_samples(samples)
    out = {"per_a": {}, "passed": True}
    for a in a_values:
        f = PeriodicNonlinearity(a, mu)
        y, z, w = sample_d1(rng, a, n, gap=1e-6)
        zr = rng.uniform(0, a, n)
        faces = {
            "F(1,z,w)": coupling_F(1.0, z, w, a, f),
            "F(y,0,w)": coupling_F(y, 0.0, w, a, f),
            "F(y,a,w)": coupling_F(y, a, w, a, f),
            "F(y,z,1)": coupling_F(y, z, 1.0, a, f),
            "F(0,z,a)": coupling_F(0.0, zr, a, a, f),
        }
        face_err = {k: float(np.max(np.abs(v))) for k, v in faces.items()}
        # the factorized ratio along sweeps toward each face
        base = (0.4, 0.5 * a, 0.5 * (1 + a))
        sweeps = {}
        for idx, target, name in ((0, 1.0, "y -> 1"), (1, 0.0, "z -> 0"), (1, a, "z -> a"), (2, 1.0, "w -> 1")):
            vals = []
            for d in SWEEP:
                p = list(base)
                p[idx] = target - d if target > base[idx] else target + d
                yy, zz, ww = p
                vals.append(float(coupling_F(yy, zz, ww, a, f) / ((1 - yy) * zz * (a - zz) * (1 - ww))))
            sweeps[name] = vals
        bounded = all(np.all(np.isfinite(v)) and max(abs(x) for x in v) < 1e6 for v in sweeps.values())
        ok = max(face_err.values()) <= COUPLING_TOL and bounded
        out["per_a"][str(a)] = {"faces": face_err, "ratio_sweeps": sweeps, "bounded": bounded, "passed": ok}
        out["passed"] &= ok
    return out


def verify_q(a_values: Sequence[float], samples: int, seed: int, grad_samples: int = 1000,
             corrupt: Optional[str] = None) -> dict:
    """All Q / Q~ suites; ``passed`` iff every suite passes."""
    _need_samples(samples)
    rng = np.random.default_rng(seed)
    rep = {
        "identities": q_identity_suite(a_values, samples, rng),
        "gradients": gradient_suite(a_values, grad_samples, rng, corrupt=corrupt),
        "factorizations": factor_sweeps(a_values),
        "coupling": coupling_suite(a_values, min(samples, 2000), rng),
        "sign_structure": sign_structure(a_values, min(samples, 10000), rng),
    }
    rep["passed"] = all(rep[k]["passed"] for k in ("identities", "gradients", "factorizations", "coupling"))
    failing = [k for k in ("identities", "gradients", "factorizations", "coupling") if not rep[k]["passed"]]
    rep["worst"] = {k: rep[k].get("worst") for k in failing}
    return rep


# ---------------------------------------------------------------------------
# Shift system
# ---------------------------------------------------------------------------


def canonical_shift_params(scenario: str = "theorem12") -> ShiftParams:
    c = CANONICAL_SHIFT
    return ShiftParams.from_p0(c["L"], c["kappa"], c["s1"], c["s2"], c["p0"], scenario=scenario)


def ode_oracle(params: ShiftParams, t_end: float) -> dict:
    """Integrate the shift ODEs from t = 0 down to ``t_end`` with an adaptive scheme."""
    L, k, s1, s2 = params.L, params.kappa, params.s1, params.s2
    flip = -1.0 if params.scenario == "theorem13" else 1.0

    def rhs(_t, v):
        p1, r1, p2, r2 = v
        return [s1 + L * np.exp(k * p1), s1 - L * np.exp(k * r1),
                s2 + flip * L * np.exp(k * p1), s2 - flip * L * np.exp(k * r1)]

    v0 = [shift_initial(params, n) for n in ("p1", "r1", "p2", "r2")]
    sol = solve_ivp(rhs, (0.0, t_end), v0, method="DOP853", rtol=1e-13, atol=1e-13)
    return dict(zip(("p1", "r1", "p2", "r2"), (float(x) for x in sol.y[:, -1])))


def _gap_scale(params: ShiftParams) -> float:
    return max(float(shift_eval(params, "p1", 0.0) - shift_eval(params, "r1", 0.0)), 1e-300)


def shift_suite(params: ShiftParams, t_limit: float = -200.0) -> dict:
    t = -np.geomspace(1e-3, 400.0, 300)
    res = {n: float(np.max(np.abs(ode_residual(params, n, t)))) for n in SHIFT_NAMES}
    lims = shift_limits(params)
    slopes = shift_slopes(params)
    lim_err = {n: float(abs(shift_eval(params, n, t_limit) - slopes[n] * t_limit - lims[n])) for n in SHIFT_NAMES}
    init_err = {n: float(abs(shift_eval(params, n, 0.0) - shift_initial(params, n))) for n in SHIFT_NAMES}
    oracle_t = -5.0
    oracle = ode_oracle(params, oracle_t)
    oracle_err = {n: float(abs(shift_eval(params, n, oracle_t) - oracle[n])) for n in SHIFT_NAMES}
    # beyond t_floor the gap drops below the roundoff of the shifts themselves
    t_floor = max(-400.0, np.log(1e-9 / _gap_scale(params)) / (params.kappa * params.s1))
    tt = -np.geomspace(1e-3, -t_floor, 400)[::-1]
    gap = shift_gap_fit(params, np.append(tt, 0.0))
    g = shift_eval(params, "p1", tt) - shift_eval(params, "r1", tt)
    bound_ok = bool(np.all(g <= gap.N * np.exp(params.kappa * params.s1 * tt) * (1 + 1e-12)))
    ok = (max(res.values()) <= ODE_TOL and max(lim_err.values()) <= LIMIT_TOL and max(init_err.values()) <= 1e-12
          and max(oracle_err.values()) <= 1e-8 and gap.max_identity_error <= GAP_TOL and gap.positive
          and bound_ok)
    return {
        "scenario": params.scenario, "params": params.to_dict(), "ode_residual": res, "limit_error": lim_err,
        "limits": {k: float(v) for k, v in lims.items()}, "initial_error": init_err, "oracle_error": oracle_err,
        "gap": gap.to_dict(), "gap_bound_ok": bound_ok, "passed": bool(ok),
    }


def verify_shifts(params_list: Sequence[ShiftParams]) -> dict:
    rows = [shift_suite(p) for p in params_list]
    return {"suites": rows, "passed": all(r["passed"] for r in rows)}
