"""Experiment configuration: one JSON document, parsed strictly.

Every section is a small frozen dataclass.  Unknown keys anywhere raise
:class:`ConfigError`, and ``to_dict`` followed by ``from_dict`` is the
identity, so a resolved configuration can be embedded in every report and
replayed later.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, NonlinearityError
from .lattice import (CellFunctions, Direction, Kernel, PeriodicNonlinearity, gaussian_kernel,
                      nearest_neighbor_kernel)

SCENARIOS = ("theorem12", "theorem13")


def _check_keys(section: str, data: dict, allowed):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be a JSON object", section=section)
    extra = sorted(set(data) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(extra)}", section=section, keys=extra)


def _section(cls, name, data):
    data = {} if data is None else data
    _check_keys(name, data, [f.name for f in fields(cls)])
    try:
        return cls(**data)
    except TypeError as exc:  # wrong types surface here before validation
        raise ConfigError(f"bad value in '{name}': {exc}", section=name) from None


def _finite(name, x, lo=-math.inf, hi=math.inf, open_lo=False, open_hi=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigError(f"{name} must be a finite number", field=name, value=x)
    if x < lo or x > hi or (open_lo and x == lo) or (open_hi and x == hi):
        raise ConfigError(f"{name} out of range", field=name, value=x, low=lo, high=hi)
    return float(x)


def _posint(name, x, minimum=1):
    if isinstance(x, bool) or not isinstance(x, int) or x < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}", field=name, value=x)
    return x


# ---------------------------------------------------------------------------
# Named reaction families
# ---------------------------------------------------------------------------


def _cubic_exp(a: float, mu: float, gamma: float) -> CellFunctions:
    """mu u (u - a)(1 - u) exp(gamma u)."""

    def f(u):
        return mu * u * (u - a) * (1 - u) * np.exp(gamma * u)

    def p(u):
        return u * (u - a) * (1 - u)

    def dp(u):
        return -3 * u * u + 2 * (1 + a) * u - a

    def df(u):
        return mu * np.exp(gamma * u) * (dp(u) + gamma * p(u))

    def d2f(u):
        return mu * np.exp(gamma * u) * ((-6 * u + 2 * (1 + a)) + 2 * gamma * dp(u) + gamma ** 2 * p(u))

    return CellFunctions(f, df, d2f)


NAMED_REACTIONS = {"cubic_exp": (_cubic_exp, ("gamma",))}


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    type: str = "gaussian"  # gaussian | nearest | table
    half_width: int = 2
    variance: float = 1.0
    weights: Optional[list] = None

    def __post_init__(self):
        if self.type not in ("gaussian", "nearest", "table"):
            raise ConfigError("kernel type must be gaussian, nearest or table", type=self.type)
        _posint("kernel.half_width", self.half_width)
        _finite("kernel.variance", self.variance, 0.0, open_lo=True)
        if (self.type == "table") != (self.weights is not None):
            raise ConfigError("kernel weights are required for (and only for) type 'table'")

    def build(self) -> Kernel:
        if self.type == "gaussian":
            return gaussian_kernel(self.half_width, self.variance)
        if self.type == "nearest":
            return nearest_neighbor_kernel()
        return Kernel(self.half_width, np.asarray(self.weights, dtype=float))


@dataclass(frozen=True)
class NonlinearitySpec:
    form: str = "cubic"
    a: float = 0.02
    mu: list = field(default_factory=lambda: [[4.0]])
    params: dict = field(default_factory=dict)
    a3: str = "lower"  # how much of the secant condition the validator enforces

    def __post_init__(self):
        _finite("nonlinearity.a", self.a, 0.0, 1.0, open_lo=True, open_hi=True)
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 2 or mu.size == 0 or np.any(~np.isfinite(mu)) or np.any(mu <= 0):
            raise ConfigError("nonlinearity.mu must be a nonempty 2-D table of positive numbers")
        if self.a3 not in ("full", "lower", "off"):
            raise ConfigError("nonlinearity.a3 must be full, lower or off", a3=self.a3)
        if self.form != "cubic":
            if self.form not in NAMED_REACTIONS:
                raise ConfigError("unknown nonlinearity form", form=self.form, known=["cubic", *NAMED_REACTIONS])
            need = NAMED_REACTIONS[self.form][1]
            _check_keys("nonlinearity.params", self.params, need)
            missing = [k for k in need if k not in self.params]
            if missing:
                raise ConfigError("missing parameters for named nonlinearity", form=self.form, missing=missing)
        elif self.params:
            raise ConfigError("the cubic form takes no extra params")

    def build(self) -> PeriodicNonlinearity:
        mu = np.asarray(self.mu, dtype=float)
        try:
            if self.form == "cubic":
                return PeriodicNonlinearity(self.a, mu)
            maker, names = NAMED_REACTIONS[self.form]
            extra = [float(self.params[k]) for k in names]
            cells = tuple(tuple(maker(self.a, float(m), *extra) for m in row) for row in mu)
            return PeriodicNonlinearity(self.a, cells=cells, name=self.form)
        except NonlinearityError as exc:
            raise ConfigError(str(exc), **exc.context) from None


@dataclass(frozen=True)
class SpeedSpec:
    """Monostable front speeds.

    ``front2``/``front3`` fix the signed view speeds outright; otherwise the
    speed is the critical speed of the branch plus the margin.  A null
    ``margin3`` means 0.1 for theorem12 and 0.15 for theorem13.
    """

    front2: Optional[float] = None
    front3: Optional[float] = None
    margin2: float = 0.15
    margin3: Optional[float] = None

    def __post_init__(self):
        for k in ("front2", "front3"):
            v = getattr(self, k)
            if v is not None:
                _finite(f"speeds.{k}", v)
        _finite("speeds.margin2", self.margin2, 0.0, open_lo=True)
        if self.margin3 is not None:
            _finite("speeds.margin3", self.margin3, 0.0, open_lo=True)


@dataclass(frozen=True)
class ShiftSpec:
    kappa: Optional[float] = 0.25  # null: min(eta1, eta2, rho)/4
    L: float = 0.3
    p0: float = -0.5
    delta: Optional[float] = 0.2  # null: e^{kappa delta} = e^{-kappa r0}/4
    t0_cap: float = -150.0
    choose_L: bool = True

    def __post_init__(self):
        if self.kappa is not None:
            _finite("shift.kappa", self.kappa, 0.0, open_lo=True)
        _finite("shift.L", self.L, 0.0)
        _finite("shift.p0", self.p0)
        if self.delta is not None:
            _finite("shift.delta", self.delta)
        _finite("shift.t0_cap", self.t0_cap, hi=0.0)
        if not isinstance(self.choose_L, bool):
            raise ConfigError("shift.choose_L must be a boolean")


@dataclass(frozen=True)
class ScanSpec:
    n_z: int = 600
    n_t: int = 80
    t_span: float = 60.0
    margin: float = 30.0

    def __post_init__(self):
        _posint("scan.n_z", self.n_z, 2)
        _posint("scan.n_t", self.n_t, 2)
        _finite("scan.t_span", self.t_span, 0.0, open_lo=True)
        _finite("scan.margin", self.margin, 0.0)


@dataclass(frozen=True)
class RunSpec:
    T_start: Optional[float] = None
    T_end: float = 40.0
    dt: float = 0.05
    snapshot_every: float = 1.0
    pad: float = 40.0
    initial: str = "lower"
    metric_times: list = field(default_factory=lambda: [-35.0, -15.0])

    def __post_init__(self):
        if self.T_start is not None:
            _finite("run.T_start", self.T_start)
        _finite("run.T_end", self.T_end)
        _finite("run.dt", self.dt, 0.0, open_lo=True)
        _finite("run.snapshot_every", self.snapshot_every, 0.0, open_lo=True)
        _finite("run.pad", self.pad, 0.0)
        if self.initial not in ("lower", "upper", "average"):
            raise ConfigError("run.initial must be lower, upper or average", initial=self.initial)
        if len(self.metric_times) != 2:
            raise ConfigError("run.metric_times needs exactly two times (far, near)")
        for t in self.metric_times:
            _finite("run.metric_times", t)


@dataclass(frozen=True)
class FrontSpec:
    dxi: float = 0.05

    def __post_init__(self):
        _finite("fronts.dxi", self.dxi, 0.0, 1.0, open_lo=True)


@dataclass(frozen=True)
class VerifySpec:
    a_values: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    samples: int = 100000
    grad_samples: int = 1000

    def __post_init__(self):
        for a in self.a_values:
            _finite("verify.a_values", a, 0.0, 1.0, open_lo=True, open_hi=True)
        if isinstance(self.samples, bool) or not isinstance(self.samples, int) or self.samples < 0:
            raise ConfigError("verify.samples must be a nonnegative integer", value=self.samples)
        _posint("verify.grad_samples", self.grad_samples)


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    cache_dir: Optional[str] = None  # default: <dir>/fronts


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: KernelSpec = field(default_factory=KernelSpec)
    nonlinearity: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    direction: list = field(default_factory=lambda: [1, 0])
    scenario: str = "theorem12"
    speeds: SpeedSpec = field(default_factory=SpeedSpec)
    shift: ShiftSpec = field(default_factory=ShiftSpec)
    scan: ScanSpec = field(default_factory=ScanSpec)
    run: RunSpec = field(default_factory=RunSpec)
    fronts: FrontSpec = field(default_factory=FrontSpec)
    verify: VerifySpec = field(default_factory=VerifySpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    seed: int = 0

    _SECTIONS = {"kernel": KernelSpec, "nonlinearity": NonlinearitySpec, "speeds": SpeedSpec, "shift": ShiftSpec,
                 "scan": ScanSpec, "run": RunSpec, "fronts": FrontSpec, "verify": VerifySpec, "output": OutputSpec}

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError("scenario must be theorem12 or theorem13", scenario=self.scenario)
        if len(self.direction) != 2 or not all(isinstance(x, int) and not isinstance(x, bool) for x in self.direction):
            raise ConfigError("direction must be two integers [p, q]", direction=self.direction)
        if self.direction == [0, 0] or tuple(self.direction) == (0, 0):
            raise ConfigError("direction must be nonzero")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer", seed=self.seed)

    # -- parsing -----------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        top = [f.name for f in fields(cls)]
        _check_keys("<root>", data, top)
        kw = {}
        for k, v in data.items():
            if k in cls._SECTIONS:
                kw[k] = _section(cls._SECTIONS[k], k, v)
            else:
                kw[k] = v
        if "direction" in kw:
            kw["direction"] = list(kw["direction"])
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", path=str(path)) from None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """Replace fields inside sections: ``with_overrides(shift={"L": 0.0})``."""
        kw = {}
        for name, changes in sections.items():
            cur = getattr(self, name)
            if name in self._SECTIONS:
                _check_keys(name, changes, [f.name for f in fields(cur)])
                kw[name] = replace(cur, **changes)
            else:
                kw[name] = changes
        return replace(self, **kw)

    # -- builders ----------------------------------------------------------
    def build_kernel(self) -> Kernel:
        return self.kernel.build()

    def build_reaction(self) -> PeriodicNonlinearity:
        return self.nonlinearity.build()

    def build_direction(self) -> Direction:
        return Direction(*self.direction)

    @property
    def margin3(self) -> float:
        if self.speeds.margin3 is not None:
            return self.speeds.margin3
        return 0.1 if self.scenario == "theorem12" else 0.15
