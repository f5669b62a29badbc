"""Experiment drivers: fronts with an on-disk cache, certification and runs.

Everything here is a thin layer over the numerical modules; it turns an
``ExperimentConfig`` into solved fronts, a certified super/sub pair and an
entire-solution report, and keeps enough provenance (config digest, front
hashes) in every report to reproduce it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple

from .config import ExperimentConfig
from .entire import EntireSolutionReport, RunSettings, run_entire
from .errors import ConfigError, ConvergenceError
from .fronts import (DEFAULT_DXI, FrontProfile, critical_speed_info, measure_decay, solve_bistable_front,
                     solve_monostable_front)
from .interaction import ShiftParams, default_kappa, validate_kappa
from .supersub import SCHEMA_VERSION, SuperSubConfig, choose_L, gap_bound, residual_scan

log = logging.getLogger(__name__)

FRONT_IDS = ("front1", "front2", "front3")
RESIDUAL_GATE = 1e-3
SUMMARY_COLUMNS = ("front_id", "speed", "eta1", "eta2", "rho", "residual")


# ---------------------------------------------------------------------------
# front specifications and cache
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrontRequest:
    front_id: str
    kind: str  # bistable | monostable
    branch: Optional[str]
    speed: Optional[float]  # signed view speed; None for the bistable front
    critical: Optional[float]

    def key(self, cfg: ExperimentConfig) -> str:
        payload = {
            "kernel": cfg.build_kernel().to_dict(),
            "nonlinearity": _nonlinearity_key(cfg),
            "direction": list(cfg.direction),
            "kind": self.kind,
            "branch": self.branch,
            "speed": None if self.speed is None else repr(float(self.speed)),
            "dxi": repr(float(cfg.fronts.dxi)),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:24]


def _nonlinearity_key(cfg: ExperimentConfig) -> dict:
    n = cfg.nonlinearity
    return {"form": n.form, "a": repr(float(n.a)), "mu": [[repr(float(x)) for x in row] for row in n.mu],
            "params": {k: repr(float(v)) for k, v in sorted(n.params.items())}, "a3": n.a3}


def front_requests(cfg: ExperimentConfig) -> List[FrontRequest]:
    """The three fronts of the configured scenario, with their signed speeds.

    Front 2 is the 0 -> a front moving left; front 3 is a -> 1 (theorem12) or
    a -> 0 (theorem13) moving right.  Speeds not fixed in the config are the
    critical speed of the branch plus the configured margin.
    """
    k, f, e = cfg.build_kernel(), cfg.build_reaction(), cfg.build_direction()
    lower = critical_speed_info(k, f, "lower", e)
    s2 = cfg.speeds.front2 if cfg.speeds.front2 is not None else -(lower.value + cfg.speeds.margin2)
    if cfg.scenario == "theorem12":
        branch3 = "upper"
        crit3 = critical_speed_info(k, f, "upper", e).value
    else:
        branch3 = "lower"
        crit3 = lower.value
    s3 = cfg.speeds.front3 if cfg.speeds.front3 is not None else crit3 + cfg.margin3
    return [
        FrontRequest("front1", "bistable", None, None, None),
        FrontRequest("front2", "monostable", "lower", float(s2), lower.value),
        FrontRequest("front3", "monostable", branch3, float(s3), crit3),
    ]


def cache_dir(cfg: ExperimentConfig, out: Optional[str] = None) -> Path:
    if cfg.output.cache_dir:
        return Path(cfg.output.cache_dir)
    return Path(out or cfg.output.dir) / "fronts"


def _path(directory: Path, req: FrontRequest, cfg: ExperimentConfig) -> Path:
    return directory / f"{req.front_id}-{req.key(cfg)}.json"


def _solve(cfg: ExperimentConfig, req: FrontRequest) -> FrontProfile:
    k, f, e = cfg.build_kernel(), cfg.build_reaction(), cfg.build_direction()
    dxi = cfg.fronts.dxi
    if req.kind == "bistable":
        prof = solve_bistable_front(k, f, e, dxi=dxi)
    else:
        prof = solve_monostable_front(k, f, req.branch, req.speed, e, dxi=dxi, critical=req.critical)
    prof.decay = measure_decay(prof)
    return prof


def _attach(cfg: ExperimentConfig, prof: FrontProfile) -> FrontProfile:
    prof.kernel = cfg.build_kernel()
    prof.reaction = cfg.build_reaction()
    return prof


def _read(path: Path, cfg: ExperimentConfig) -> FrontProfile:
    with open(path) as fh:
        d = json.load(fh)
    # the reaction is rebuilt from the config; stored copies of named forms cannot be revived
    d.pop("reaction", None)
    return _attach(cfg, FrontProfile.from_dict(d))


def _write(path: Path, prof: FrontProfile) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        json.dump(prof.to_dict(), fh, sort_keys=True)
    os.replace(tmp, path)


def _cache_hit_ok(prof: FrontProfile) -> bool:
    """A cached profile is reused only if its residual re-checks against the current operator."""
    fresh = prof.table_residual()
    return fresh <= RESIDUAL_GATE and abs(fresh - prof.residual) <= 1e-9 * max(1.0, prof.residual)


@dataclass
class FrontSet:
    fronts: Tuple[FrontProfile, FrontProfile, FrontProfile]
    paths: Tuple[str, str, str]
    hits: Tuple[bool, bool, bool]

    @property
    def hashes(self) -> dict:
        return {fid: p.content_hash() for fid, p in zip(FRONT_IDS, self.fronts)}

    def summary_rows(self) -> List[dict]:
        rows = []
        for fid, p in zip(FRONT_IDS, self.fronts):
            d = p.decay
            rows.append({"front_id": fid, "speed": p.speed, "eta1": d.eta1, "eta2": d.eta2, "rho": d.rho,
                         "residual": p.residual})
        return rows

    def write_summary(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
            w.writeheader()
            for r in self.summary_rows():
                w.writerow({k: (v if isinstance(v, str) else repr(float(v))) for k, v in r.items()})


def build_fronts(cfg: ExperimentConfig, out: Optional[str] = None) -> FrontSet:
    """Solve (or load) the three fronts; cache files are left untouched on a hit."""
    directory = cache_dir(cfg, out)
    directory.mkdir(parents=True, exist_ok=True)
    fronts, paths, hits = [], [], []
    for req in front_requests(cfg):
        path = _path(directory, req, cfg)
        prof, hit = None, False
        if path.exists():
            cand = _read(path, cfg)
            if _cache_hit_ok(cand):
                prof, hit = cand, True
            else:
                log.warning("cached front %s failed its residual re-check; solving again", path.name)
        if prof is None:
            prof = _attach(cfg, _solve(cfg, req))
            _write(path, prof)
        fronts.append(prof)
        paths.append(str(path))
        hits.append(hit)
    return FrontSet(tuple(fronts), tuple(paths), tuple(hits))


def load_fronts(cfg: ExperimentConfig, out: Optional[str] = None) -> FrontSet:
    """Load cached fronts without solving; a missing file is a configuration error."""
    directory = cache_dir(cfg, out)
    fronts, paths = [], []
    for req in front_requests(cfg):
        path = _path(directory, req, cfg)
        if not path.exists():
            raise ConfigError("front cache missing; run the 'fronts' command with this config first",
                              front_id=req.front_id, expected_path=str(path))
        prof = _read(path, cfg)
        if not _cache_hit_ok(prof):
            raise ConvergenceError("cached front failed its residual re-check", front_id=req.front_id,
                                   path=str(path))
        fronts.append(prof)
        paths.append(str(path))
    return FrontSet(tuple(fronts), tuple(paths), (True, True, True))


# ---------------------------------------------------------------------------
# certification and runs
# ---------------------------------------------------------------------------


def make_supersub_config(cfg: ExperimentConfig, fs: FrontSet, L: Optional[float] = None) -> SuperSubConfig:
    """Super/sub configuration with shift constants from the config.

    ``L`` overrides the configured value; t0 is the earlier of the kappa
    validation time and the configured cap.
    """
    f1, f2, f3 = fs.fronts
    c1, c2, c3 = f1.speed, f2.speed, f3.speed
    s1 = 0.5 * (c2 - c1)
    s2 = c3 - 0.5 * (c1 + c2)
    sh = cfg.shift
    kappa = sh.kappa if sh.kappa is not None else default_kappa([p.decay for p in fs.fronts])
    L_val = sh.L if L is None else float(L)
    params = ShiftParams.from_p0(L_val, kappa, s1, s2, sh.p0, delta=sh.delta, scenario=cfg.scenario)
    base = SuperSubConfig(fs.fronts, cfg.build_kernel(), cfg.build_reaction(), params, scenario=cfg.scenario,
                          n_z=cfg.scan.n_z, n_t=cfg.scan.n_t, t_span=cfg.scan.t_span, margin=cfg.scan.margin)
    t0 = min(validate_kappa(params, min(base.etas)), sh.t0_cap)
    return base.with_params(replace(params, t0=t0))


@dataclass
class SuperSubResult:
    config: SuperSubConfig
    report: object
    gap: object
    trace: list

    @property
    def passed(self) -> bool:
        return bool(self.report.passed and self.gap.positive and self.gap.envelope_ok)

    def to_dict(self) -> dict:
        d = self.report.to_dict()
        d["gap_bound"] = self.gap.to_dict()
        d["choose_L_trace"] = self.trace
        d["passed"] = self.passed
        return d


def run_supersub(cfg: ExperimentConfig, fs: FrontSet, L: Optional[float] = None) -> SuperSubResult:
    """Residual scan and gap bound; L is chosen automatically unless overridden or disabled."""
    ss = make_supersub_config(cfg, fs, L)
    if L is None and cfg.shift.choose_L:
        res = choose_L(ss)
        ss, rep, trace = res.config, res.report, res.trace
    else:
        rep = residual_scan(ss)
        trace = []
    return SuperSubResult(ss, rep, gap_bound(ss), trace)


def run_settings(cfg: ExperimentConfig, dump_fields: Optional[str] = None) -> RunSettings:
    r = cfg.run
    return RunSettings(T_start=r.T_start, T_end=r.T_end, dt=r.dt, snapshot_every=r.snapshot_every, pad=r.pad,
                       initial=r.initial, metric_times=tuple(r.metric_times), dump_fields=dump_fields)


def run_entire_experiment(cfg: ExperimentConfig, fs: FrontSet,
                          dump_fields: Optional[str] = None) -> Tuple[SuperSubResult, EntireSolutionReport]:
    """Certify the pair first (the run starts from the lower function), then integrate."""
    cert = run_supersub(cfg, fs)
    return cert, run_entire(cert.config, run_settings(cfg, dump_fields))


def provenance(cfg: ExperimentConfig, fs: Optional[FrontSet] = None) -> dict:
    d = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "config_digest": cfg.digest()}
    if fs is not None:
        d["front_hashes"] = fs.hashes
    return d


__all__ = ["FRONT_IDS", "FrontRequest", "FrontSet", "SuperSubResult", "build_fronts", "cache_dir",
           "front_requests", "load_fronts", "make_supersub_config", "provenance", "run_entire_experiment",
           "run_settings", "run_supersub", "DEFAULT_DXI"]
