"""Command line entry point.

Subcommands: ``fronts``, ``verify-q``, ``verify-shifts``, ``supersub`` and
``entire``.  Each writes a versioned JSON report into the output directory
and exits with 0 (pass), 1 (certification or metric failure), 2 (bad
configuration or arguments) or 3 (numerical divergence).  Errors are printed
to stdout as a JSON body.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .errors import ArityError, ConfigError, LatticeEntireError, ParameterError
from .experiment import (build_fronts, load_fronts, make_supersub_config, provenance, run_entire_experiment,
                         run_supersub)
from .supersub import SCHEMA_VERSION
from .verify import canonical_shift_params, verify_q, verify_shifts

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 1, 2, 3


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")


class _Parser(argparse.ArgumentParser):
    """argparse with configuration-error exit code and a JSON body."""

    def error(self, message):
        raise ConfigError(f"invalid arguments: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config JSON (defaults are used when omitted)")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides the config seed)")
    common.add_argument("--dump-fields", action="store_true", help="also write full lattice snapshots")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="lattice-entire", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("fronts", parents=[common], help="solve and cache the three fronts")

    q = sub.add_parser("verify-q", parents=[common], help="identity, gradient and factorization suites")
    q.add_argument("--a-values", type=float, nargs="+")
    q.add_argument("--samples", type=int)
    q.add_argument("--grad-samples", type=int)
    q.add_argument("--inject", choices=["qw_sign"], help="negative control: corrupt an analytic derivative")

    s = sub.add_parser("verify-shifts", parents=[common], help="closed-form shift system checks")
    s.add_argument("--from-fronts", action="store_true",
                   help="use the shift constants of the configured experiment instead of the reference set")

    ss = sub.add_parser("supersub", parents=[common], help="certify the super/sub pair")
    ss.add_argument("--L", type=float, dest="L", help="fixed interaction constant (disables automatic choice)")
    ss.add_argument("--scan-csv", action="store_true", help="write the per-point scan table")

    e = sub.add_parser("entire", parents=[common], help="run the entire-solution experiment")
    e.add_argument("--T-start", type=float, dest="T_start")
    e.add_argument("--T-end", type=float, dest="T_end")
    return p


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.out:
        cfg = cfg.with_overrides(output={"dir": args.out})
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
        ExperimentConfig.from_dict(cfg.to_dict())  # re-validate the seed range
    return cfg


def cmd_fronts(cfg, args, out: Path) -> int:
    fs = build_fronts(cfg)
    fs.write_summary(out / "fronts_summary.csv")
    rep = provenance(cfg, fs)
    rep.update(fronts=fs.summary_rows(), files=list(fs.paths), cache_hits=list(fs.hits), passed=True)
    _dump(rep, out / "fronts.json")
    return EXIT_PASS


def cmd_verify_q(cfg, args, out: Path) -> int:
    a_values = args.a_values or cfg.verify.a_values
    samples = cfg.verify.samples if args.samples is None else args.samples
    grad = cfg.verify.grad_samples if args.grad_samples is None else args.grad_samples
    if samples < 1 or grad < 1:
        raise ArityError("sample count must be at least 1", samples=samples, grad_samples=grad)
    rep = verify_q(a_values, samples, cfg.seed, grad, corrupt=args.inject)
    body = provenance(cfg)
    body.update(rep)
    _dump(body, out / "verify_q.json")
    if not rep["passed"]:
        print(json.dumps({"passed": False, "worst": rep["worst"]}, default=_default))
        return EXIT_FAIL
    return EXIT_PASS


def cmd_verify_shifts(cfg, args, out: Path) -> int:
    if args.from_fronts:
        fs = load_fronts(cfg)
        params = [make_supersub_config(cfg, fs).params]
    else:
        params = [canonical_shift_params(s) for s in ("theorem12", "theorem13")]
    rep = verify_shifts(params)
    body = provenance(cfg)
    body.update(rep)
    _dump(body, out / "verify_shifts.json")
    return EXIT_PASS if rep["passed"] else EXIT_FAIL


def cmd_supersub(cfg, args, out: Path) -> int:
    fs = load_fronts(cfg)
    res = run_supersub(cfg, fs, L=args.L)
    body = provenance(cfg, fs)
    body.update(res.to_dict())
    _dump(body, out / "supersub.json")
    if args.scan_csv:
        res.report.write_csv(out / "supersub_scan.csv")
    return EXIT_PASS if res.passed else EXIT_FAIL


def cmd_entire(cfg, args, out: Path) -> int:
    over = {k: getattr(args, k) for k in ("T_start", "T_end") if getattr(args, k) is not None}
    if over:
        cfg = cfg.with_overrides(run=over)
    if cfg.run.T_start is not None and cfg.run.T_start >= cfg.run.T_end:
        # fail before loading fronts or certifying
        raise ParameterError("degenerate run: T_start must be below T_end", T_start=cfg.run.T_start,
                             T_end=cfg.run.T_end)
    fs = load_fronts(cfg)
    dump = str(out / "entire_fields.csv") if args.dump_fields else None
    cert, rep = run_entire_experiment(cfg, fs, dump)
    body = provenance(cfg, fs)
    body["certification"] = {"passed": cert.passed, "L": cert.config.params.L, "M1": cert.report.M1,
                             "M2": cert.report.M2}
    body.update(rep.to_dict())
    _dump(body, out / "entire.json")
    rep.write_metric_csv(out / "entire_metrics.csv")
    return EXIT_PASS if rep.passed and cert.passed else EXIT_FAIL


COMMANDS = {"fronts": cmd_fronts, "verify-q": cmd_verify_q, "verify-shifts": cmd_verify_shifts,
            "supersub": cmd_supersub, "entire": cmd_entire}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _load_config(args)
        out = Path(cfg.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args, out)
    except LatticeEntireError as exc:
        body = exc.to_dict()
        body["schema_version"] = SCHEMA_VERSION
        print(json.dumps({"error": body}, default=_default))
        return exc.exit_code


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
