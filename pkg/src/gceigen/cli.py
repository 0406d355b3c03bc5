"""Command-line front end: validate, solve, certify, oracle and sweep.

Configuration is one JSON document; command-line flags override its
fields, which override the built-in defaults.  Exit codes: 0 success,
2 invalid configuration or failed validation, 3 solver non-convergence,
4 failed ``--check``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .certify import admissibility_tol, apriori_bracket, certify, structural_checks
from .eigen import NoConvergenceError, estimate_contact_radius, solve_eigen
from .grid import Field, Grid, pde_residual, write_field_csv
from .manifest import FORMAT_VERSION, write_manifest
from .penalty import ContinuationError, SolverParams
from .problems import DEFAULT_SEED, builtin, from_dict, validate
from .radial import NotRotationalError, RadialProblem, separable_compose, smooth_fit_solve, write_phi_csv

log = logging.getLogger("gceigen")

EXIT_OK, EXIT_INVALID, EXIT_NOCONV, EXIT_CHECK = 0, 2, 3, 4
SWEEP_AXES = ("h", "tau", "width", "delta_floor")
DEFAULT_H = {1: 2e-3, 2: 0.02, 3: 0.1}
SOLVER_KEYS = {
    "newton_tol": "newton_tol", "max_iter": "max_iter", "damping_halvings": "damping_halvings",
    "eps_start": "eps_start", "eps_min": "eps_min", "delta_start": "delta_start",
    "delta_floor": "delta_min", "tol_lambda": "tol_lambda", "tol_u": "tol_u",
    "contact_tol": "contact_tol", "band_cells": "band_cells", "max_refinements": "max_refinements",
}
DEFAULTS = {
    "problem": None,
    "grid": {"h": None, "half_width": None, "lo": None, "hi": None},
    "solver": {},
    "certify": {"tau": 1.01, "width": None},
    "check": {"lambda_tol": None},
    "seed": DEFAULT_SEED,
    "output": "gceigen_out",
}
# constant sometimes quoted for the one-dimensional quartic example; it fails the smooth-fit conditions
_ALT_QUARTIC = (2.0 / 3.0) ** (2.0 / 3.0)


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# configuration


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file at ``path``, then ``overrides``."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        unknown = set(doc) - set(DEFAULTS) - {"builtin", "inline"}
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        if "builtin" in doc or "inline" in doc:
            if ("builtin" in doc) == ("inline" in doc) or "problem" in doc:
                raise ConfigError("problem: give exactly one of 'builtin' or 'inline'")
            doc["problem"] = doc.pop("builtin", None) or doc.pop("inline")
        cfg = _merge(cfg, doc)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def build_problem(cfg):
    prob = cfg.get("problem")
    if prob is None:
        raise ConfigError("problem: missing (give a built-in name or an inline definition)")
    if isinstance(prob, str):
        try:
            return builtin(prob)
        except KeyError as exc:
            raise ConfigError(f"problem: {exc.args[0]}") from exc
    if isinstance(prob, dict):
        try:
            return from_dict(prob)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"problem: missing or malformed field {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"problem: {exc}") from exc
    raise ConfigError("problem: must be a string or an object")


def build_grid(spec, cfg, R_contact, warnings):
    g = cfg["grid"]
    h = g.get("h") or DEFAULT_H.get(spec.n, 0.1)
    if not (isinstance(h, (int, float)) and h > 0):
        raise ConfigError("grid.h: must be a positive number")
    if g.get("lo") is not None or g.get("hi") is not None:
        try:
            lo = np.asarray(g["lo"], float).reshape(spec.n)
            hi = np.asarray(g["hi"], float).reshape(spec.n)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError("grid.lo/grid.hi: need two vectors of length n") from exc
    else:
        hw = g.get("half_width")
        if hw is None:
            hw = math.ceil(12 * R_contact) / 10
        lo, hi = -float(hw) * np.ones(spec.n), float(hw) * np.ones(spec.n)
    need = 1.2 * R_contact
    if np.any(lo > -need) or np.any(hi < need):
        new_lo, new_hi = np.minimum(lo, -need), np.maximum(hi, need)
        warnings.append(f"grid box [{lo.tolist()}, {hi.tolist()}] does not contain 1.2 * R_contact = {need:.4g}; "
                        f"expanded to [{new_lo.tolist()}, {new_hi.tolist()}]")
        lo, hi = new_lo, new_hi
    try:
        return Grid.from_spacing(lo, hi, h)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def build_params(cfg):
    s = cfg.get("solver") or {}
    unknown = set(s) - set(SOLVER_KEYS)
    if unknown:
        raise ConfigError(f"solver: unknown field(s) {sorted(unknown)}")
    try:
        return SolverParams(**{SOLVER_KEYS[k]: v for k, v in s.items() if v is not None})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc


# ---------------------------------------------------------------------------
# oracle


def oracle_for(spec, grid=None):
    """Independent reference for the problem class, or ``None``."""
    try:
        if spec.F.kind == "zero":
            if grid is None:
                return None
            fx = spec.f(grid.points())
            return {"kind": "degenerate", "lambda": float(np.min(fx)), "solution": None}
        if spec.symmetry == "rotational":
            sol = smooth_fit_solve(RadialProblem.from_spec(spec))
            return {"kind": "radial", "lambda": sol.lam, "r0": sol.r0, "solution": sol}
        if spec.symmetry == "separable":
            base = smooth_fit_solve(RadialProblem.separable_base(spec))
            lam, u = separable_compose(base, spec.n)
            return {"kind": "separable", "lambda": lam, "r0": base.r0, "solution": base, "field": u}
    except NotRotationalError as exc:
        log.info("no oracle: %s", exc)
    return None


def _oracle_section(spec, oracle, lam_star, grid, core):
    out = {"kind": oracle["kind"], "lambda": oracle["lambda"]}
    if "r0" in oracle:
        out["r0"] = oracle["r0"]
    if lam_star is not None:
        out["abs_error"] = abs(lam_star - oracle["lambda"])
    if oracle["kind"] == "separable" and grid is not None:
        u = Field(grid, oracle["field"](grid.points()))
        res = pde_residual(spec, oracle["lambda"], u, region=core)
        out["composed_residual"] = res.sup_abs_filtered
    if spec.name == "quartic1d":
        out["alternate_constant"] = _ALT_QUARTIC
        out["note"] = ("the value (2/3)^(2/3) quoted for this example does not satisfy phi'(r0)=1 and "
                       "phi''(r0)=0; the smooth-fit root (3/2)^(2/3) is used")
    return out


# ---------------------------------------------------------------------------
# runs


def _base_manifest(command, cfg, spec):
    return {
        "format_version": FORMAT_VERSION,
        "command": command,
        "status": "ok",
        "exit_code": EXIT_OK,
        "seed": int(cfg.get("seed", DEFAULT_SEED)),
        "config": cfg,
        "problem": spec.describe() if spec is not None else {"name": "unknown", "n": 0},
        "warnings": [],
        "timings": {},
    }


def _finish(doc, out_dir, code, status=None):
    doc["exit_code"] = code
    if status:
        doc["status"] = status
    write_manifest(doc, out_dir / "manifest.json")
    return code


def run(cfg, command="solve", check=False):
    """Execute one command with a merged configuration; returns the exit code."""
    t_total = time.perf_counter()
    out_dir = Path(cfg.get("output") or DEFAULTS["output"])
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = build_problem(cfg)
    doc = _base_manifest(command, cfg, spec)
    timings = doc["timings"]

    t = time.perf_counter()
    report = validate(spec, seed=doc["seed"])
    timings["validate"] = time.perf_counter() - t
    doc["validation"] = report.as_dict()
    if not report.ok:
        for c in report.failures():
            print(f"validation failed: {c.name} ({c.detail})", file=sys.stderr)
        timings["total"] = time.perf_counter() - t_total
        return _finish(doc, out_dir, EXIT_INVALID, "validation_failed")
    if command == "validate":
        timings["total"] = time.perf_counter() - t_total
        return _finish(doc, out_dir, EXIT_OK)

    R = estimate_contact_radius(spec)
    grid = build_grid(spec, cfg, R, doc["warnings"])
    for w in doc["warnings"]:
        log.warning(w)
    doc["grid"] = grid.describe()

    if command == "oracle":
        t = time.perf_counter()
        oracle = oracle_for(spec, grid)
        timings["oracle"] = time.perf_counter() - t
        if oracle is None:
            doc["error"] = "no oracle for this problem class"
            timings["total"] = time.perf_counter() - t_total
            return _finish(doc, out_dir, EXIT_INVALID, "error")
        doc["oracle"] = _oracle_section(spec, oracle, None, None, None)
        if oracle.get("solution") is not None:
            write_phi_csv(oracle["solution"], out_dir / "phi.csv")
        timings["total"] = time.perf_counter() - t_total
        return _finish(doc, out_dir, EXIT_OK)

    params = build_params(cfg)
    t = time.perf_counter()
    try:
        pair = solve_eigen(spec, grid, params, strict=True)
    except (NoConvergenceError, ContinuationError) as exc:
        timings["solve"] = time.perf_counter() - t
        doc["error"] = str(exc)
        pair = getattr(exc, "pair", None)
        if pair is not None:
            doc["lambda_star"] = pair.lam_star
            doc["delta_trace"] = pair.delta_trace
            doc["converged"] = False
        timings["total"] = time.perf_counter() - t_total
        return _finish(doc, out_dir, EXIT_NOCONV, "not_converged")
    timings["solve"] = time.perf_counter() - t
    write_field_csv(pair.u_star, out_dir / "u_star.csv")
    doc.update(
        lambda_star=pair.lam_star,
        delta_trace=pair.delta_trace,
        converged=pair.converged,
        contact_fraction=pair.residual.contact_fraction,
        residuals={"core": pair.residual.as_dict(), "full": pair.residual_full.as_dict(),
                   "band_cells": pair.band_cells},
    )
    doc["apriori"] = list(apriori_bracket(spec, R))
    eps_min = params.resolved_eps_min(grid)
    tol_c = admissibility_tol(grid, eps_min, spec.ell.c1)
    if not pair.degenerate:
        t = time.perf_counter()
        doc["structural"] = structural_checks(spec, pair, tol_c=tol_c, R_contact=R).as_dict()
        timings["structural"] = time.perf_counter() - t
    if command == "certify" and not pair.degenerate:
        t = time.perf_counter()
        cc = cfg.get("certify") or {}
        bounds = certify(spec, pair, tau=cc.get("tau", 1.01), width=cc.get("width"), tol_c=tol_c)
        doc["certificates"] = bounds.as_dict()
        timings["certify"] = time.perf_counter() - t

    t = time.perf_counter()
    oracle = oracle_for(spec, grid)
    timings["oracle"] = time.perf_counter() - t
    if oracle is not None:
        doc["oracle"] = _oracle_section(spec, oracle, pair.lam_star, grid, pair.core)
        if oracle.get("solution") is not None:
            write_phi_csv(oracle["solution"], out_dir / "phi.csv")

    code = EXIT_OK
    if check:
        checks = _acceptance_checks(spec, pair, doc, cfg, grid, params)
        doc["checks"] = checks
        if not all(checks.values()):
            code = EXIT_CHECK
            for k, v in checks.items():
                if not v:
                    print(f"check failed: {k}", file=sys.stderr)
    timings["total"] = time.perf_counter() - t_total
    return _finish(doc, out_dir, code, "check_failed" if code == EXIT_CHECK else "ok")


def _acceptance_checks(spec, pair, doc, cfg, grid, params):
    checks = {}
    lo, hi = doc["apriori"]
    tol = params.tol_lambda
    checks["apriori_bracket"] = all(lo - tol <= lam <= hi + tol for _, lam in pair.delta_trace) and \
        lo - tol <= pair.lam_star <= hi + tol
    if "oracle" in doc:
        lam_tol = (cfg.get("check") or {}).get("lambda_tol") or (5e-3 if spec.n == 1 else 2e-2)
        if doc["oracle"]["kind"] == "degenerate":
            checks["oracle_lambda"] = pair.lam_star == doc["oracle"]["lambda"]
        else:
            checks["oracle_lambda"] = doc["oracle"]["abs_error"] <= lam_tol
    if pair.degenerate:
        checks["residual"] = pair.residual.sup_abs_filtered <= 10 * grid.hmax
    else:
        checks["converged"] = bool(pair.converged)
        checks.update({f"structural_{k}": bool(v) for k, v in doc["structural"]["passed"].items()})
    return checks


# ---------------------------------------------------------------------------
# sweep


def _set_axis(cfg, axis, value):
    cfg = copy.deepcopy(cfg)
    if axis == "h":
        cfg["grid"]["h"] = value
    elif axis == "tau":
        cfg["certify"]["tau"] = value
    elif axis == "width":
        cfg["certify"]["width"] = value
    elif axis == "delta_floor":
        cfg["solver"]["delta_floor"] = value
    return cfg


def sweep(cfg, axis, values, check=False):
    """One sub-run per value in its own subdirectory plus ``sweep_summary.csv``."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    if not values:
        raise ConfigError("sweep: empty value list")
    root = Path(cfg.get("output") or DEFAULTS["output"])
    root.mkdir(parents=True, exist_ok=True)
    command = "certify" if axis in ("tau", "width") else "solve"
    rows, worst = [], EXIT_OK
    for i, value in enumerate(values):
        sub = _set_axis(cfg, axis, value)
        sub["output"] = str(root / f"{axis}_{i:02d}")
        t = time.perf_counter()
        try:
            code = run(sub, command, check=check)
        except ConfigError as exc:
            print(f"sub-run {i}: {exc}", file=sys.stderr)
            code = EXIT_INVALID
        runtime = time.perf_counter() - t
        worst = max(worst, code)
        lam = res = lam_plus = None
        mpath = Path(sub["output"]) / "manifest.json"
        if mpath.exists():
            doc = json.loads(mpath.read_text(encoding="utf-8"))
            lam = doc.get("lambda_star")
            res = (doc.get("residuals") or {}).get("core", {}).get("sup_abs_filtered")
            lam_plus = (doc.get("certificates") or {}).get("lambda_plus")
        rows.append([value, lam, res, lam_plus, runtime, code])
    with open(root / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "lambda_star", "residual", "lambda_plus", "runtime", "exit_code"])
        for r in rows:
            w.writerow(["" if x is None else x for x in r])
    return worst


# ---------------------------------------------------------------------------
# entry point


def _parser():
    p = argparse.ArgumentParser(prog="gceigen", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--problem", help="built-in problem name")
    common.add_argument("--h", type=float, help="grid spacing")
    common.add_argument("--half-width", type=float, help="half width of the cubic grid box")
    common.add_argument("--delta-floor", type=float, help="smallest discount in the schedule")
    common.add_argument("--eps-min", type=float, help="final penalty parameter")
    common.add_argument("--tau", type=float, help="scaling for the upper bound")
    common.add_argument("--width", type=float, help="mollifier radius for the upper bound")
    common.add_argument("--seed", type=int, help="seed for sampled validation checks")
    common.add_argument("--out", help="output directory")
    common.add_argument("--check", action="store_true", help="exit 4 when an acceptance check fails")
    common.add_argument("-v", "--verbose", action="store_true")
    for name, text in (("validate", "check problem assumptions"), ("solve", "compute the eigenpair"),
                       ("certify", "eigenpair plus test-function bounds"),
                       ("oracle", "radial smooth-fit reference only")):
        sub.add_parser(name, parents=[common], help=text)
    sw = sub.add_parser("sweep", parents=[common], help="repeat a run over parameter values")
    sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sw.add_argument("--values", required=True, help="comma-separated values")
    return p


def _overrides(args):
    o = {}
    if args.problem:
        o["problem"] = args.problem
    grid = {k: v for k, v in (("h", args.h), ("half_width", args.half_width)) if v is not None}
    if grid:
        o["grid"] = grid
    solver = {k: v for k, v in (("delta_floor", args.delta_floor), ("eps_min", args.eps_min)) if v is not None}
    if solver:
        o["solver"] = solver
    cert = {k: v for k, v in (("tau", args.tau), ("width", args.width)) if v is not None}
    if cert:
        o["certify"] = cert
    if args.seed is not None:
        o["seed"] = args.seed
    if args.out:
        o["output"] = args.out
    return o


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _overrides(args)
        if args.problem and args.config:
            overrides["problem"] = args.problem
        cfg = load_config(args.config, overrides)
        if args.command == "sweep":
            try:
                values = [float(v) for v in args.values.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"--values: {exc}") from exc
            return sweep(cfg, args.axis, values, check=args.check)
        return run(cfg, args.command, check=args.check)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
