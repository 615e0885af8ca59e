"""Command-line front end.

Every command writes a JSON report (sorted keys, no timestamps) to
``--output`` or stdout.  Exit status: 0 when all checks pass, 1 on an
invariant violation or numerical failure, 2 on malformed input.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .comparison import CdParams
from .errors import MissingField, NeedleError, ParseError
from .isoperimetry import (
    CandidateSpec,
    check_brunn_minkowski,
    circle_instance,
    estimate_profile,
    needle_instance,
    randers_gaussian_instance,
    verify_main_inequality,
)
from .localization import (
    FiniteAsymSpace,
    check_cyclical_monotonicity,
    check_per_ray_mean_zero,
    decompose,
    default_eps_tight,
    gamma_edges,
    solve_potential,
)
from .model_profiles import model_profile
from .needle1d import (
    DEFAULT_SEED,
    AsymLine,
    check_cd_density,
    check_differential_form,
    check_mcp_ratio,
    exp_tilt,
    gaussian,
    sin_power,
    uniform,
)
from .norms import convexity_probe, norm_from_dict, reversibility_constant, smooth_norm

DEFAULT_THETAS = (0.25, 0.5, 0.75)


def parse_extended(text: str) -> float:
    """Parse a real allowing ``inf``, ``-inf``, ``pi``, ``2pi`` and ``pi/2``."""
    s = str(text).strip().lower().replace(" ", "").replace("*", "")
    try:
        return float(s)
    except ValueError:
        pass
    sign = -1.0 if s.startswith("-") else 1.0
    s = s.lstrip("+-")
    try:
        if s in ("inf", "infinity", "∞"):
            return sign * math.inf
        if "pi" in s:
            head, _, tail = s.partition("pi")
            value = (float(head) if head else 1.0) * math.pi
            if tail:
                if not tail.startswith("/"):
                    raise ValueError(tail)
                value /= float(tail[1:])
            return sign * value
    except ValueError:
        pass
    raise ParseError(f"cannot parse {text!r} as a number")


def _thetas(values):
    if not values:
        return list(DEFAULT_THETAS)
    out = []
    for v in values:
        out.extend(parse_extended(p) for p in str(v).split(",") if p)
    return out


def _params(K, N, n=1):
    try:
        return CdParams(parse_extended(K), parse_extended(N), n)
    except NeedleError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def density_from_dict(desc: dict):
    """Build a needle density from ``{"kind": ..., ...}`` (see docs/formats.md)."""
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ParseError("density descriptor needs a 'kind'")
    kind = desc["kind"]
    get = lambda key, default: parse_extended(desc.get(key, default))
    try:
        if kind == "uniform":
            return uniform(get("a", 0.0), get("b", 1.0))
        if kind == "gaussian":
            return gaussian(get("K", 1.0), get("center", 0.0), get("a", "-inf"), get("b", "inf"))
        if kind == "sin_power":
            K = desc.get("K")
            return sin_power(get("N", 3.0), None if K is None else parse_extended(K))
        if kind == "exp_tilt":
            return exp_tilt(get("rate", 1.0), get("a", 0.0), get("b", "inf"))
    except (TypeError, KeyError) as exc:
        raise ParseError(f"bad density descriptor: {exc}") from exc
    raise ParseError(f"unknown density kind {kind!r}")


def _threads():
    raw = os.environ.get("NEEDLE_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ParseError(f"NEEDLE_THREADS must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ParseError("NEEDLE_THREADS must be >= 1")
    return value


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        items = sorted(obj) if isinstance(obj, set) else obj
        return [_clean(v) for v in items]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _emit(report, args):
    text = json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _base(args, command):
    return {"command": command, "version": __version__, "seed": args.seed, "threads": _threads()}


# -- commands -------------------------------------------------------------------------

def cmd_profile(args):
    params = _params(args.K, args.N)
    D = parse_extended(args.D)
    thetas = _thetas(args.theta)
    prof = model_profile(params, D, thetas)
    if args.json or args.output:
        report = _base(args, "profile")
        report.update({"params": {"K": params.K, "N": params.N, "D": D}, "branch": prof.label,
                       "rows": [{"theta": t, "value": v} for t, v in zip(prof.theta, prof.values)]})
        _emit(report, args)
    else:
        for v in prof.values:
            print(f"{v:.7f}")
    return 0


def cmd_needle_check(args):
    desc = _load_json(args.input) if args.input else json.loads(args.density)
    if "density" in desc:
        desc = desc["density"]
    rho = density_from_dict(desc)
    params = _params(args.K, args.N)
    checks = ["cd", "mcp", "differential"] if args.check == "all" else [args.check]
    report = _base(args, "needle-check")
    report.update({"density": rho.describe(), "params": {"K": params.K, "N": params.N}, "results": {}})
    failed = False
    for name in checks:
        if name == "cd":
            res = check_cd_density(rho, params, trials=args.trials, seed=args.seed, tol=args.tol)
            out = res.to_dict()
            failed |= not res.passed
        elif name == "mcp":
            res = check_mcp_ratio(rho, params, trials=max(1, args.trials // 10), seed=args.seed, tol=args.tol)
            out = res.to_dict()
            failed |= not res.passed
        else:
            res = check_differential_form(rho, params)
            out = res.to_dict()
            failed |= not res.passed
        report["results"][name] = out
    report["passed"] = not failed
    _emit(report, args)
    return 1 if failed else 0


def _instance_space(data, repair):
    for key in ("d", "m", "f"):
        if key not in data:
            raise ParseError(f"instance is missing {key!r}")
    try:
        d = np.asarray(data["d"], dtype=float)
        m = np.asarray(data["m"], dtype=float)
        f = np.asarray(data["f"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad numeric data: {exc}") from exc
    points = data.get("points")
    build = FiniteAsymSpace.repaired if repair else FiniteAsymSpace
    return build(d, m, points=list(points) if points is not None else None), f


def cmd_localize(args):
    data = _load_json(args.input)
    space, f = _instance_space(data, args.metric_repair)
    sol = solve_potential(space, f)
    eps = default_eps_tight(space) if args.eps_tight is None else args.eps_tight
    dec = decompose(space, sol.phi, eps)
    res = check_per_ray_mean_zero(space, sol.phi, f, dec, sol.flow)
    monotone = check_cyclical_monotonicity(space, gamma_edges(space, sol.phi, eps), 1, args.max_subset)
    recon = dec.reconstruct(space.n)
    t_idx = sorted(dec.T_set)
    recon_err = float(np.max(np.abs(recon[t_idx] - space.m[t_idx]))) if t_idx else 0.0
    report = _base(args, "localize")
    scale = float(np.sum(np.abs(f) * space.m))
    report.update({
        "n_points": space.n,
        "objective": sol.objective,
        "dual_objective": sol.dual_objective,
        "duality_gap": sol.gap,
        "phi": sol.phi,
        "decomposition": dec.to_dict(space.points),
        "residuals": {"max_ray": res.max_ray_residual, "D_set": res.D_residual, "B_mass": res.B_mass,
                      "reconstruction": recon_err},
        "cyclically_monotone": monotone,
        "tolerances": {"eps_tight": eps, "residual": args.tol * max(scale, 1e-300)},
    })
    ok = monotone and res.max_ray_residual <= args.tol * max(scale, 1e-300) and res.D_residual <= args.tol * max(scale, 1e-300)
    report["passed"] = bool(ok)
    _emit(report, args)
    return 0 if ok else 1


def _iso_instance(args):
    if args.instance == "circle":
        return circle_instance(parse_extended(args.D or "1"), parse_extended(args.Lambda), args.n or 10_000)
    if args.instance == "needle":
        desc = json.loads(args.density) if args.density else {"kind": "gaussian", "K": 1.0}
        rho = density_from_dict(desc)
        params = _params(args.K, args.N)
        return needle_instance(rho, params, AsymLine(parse_extended(args.Lambda)),
                               parse_extended(args.D or "inf"))
    if args.instance == "randers":
        b = [parse_extended(v) for v in args.b.split(",")]
        norm = norm_from_dict({"form": "randers", "b": b})
        return randers_gaussian_instance(norm, parse_extended(args.K), size=args.n or 300)
    raise ParseError(f"unknown instance {args.instance!r}")


def cmd_isoperimetry(args):
    inst = _iso_instance(args)
    thetas = _thetas(args.theta)
    prof = estimate_profile(inst, thetas, CandidateSpec() if inst.kind == "lattice" else None)
    rep = verify_main_inequality(inst, prof)
    report = _base(args, "isoperimetry")
    report.update({
        "instance": {"kind": inst.kind, "D": inst.D, "Lambda": inst.Lambda,
                     "params": None if inst.params is None else {"K": inst.params.K, "N": inst.params.N},
                     "meta": inst.meta},
        "rows": rep.rows(),
        "argmin": prof.meta.get("argmin"),
        "tol_grid": rep.tol_grid,
        "violations": rep.violations,
        "passed": rep.passed,
    })
    _emit(report, args)
    return 0 if rep.passed else 1


def _interval(text):
    parts = [parse_extended(p) for p in text.split(",")]
    if len(parts) != 2 or parts[1] < parts[0]:
        raise ParseError(f"bad interval {text!r}")
    return tuple(parts)


def cmd_bm_check(args):
    rate = parse_extended(args.rate)
    lambdas = _thetas(args.lam) if args.lam else list(np.linspace(0.05, 0.95, 19))
    rep = check_brunn_minkowski(lambda t: rate * t, parse_extended(args.K), _interval(args.A0), _interval(args.A1),
                                lambdas, AsymLine(parse_extended(args.backward)), tol=args.tol)
    report = _base(args, "bm-check")
    report.update({"weight_rate": rate, "K": parse_extended(args.K), "rows": rep.rows,
                   "violations": rep.violations, "passed": rep.passed})
    _emit(report, args)
    return 0 if rep.passed else 1


def cmd_norm_info(args):
    desc = _load_json(args.input) if args.input else json.loads(args.norm)
    if "norm" in desc:
        desc = desc["norm"]
    norm = norm_from_dict(desc)
    report = _base(args, "norm-info")
    report.update({"norm": norm.describe(), "reversibility": reversibility_constant(norm)})
    if args.smooth:
        sm = smooth_norm(norm, args.smooth)
        report["smoothing"] = {"epsilon": args.smooth, "delta": sm.delta, "sandwich": sm.sandwich,
                               "reversibility": reversibility_constant(sm)}
    if norm.dim == 2:
        report["convexity_probe"] = convexity_probe(norm)
    _emit(report, args)
    return 0


PLOT_COLUMNS = ("theta", "I_est", "Lambda_inv_model", "margin")


def emit_plot_data(report_path, out=None) -> str:
    """CSV rows ``theta, I_est, Lambda_inv_model, margin`` from an isoperimetry report."""
    data = _load_json(report_path)
    if "rows" not in data:
        raise MissingField("report has no 'rows'")
    lines = []
    for row in data["rows"]:
        missing = [c for c in PLOT_COLUMNS if c not in row]
        if missing:
            raise MissingField(f"row is missing {missing}")
        lines.append([repr(float(row[c])) for c in PLOT_COLUMNS])
    if out is None:
        sink = sys.stdout
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        w.writerows(lines)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PLOT_COLUMNS)
            w.writerows(lines)
    return out


def cmd_plot_data(args):
    emit_plot_data(args.report, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="finsler-needles", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--output", "-o", default=None)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("profile", parents=[common], help="model isoperimetric profile")
    s.add_argument("--K", required=True)
    s.add_argument("--N", required=True)
    s.add_argument("--D", default="inf")
    s.add_argument("--theta", action="append")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("needle-check", parents=[common], help="1D curvature-dimension checks")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--density")
    g.add_argument("--input")
    s.add_argument("--K", required=True)
    s.add_argument("--N", required=True)
    s.add_argument("--check", choices=["cd", "mcp", "differential", "all"], default="cd")
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--tol", type=float, default=1e-9)
    s.set_defaults(func=cmd_needle_check)

    s = sub.add_parser("localize", parents=[common], help="needle decomposition of a finite instance")
    s.add_argument("--input", required=True)
    s.add_argument("--metric-repair", action="store_true")
    s.add_argument("--eps-tight", type=float, default=None)
    s.add_argument("--max-subset", type=int, default=4)
    s.add_argument("--tol", type=float, default=1e-7)
    s.set_defaults(func=cmd_localize)

    s = sub.add_parser("isoperimetry", parents=[common], help="profile estimate against the model bound")
    s.add_argument("--instance", choices=["circle", "needle", "randers"], required=True)
    s.add_argument("--D", default=None, help="circle length (1) or needle diameter bound (inf)")
    s.add_argument("--Lambda", default="1")
    s.add_argument("--n", type=int, default=None, help="circle points (10000) or lattice side (300)")
    s.add_argument("--K", default="1")
    s.add_argument("--N", default="inf")
    s.add_argument("--b", default="0.3,0")
    s.add_argument("--density", default=None)
    s.add_argument("--theta", action="append")
    s.set_defaults(func=cmd_isoperimetry)

    s = sub.add_parser("bm-check", parents=[common], help="1D Brunn-Minkowski check for weight exp(rate t)")
    s.add_argument("--K", required=True)
    s.add_argument("--A0", required=True)
    s.add_argument("--A1", required=True)
    s.add_argument("--rate", default="0")
    s.add_argument("--backward", default="1")
    s.add_argument("--lam", action="append")
    s.add_argument("--tol", type=float, default=1e-9)
    s.set_defaults(func=cmd_bm_check)

    s = sub.add_parser("norm-info", parents=[common], help="reversibility and smoothing of a norm")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--norm")
    g.add_argument("--input")
    s.add_argument("--smooth", type=float, default=None)
    s.set_defaults(func=cmd_norm_info)

    s = sub.add_parser("plot-data", parents=[common], help="CSV plot data from an isoperimetry report")
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_plot_data)
    return p


def _fail(exc, code):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if getattr(args, "tol", None) is not None and args.tol < np.finfo(float).eps:
            raise ParseError("tolerance overrides must be at least machine epsilon")
        return args.func(args)
    except (ParseError, MissingField, json.JSONDecodeError) as exc:
        return _fail(exc, 2)
    except (NeedleError, ArithmeticError, ValueError) as exc:
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
