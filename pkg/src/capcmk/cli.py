"""Command-line front end: solve, verify, oracle, sweep, and selftest.

Exit codes: 0 success, 1 configuration or input error, 2 solve did not
converge (continuation stall or Newton failure), 3 a mandatory audit failed.
Output files are deterministic for identical inputs: JSON is written with
sorted keys, wall-clock timing is excluded, and every randomized battery
takes its seed from --seed.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audit import (
    af_inequality_check,
    estimates_audit,
    mixed_volume,
    save_embedding,
    steiner_sigma_check,
    steiner_volume_check,
    mixed_volume_repeated,
)
from .config import ConfigError, RunConfig, load_config
from .fields import (
    CapField,
    CapGrid,
    boundary_tau_identity_residual,
    load_field,
    save_field,
    tau_sharp,
)
from .geometry import (
    CapParams,
    ell_field,
    make_capillary_test_function,
    random_capillary_field,
    random_neumann_factor,
)
from .rotsym import barrier_height_check, cross_check_gap, save_profile, solve_rotsym
from .solver import (
    ContinuationStall,
    NewtonFailure,
    jacobian_fd_error,
    phi_q,
    residual,
    solve_path,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NO_CONVERGENCE = 2
EXIT_AUDIT = 3


def _fail(msg: str):
    print(msg, file=sys.stderr)


def _say(args, msg: str):
    if not args.quiet:
        print(msg)


def _jsonable(obj):
    """Strict-JSON copy: non-finite floats (corrupted-input audits) become null."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _parse_grid(text: str):
    m = re.fullmatch(r"(\d+)x(\d+)", text.strip())
    if not m:
        raise ConfigError(f"--grid expects NbetaxNphi (e.g. 64x128), got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.grid:
        nb, np_ = _parse_grid(args.grid)
        cfg = replace(cfg, nbeta=nb, nphi=np_)
        cfg.grid()
    return cfg


def _problem_dict(params: CapParams) -> dict:
    return {"n": params.n, "k": params.k, "p": params.p, "theta": params.theta}


def _phi_dict(cfg: RunConfig) -> dict:
    d = {"kind": cfg.phi_kind}
    if cfg.phi_kind == "constant":
        d["value"] = cfg.phi_value
    elif cfg.phi_kind == "cap_manufactured":
        d["r"] = cfg.phi_r
    elif cfg.phi_kind == "rotsym_expr":
        d["coeffs"] = list(cfg.phi_coeffs)
    else:
        d["path"] = cfg.phi_path
    return d


def _solution_audit(s: CapField, phi: CapField, cfg: RunConfig) -> dict:
    """Residual recheck plus the full geometric audit battery on one field."""
    params = cfg.params
    # stored fields are untrusted: a negative value under the fractional power
    # yields NaN, which correctly fails the threshold test below
    with np.errstate(invalid="ignore"):
        fint, gbd = residual(s, params.p, phi, params)
    imax = float(np.max(np.abs(fint)))
    bmax = float(np.max(np.abs(gbd)))
    g = s.grid
    scale = max(1.0, float(np.max(phi.values)))
    # a stored continuum solution carries the O(h^2) discretization residual,
    # so the acceptance line sits above it but far below any real corruption
    threshold = max(10.0 * cfg.schedule.tol_solve, 50.0 * g.dbeta**2 * scale)
    res = {
        "interior_max": imax,
        "robin_max": bmax,
        "threshold": threshold,
        "pass": bool(math.isfinite(imax) and math.isfinite(bmax)
                     and max(imax, bmax) <= threshold),
    }
    est = estimates_audit(s, phi, params, slope_slack=cfg.slope_slack)
    st_sigma = [steiner_sigma_check(s, t, params) for t in (0.1, 0.5, 1.0)]
    st_volume = [
        steiner_volume_check(s, r, params, tol=cfg.steiner_tol) for r in (0.1, 0.5, 1.0)
    ]
    mandatory = (
        res["pass"]
        and est["all_passed"]
        and all(c["pass"] for c in st_sigma)
        and all(c["pass"] for c in st_volume)
    )
    return {
        "residual": res,
        "estimates": est,
        "steiner_sigma": st_sigma,
        "steiner_volume": st_volume,
        "mandatory_pass": bool(mandatory),
    }


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ------------------------------------------------------------------


def cmd_solve(args) -> int:
    try:
        cfg = _load(args)
        grid = cfg.grid()
        phi = cfg.phi_field(grid)
    except (ConfigError, ValueError, OSError) as exc:
        _fail(f"config error: {exc}")
        return EXIT_CONFIG
    out = _outdir(args)
    _say(args, f"solve: n={cfg.params.n} k={cfg.params.k} p={cfg.params.p:g} "
               f"theta={cfg.params.theta:.6g} grid={cfg.nbeta}x{cfg.nphi}")
    report = {
        "problem": _problem_dict(cfg.params),
        "grid": {"nbeta": cfg.nbeta, "nphi": cfg.nphi},
        "phi": _phi_dict(cfg),
    }
    try:
        s, rep = solve_path(phi, cfg.params, cfg.schedule)
    except ContinuationStall as stall:
        report["solve"] = stall.report.to_dict()
        _write_json(report, out / "report.json")
        _fail(f"solve stalled: {stall}")
        return EXIT_NO_CONVERGENCE
    except NewtonFailure as exc:
        _fail(f"solve failed: {exc}")
        return EXIT_NO_CONVERGENCE
    except ValueError as exc:
        _fail(f"invalid problem: {exc}")
        return EXIT_CONFIG

    report["solve"] = rep.to_dict()
    ref = cfg.manufactured_reference(grid)
    if ref is not None:
        report["manufactured_sup_error"] = float(np.max(np.abs(s.values - ref.values)))
    audit = _solution_audit(s, phi, cfg)
    save_field(s, out / "solution.csv")
    save_embedding(s, out / "embedding.csv")
    _write_json(report, out / "report.json")
    _write_json(audit, out / "audit.json")
    _say(args, f"converged in {len(rep.t_steps)} continuation steps; "
               f"residual {rep.residual_norms[-1]:.3e}; "
               f"audits {'pass' if audit['mandatory_pass'] else 'FAIL'}")
    return EXIT_OK if audit["mandatory_pass"] else EXIT_AUDIT


def cmd_verify(args) -> int:
    try:
        cfg = _load(args)
        grid = cfg.grid()
    except (ConfigError, ValueError, OSError) as exc:
        _fail(f"config error: {exc}")
        return EXIT_CONFIG
    try:
        s = load_field(args.solution)
    except (OSError, ValueError) as exc:
        _fail(f"cannot read solution: {exc}")
        return EXIT_CONFIG
    if s.grid != grid:
        _fail(f"grid mismatch: solution has {s.grid!r}, config wants {grid!r}")
        return EXIT_CONFIG
    try:
        phi = cfg.phi_field(grid)
    except (ConfigError, ValueError, OSError) as exc:
        _fail(f"config error: {exc}")
        return EXIT_CONFIG
    audit = _solution_audit(s, phi, cfg)
    out = _outdir(args)
    _write_json(audit, out / "audit.json")
    ok = audit["mandatory_pass"]
    _say(args, f"verify: residual {audit['residual']['interior_max']:.3e} "
               f"(threshold {audit['residual']['threshold']:.3e}); "
               f"{'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_AUDIT


def cmd_oracle(args) -> int:
    try:
        cfg = _load(args)
        profile_fn = cfg.phi_profile()
    except (ConfigError, ValueError, OSError) as exc:
        _fail(f"config error: {exc}")
        return EXIT_CONFIG
    out = _outdir(args)
    report = {
        "problem": _problem_dict(cfg.params),
        "phi": _phi_dict(cfg),
        "oracle_cells": cfg.oracle_cells,
    }
    try:
        profile, rep = solve_rotsym(
            profile_fn, cfg.params, cfg.schedule, n_cells=cfg.oracle_cells
        )
    except ContinuationStall as stall:
        report["solve"] = stall.report.to_dict()
        _write_json(report, out / "report.json")
        _fail(f"oracle stalled: {stall}")
        return EXIT_NO_CONVERGENCE
    except NewtonFailure as exc:
        _fail(f"oracle failed: {exc}")
        return EXIT_NO_CONVERGENCE

    report["solve"] = rep.to_dict()
    barrier = barrier_height_check(profile, cfg.params)
    report["barrier"] = barrier
    if args.solution:
        try:
            s2 = load_field(args.solution)
        except (OSError, ValueError) as exc:
            _fail(f"cannot read solution: {exc}")
            return EXIT_CONFIG
        if abs(s2.grid.theta - cfg.params.theta) > 1e-12:
            _fail(f"theta mismatch: solution grid has {s2.grid.theta!r}, "
                  f"config wants {cfg.params.theta!r}")
            return EXIT_CONFIG
        report["cross_check_gap"] = cross_check_gap(profile, s2)
        _say(args, f"cross-check gap vs 2-D solution: {report['cross_check_gap']:.3e}")
    save_profile(profile, cfg.params, out / "profile.csv")
    _write_json(report, out / "report.json")
    _say(args, f"oracle converged; barrier audit {'pass' if barrier['pass'] else 'FAIL'}")
    return EXIT_OK if barrier["pass"] else EXIT_AUDIT


def _sweep_member(cfg: RunConfig, p: float, theta: float, out: Path, args) -> dict:
    name = f"p{p:g}_theta{theta:.6g}"
    rec = {"name": name, "p": p, "theta": theta}
    try:
        params = CapParams(n=cfg.params.n, k=cfg.params.k, p=p, theta=theta)
        mcfg = replace(cfg, params=params)
        grid = mcfg.grid()
        phi = mcfg.phi_field(grid)
    except (ConfigError, ValueError) as exc:
        rec.update(exit=EXIT_CONFIG, error=str(exc))
        return rec
    mdir = out / name
    mdir.mkdir(parents=True, exist_ok=True)
    report = {
        "problem": _problem_dict(params),
        "grid": {"nbeta": mcfg.nbeta, "nphi": mcfg.nphi},
        "phi": _phi_dict(mcfg),
    }
    try:
        s, rep = solve_path(phi, params, mcfg.schedule)
    except ContinuationStall as stall:
        report["solve"] = stall.report.to_dict()
        _write_json(report, mdir / "report.json")
        rec.update(exit=EXIT_NO_CONVERGENCE, error=f"stalled at t = {stall.t:.6f}")
        return rec
    except (NewtonFailure, ValueError) as exc:
        rec.update(exit=EXIT_NO_CONVERGENCE, error=str(exc))
        return rec

    report["solve"] = rep.to_dict()
    audit = _solution_audit(s, phi, mcfg)
    save_field(s, mdir / "solution.csv")
    _write_json(report, mdir / "report.json")
    _write_json(audit, mdir / "audit.json")
    items = {it["name"]: it for it in audit["estimates"]["items"]}
    rec.update(
        exit=EXIT_OK if audit["mandatory_pass"] else EXIT_AUDIT,
        height=items["height_positive"]["lhs"],
        max_s=float(np.max(s.values)),
        max_bound_margin=items["max_lower_bound"]["margin"],
        slope_pass=items["slope_bound"]["pass"],
        path_lam1min=min(rep.lam1min_trace),
        newton_steps=int(sum(rep.newton_iters)),
    )
    return rec


def cmd_sweep(args) -> int:
    try:
        cfg = _load(args)
    except (ConfigError, ValueError, OSError) as exc:
        _fail(f"config error: {exc}")
        return EXIT_CONFIG
    out = _outdir(args)
    points = [(p, th) for p in cfg.sweep_p for th in cfg.sweep_theta]
    _say(args, f"sweep: {len(points)} members over p in {list(cfg.sweep_p)}, "
               f"theta in {[f'{t:.6g}' for t in cfg.sweep_theta]}")
    with ThreadPoolExecutor(max_workers=min(4, len(points))) as pool:
        members = list(pool.map(lambda pt: _sweep_member(cfg, pt[0], pt[1], out, args), points))
    converged = [m for m in members if m["exit"] == EXIT_OK]
    summary = {
        "members": members,
        "all_ok": bool(all(m["exit"] == EXIT_OK for m in members)),
        "min_height": min((m["height"] for m in converged), default=None),
        "min_path_lam1min": min((m["path_lam1min"] for m in converged), default=None),
    }
    _write_json(summary, out / "sweep_summary.json")
    for m in members:
        status = "ok" if m["exit"] == EXIT_OK else f"exit {m['exit']}"
        _say(args, f"  {m['name']}: {status}")
    if summary["all_ok"]:
        _say(args, f"sweep complete; min height {summary['min_height']:.6g}")
        return EXIT_OK
    return max(m["exit"] for m in members)


def cmd_selftest(args) -> int:
    """Seeded identity battery against the pinned tolerances; no files written."""
    rng = np.random.default_rng(args.seed)
    theta = math.pi / 4
    params = CapParams(n=2, k=1, p=1.5, theta=theta)
    coarse = CapGrid(32, 64, theta)
    fine = CapGrid(64, 128, theta)
    checks = []

    tau = tau_sharp(ell_field(coarse))
    dev = max(
        float(np.max(np.abs(tau.a11 - 1.0))),
        float(np.max(np.abs(tau.a12))),
        float(np.max(np.abs(tau.a22 - 1.0))),
    )
    checks.append(("model endomorphism is the identity", dev, dev <= 4e-3))

    ok = True
    worst = 0.0
    for _ in range(3):
        v = random_neumann_factor(theta, rng)
        rc = boundary_tau_identity_residual(make_capillary_test_function(coarse, v))
        rf = boundary_tau_identity_residual(make_capillary_test_function(fine, v))
        worst = max(worst, rf / rc)
        ok = ok and rf < rc
    checks.append(("rim identity residual shrinks under refinement", worst, ok))

    s = random_capillary_field(coarse, rng)
    rec = steiner_sigma_check(s, 0.5, params)
    checks.append(("parallel-shift binomial expansion", rec["margin"], rec["pass"]))

    s0 = random_capillary_field(coarse, rng)
    s1 = random_capillary_field(coarse, rng)
    gap = abs(mixed_volume([s0, s1], params) - mixed_volume_repeated(s0, s1, params))
    rel = gap / max(1.0, abs(mixed_volume_repeated(s0, s1, params)))
    checks.append(("mixed volume matches the direct repeated form", rel, rel <= 1e-10))

    worst = 0.0
    ok = True
    for _ in range(5):
        a = random_capillary_field(coarse, rng)
        b = random_capillary_field(coarse, rng)
        m = af_inequality_check(a, b, params)["rel_margin"]
        worst = min(worst, m)
        ok = ok and m >= -1e-8
    eq = abs(af_inequality_check(s0, 1.3 * s0, params)["rel_margin"])
    checks.append(("quadratic mixed-volume inequality", worst, ok))
    checks.append(("inequality is tight on proportional pairs", eq, eq <= 1e-10))

    q = 1.0 + (params.p - 1.0)
    rhs = phi_q(CapField(coarse, np.full((33, 64), 1.2), even=True), q, params)
    v = CapField(coarse, rng.standard_normal((33, 64)))
    jerr = jacobian_fd_error(random_capillary_field(coarse, rng), q, rhs, params, v)
    checks.append(("assembled Jacobian matches finite differences", jerr, jerr <= 1e-5))

    failed = [c for c in checks if not c[2]]
    for name, value, ok in checks:
        _say(args, f"  {'ok  ' if ok else 'FAIL'} {name} ({value:.3e})")
    if failed:
        _fail(f"selftest: {len(failed)} of {len(checks)} checks failed")
        return EXIT_AUDIT
    _say(args, f"selftest: all {len(checks)} checks passed (seed {args.seed})")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="capcmk",
        description="Curvature-equation solver and verification suite on the spherical cap.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized batteries")
        p.add_argument("--grid", default=None, help="override grid as NbetaxNphi, e.g. 64x128")
        p.add_argument("--quiet", action="store_true", help="suppress status lines")

    p = sub.add_parser("solve", help="run the continuation solve and audits")
    common(p)
    p = sub.add_parser("verify", help="recheck a stored solution file")
    common(p)
    p.add_argument("--solution", required=True, help="stored solution CSV")
    p = sub.add_parser("oracle", help="run the 1-D rotationally symmetric reduction")
    common(p)
    p.add_argument("--solution", default=None,
                   help="optional 2-D solution CSV to cross-check against")
    p = sub.add_parser("sweep", help="solve a (p, theta) lattice concurrently")
    common(p)
    p = sub.add_parser("selftest", help="run the seeded identity battery")
    common(p, config_required=False)
    return ap


_COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
    "sweep": cmd_sweep,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
