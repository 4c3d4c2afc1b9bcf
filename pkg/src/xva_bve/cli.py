"""Command-line front end: ``xva-bve <command> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 I/O error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import engine
from .bve import BveParams, write_csv as write_bve_csv
from .bve import sample as sample_bve
from .errors import OutputError, XvaError


def _emit(obj, out):
    """JSON to ``out`` (or stdout)."""
    if out:
        engine.write_json(obj, out)
    else:
        sys.stdout.write(engine.dumps_json(obj))


def _guard(fn, path, *args, **kw):
    try:
        return fn(*args, **kw)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None


def cmd_sample_bve(a):
    params = BveParams(a.alpha1, a.alpha2, a.alpha_bar)
    samples = sample_bve(params, a.seed, a.n)
    _guard(write_bve_csv, a.out, samples, a.out)
    return {"n": a.n, "seed": a.seed, "simultaneous_fraction": float(samples.simultaneous.mean()),
            "out": str(a.out)}


def cmd_simulate_defaults(a):
    cfg = engine.load_config(a.config)
    scen, _ = engine.simulate_defaults(cfg, a.n, a.seed)
    _guard(scen.write_csv, a.out, a.out)
    T = cfg.terms.T
    return {"n": len(scen), "default_fraction": float(np.mean(scen.tau <= T)),
            "simultaneous_fraction": float(np.mean(scen.simultaneous)), "out": str(a.out)}


def cmd_price_mc(a):
    cfg = engine.load_config(a.config)
    sol, bundle = engine.price_mc(cfg, a.drift, n=a.n, seed=a.seed, n_steps=a.n_steps)
    if a.profile:
        _guard(np.savetxt, a.profile, a.profile, sol.profile(bundle.grid), fmt="%.17g",
               delimiter=",", header="t,mean_v,mean_z", comments="")
    if a.dump_paths:
        _guard(bundle.write_csv, a.dump_paths, a.dump_paths)
    out = {"v0": sol.v0, "stderr": sol.stderr, "picard_iters": sol.picard_iters,
           "diagnostics": sol.diagnostics}
    _emit(out, a.out)
    return None


def cmd_price_pde(a):
    cfg = engine.load_config(a.config)
    surf = engine.price_pde(cfg, a.drift, n_x=a.nx, n_t=a.nt, n_i=a.ni)
    if a.surface:
        _guard(surf.write_csv, a.surface, a.surface)
    _emit({"v0": surf.v0, "picard_iters": len(surf.picard_trace), "grid_report": surf.grid_report},
          a.out)
    return None


def cmd_compare(a):
    cfg = engine.load_config(a.config)
    sweep = [float(x) for x in a.alpha_bar_sweep.split(",")] if a.alpha_bar_sweep else None
    rep = engine.compare_drifts(cfg, sweep, parallel=a.parallel_scenarios,
                                solvers=tuple(a.solvers.split(",")))
    _emit(rep.as_dict(), a.out)
    return None


def cmd_diagnose(a):
    cfg = engine.load_config(a.config)
    which = engine.DIAGNOSTICS if a.which == "all" else (a.which,)
    out = {}
    if "compensator" in which:
        rep = engine.compensator_report(cfg, a.n, a.seed)
        prefix = a.csv_prefix or "compensator"
        _guard(rep.write_csv, prefix, prefix)
        out["compensator"] = {c: {"max_abs_z": rep.max_abs_z(c), "csv": f"{prefix}_{c}.csv"}
                              for c in rep.rows}
    if "lando" in which or "payout" in which:
        for rep in engine.identity_reports(cfg, a.n, a.seed):
            tag = "payout" if rep.name == "continuous_payout" else "lando"
            if tag in which:
                out[rep.name] = rep.as_dict()
    if "orthogonality" in which:
        out["orthogonality"] = engine.orthogonality_diagnostic(cfg, a.n, a.seed).as_dict()
    _emit(out, a.out)
    return None


def cmd_validate(a):
    cfg = engine.load_config(a.config)
    _emit({"config_hash": cfg.config_hash, "assumptions": engine.validate_assumptions(cfg).as_dict()},
          a.out)
    return None


def cmd_run(a):
    cfg = engine.load_config(a.config)
    diags = None if a.diagnostics is None else tuple(d for d in a.diagnostics.split(",") if d)
    art = engine.run_scenario(cfg, diags, a.out_dir, solvers=tuple(a.solvers.split(",")))
    return {"directory": str(art.directory), "files": art.files}


def build_parser():
    p = argparse.ArgumentParser(prog="xva-bve", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample-bve", help="draw bivariate-exponential pairs to CSV")
    s.add_argument("--alpha-bar", type=float, required=True)
    s.add_argument("--alpha1", type=float, default=1.0)
    s.add_argument("--alpha2", type=float, default=1.0)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_sample_bve)

    s = sub.add_parser("simulate-defaults", help="default times tau1,tau2,tau,simultaneous to CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_simulate_defaults)

    s = sub.add_parser("price-mc", help="regression Monte Carlo price")
    s.add_argument("--config", required=True)
    s.add_argument("--drift", choices=["new", "bfp"], default="new")
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--n-steps", type=int)
    s.add_argument("--out", type=Path)
    s.add_argument("--profile", type=Path, help="CSV of t,mean_v,mean_z")
    s.add_argument("--dump-paths", type=Path, help="CSV of path_id,t,s,Lambda1,Lambda2")
    s.set_defaults(func=cmd_price_mc)

    s = sub.add_parser("price-pde", help="finite-difference price")
    s.add_argument("--config", required=True)
    s.add_argument("--drift", choices=["new", "bfp"], default="new")
    s.add_argument("--nx", type=int)
    s.add_argument("--nt", type=int)
    s.add_argument("--ni", type=int)
    s.add_argument("--out", type=Path)
    s.add_argument("--surface", type=Path, help="CSV surface dump t,x,I,u")
    s.set_defaults(func=cmd_price_pde)

    s = sub.add_parser("compare-drifts", help="both drifts, both solvers, drift decomposition")
    s.add_argument("--config", required=True)
    s.add_argument("--solvers", default="mc,pde")
    s.add_argument("--alpha-bar-sweep", help="comma-separated common-shock weights")
    s.add_argument("--parallel-scenarios", action="store_true")
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("diagnose", help="Monte Carlo diagnostics")
    s.add_argument("which", choices=engine.DIAGNOSTICS + ("all",))
    s.add_argument("--config", required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--csv-prefix", help="prefix for compensator tables (<prefix>_<candidate>.csv)")
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("validate", help="probe model assumptions")
    s.add_argument("--config", required=True)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("run", help="solvers plus diagnostics into an output directory")
    s.add_argument("--config", required=True)
    s.add_argument("--solvers", default="mc,pde")
    s.add_argument("--diagnostics", help="comma list or 'all' (default: from config)")
    s.add_argument("--out-dir", type=Path)
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
    except XvaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OutputError.exit_code
    if result is not None:
        sys.stdout.write(engine.dumps_json(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
