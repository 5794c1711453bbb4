"""Command-line entry point: ``cornerglue <subcommand> ...``.

Every subcommand writes its artifacts into ``--out DIR`` (default ``.``)
unless a file is named explicitly, prints a one-line summary, and exits 0
iff every verdict passes.
"""

import argparse
import os
import sys
from pathlib import Path

EXIT_FAIL = 1
EXIT_ERROR = 2


def _set_threads(n):
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _out(args, name):
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _finish(rep, path):
    from .io import write_report

    write_report(rep, path)
    status = "PASS" if rep.passed else "FAIL"
    print(f"{status} {rep.name}: {len(rep.verdicts) - len(rep.failures())}/{len(rep.verdicts)} verdicts pass -> {path}")
    for v in rep.failures():
        print(f"  failed {v.id}: value {v.value} threshold {v.threshold} {v.note}".rstrip())
    return 0 if rep.passed else EXIT_FAIL


# ------------------------------------------------------------ subcommands


def cmd_profile(args):
    import numpy as np

    from ..profiles import build_profile, certify_profile
    from ..report import Report
    from .io import write_csv

    params = {k: getattr(args, k) for k in ("eps", "delta", "sigma", "mu") if getattr(args, k) is not None}
    p = build_profile(args.kind, **params)
    t = np.sort(p.sample_points(args.samples))
    v, d1, d2, _ = p.derivs(t)
    csv_path = Path(args.out_file) if args.out_file else _out(args, f"profile_{args.kind}.csv")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(csv_path, ["t", "value", "d1", "d2"], [t, v, d1, d2])
    cert = certify_profile(p, n=max(args.samples, 10_000))
    rep = Report(f"profile:{args.kind}", data={"csv": csv_path.name, "certificate": cert.to_dict()})
    for c in cert.checks:
        rep.at_least(c.id, c.worst_margin, -1e-9, c.note)
        rep.verdicts[-1].passed = c.passed
    return _finish(rep, csv_path.with_suffix(".json"))


def cmd_curvature(args):
    import numpy as np

    from .. import geometry as geo
    from ..report import Report
    from .io import read_metric, write_csv

    W = read_metric(args.metric)
    R = geo.ambient_scalar_curvature(W, exact=False)
    stem = Path(args.metric).stem
    write_csv(_out(args, f"{stem}.R.csv"), ["r", "t", "R"], [W.grid.R.ravel(), W.grid.T.ravel(), R.ravel()])
    j, i = np.unravel_index(int(np.argmin(R)), R.shape)
    data = {
        "metric": str(args.metric),
        "min_R": {"value": float(R[j, i]), "t": float(W.grid.t_nodes[j]), "r": float(W.grid.r_nodes[i])},
        "max_R": float(np.max(R)),
        "H": {},
    }
    rep = Report("curvature", data=data)
    for side in W.grid.y_sides():
        H = geo.boundary_mean_curvature(W, side)
        data["H"][side] = {"min": float(np.min(H)), "max": float(np.max(H))}
    if args.expect_R is not None:
        rep.at_most("R_matches_expected", float(np.max(np.abs(R - args.expect_R))), args.tol)
    if args.require_positive:
        rep.at_least("min_R", float(np.min(R)), 0.0)
        rep.verdicts[-1].passed = bool(np.min(R) > 0)
    return _finish(rep, _out(args, f"{stem}.curvature.json"))


def cmd_normalform(args):
    from ..normalform import block_normal_form, interface_normal_log_u, verify_flow_function
    from ..report import Report
    from .io import read_collar, write_metric

    g, f = read_collar(args.collar)
    if f is None:
        from ..errors import FormatError

        raise FormatError(f"{args.collar}: the collar file needs an f column for the flow function")
    rep = Report("normalform")
    rep.extend(verify_flow_function(g, f), "flow.")
    W, info = block_normal_form(g, f, delta_collar=args.delta_collar, Nt=args.Nt, return_info=True, check=False)
    stem = Path(args.collar).stem
    path = write_metric(W, _out(args, f"{stem}.normal.metric"))
    rep.data.update({"metric": path.name, "delta_collar": info.delta_collar, "min_grad": info.min_grad, "boundary_drift": info.boundary_drift})
    rep.data["dnu_log_u"] = {side: interface_normal_log_u(W, side) for side in W.grid.y_sides()}
    rep.at_most("cross_term", float(abs(info.cross_term).max()), args.tol)
    return _finish(rep, _out(args, f"{stem}.normalform.json"))


def cmd_deform(args):
    from ..deform import CNORMAL, PRESCRIBE, DeformParams, c_normal_deform, calibrate_constants, prescribe_II, taylor_split
    from ..errors import ParameterError
    from ..report import Report
    from .io import read_k, read_metric, write_metric

    W = read_metric(args.metric)
    td = taylor_split(W, exact=False)
    k = read_k(args.k, td.h0) if args.k else None
    if args.stage == PRESCRIBE and k is None:
        raise ParameterError("--stage prescribe needs --k")
    trail = []
    if args.auto:
        p, trace = calibrate_constants(W, args.stage, k=k, eta=args.eta)
        trail = trace
    else:
        if None in (args.C, args.eps, args.delta):
            raise ParameterError("give --C, --eps and --delta, or --auto")
        p = DeformParams(args.C, args.delta, args.eps, args.eta)
    if args.stage == CNORMAL:
        out, vrep = c_normal_deform(W, td, p, verify=True)
    else:
        out, vrep = prescribe_II(W, k, p, td=td, verify=True)
    rep = Report(f"deform:{args.stage}", data={"params": p.to_dict(), "calibration": trail[-10:], "checks": vrep.data})
    rep.extend(vrep)
    stem = Path(args.metric).stem
    path = write_metric(out, _out(args, f"{stem}.{args.stage}.metric"))
    rep.data["metric"] = path.name
    return _finish(rep, _out(args, f"{stem}.{args.stage}.json"))


def cmd_glue(args):
    from ..glue import GlueConfig, glue_pipeline
    from .io import read_f, read_metric, write_metric

    gm, gp = read_metric(args.minus), read_metric(args.plus)
    f = read_f(args.f, gm.grid.Nr)
    kw = {"delta": args.delta, "mode": args.mode, "f": f, "auto": args.auto, "tol_min": args.tol}
    for k in ("C", "eps", "sigma", "Nt"):
        if getattr(args, k) is not None:
            kw[k] = getattr(args, k)
    cfg = GlueConfig(**kw)
    out, rep = glue_pipeline(gm, gp, f, cfg)
    path = write_metric(out, _out(args, "glued.metric"))
    rep.data["metric"] = path.name
    return _finish(rep, _out(args, "glued.report.json"))


def cmd_scenario(args):
    from .scenarios import list_scenarios, run_scenario

    if args.action == "list":
        for name in list_scenarios():
            print(name)
        return 0
    names = args.names or list_scenarios()
    code = 0
    for name in names:
        rep = run_scenario(name, out_dir=args.out_dir)
        code = max(code, _finish(rep, Path(args.out_dir) / f"{rep.data['scenario']}.report.json"))
    return code


def cmd_refine(args):
    from .refine import refinement_study

    rep = refinement_study(args.op, args.scene, args.levels, seed=args.seed)
    return _finish(rep, _out(args, f"refine_{args.op}.json"))


# ------------------------------------------------------------ parser


def build_parser():
    ap = argparse.ArgumentParser(prog="cornerglue", description="Corner-gluing desingularization toolkit.")
    ap.add_argument("--out", dest="out_dir", default=".", metavar="DIR", help="output directory (default .)")
    ap.add_argument("--tol", type=float, default=1e-6, help="tolerance for tolerance-based verdicts (default 1e-6)")
    ap.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread count")
    ap.add_argument("--seed", type=int, default=0, help="seed for random trial functions")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("profile", help="sample and certify a cutoff profile")
    p.add_argument("--kind", required=True, choices=["tau", "chi", "lambda", "phi", "bump", "clamp"])
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--out", dest="out_file", metavar="FILE", help="CSV path; the certificate goes next to it as .json")
    p.set_defaults(fn=cmd_profile)

    p = sub.add_parser("curvature", help="scalar and boundary mean curvature of a metric file")
    p.add_argument("--metric", required=True)
    p.add_argument("--expect-R", type=float, default=None, help="check R against this constant to --tol")
    p.add_argument("--require-positive", action="store_true")
    p.set_defaults(fn=cmd_curvature)

    p = sub.add_parser("normalform", help="block normal form of a collar file with an f column")
    p.add_argument("--collar", required=True)
    p.add_argument("--delta-collar", type=float, default=None)
    p.add_argument("--Nt", type=int, default=None)
    p.set_defaults(fn=cmd_normalform)

    p = sub.add_parser("deform", help="C-normal or prescribed-II deformation of a collar metric")
    p.add_argument("--stage", required=True, choices=["cnormal", "prescribe"])
    p.add_argument("--metric", required=True)
    p.add_argument("--k", default=None, help="face tensor file (prescribe stage)")
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--C", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--auto", action="store_true", help="calibrate C, eps, delta")
    p.set_defaults(fn=cmd_deform)

    p = sub.add_parser("glue", help="run the full gluing pipeline on two collar metric files")
    p.add_argument("--minus", required=True)
    p.add_argument("--plus", required=True)
    p.add_argument("--f", required=True, help="jump function file")
    p.add_argument("--mode", required=True, choices=["minimal", "meanconvex"])
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--C", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--Nt", type=int)
    p.add_argument("--auto", action="store_true", help="calibrate the deformation constants")
    p.set_defaults(fn=cmd_glue)

    p = sub.add_parser("scenario", help="run or list library scenarios")
    p.add_argument("action", choices=["run", "list"])
    p.add_argument("names", nargs="*", help="scenario names or JSON paths (default: all)")
    p.set_defaults(fn=cmd_scenario)

    p = sub.add_parser("refine", help="dyadic refinement study")
    p.add_argument("--op", required=True, choices=["curvature", "robin", "rayleigh", "seam"])
    p.add_argument("--scene", default=None)
    p.add_argument("--levels", type=int, default=3)
    p.set_defaults(fn=cmd_refine)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    from ..errors import CornerGlueError

    try:
        return args.fn(args)
    except CornerGlueError as exc:
        from ..report import Report

        rep = Report(f"{args.cmd}:error", data={"error": exc.to_dict()})
        rep.flag("completed", False, note=f"{type(exc).__name__}: {exc}")
        print(f"ERROR {type(exc).__name__}" + (f" at {exc.stage}" if exc.stage else "") + f": {exc}", file=sys.stderr)
        from .io import write_report

        write_report(rep, _out(args, f"{args.cmd}.error.json"))
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
