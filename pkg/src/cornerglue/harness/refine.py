"""Dyadic refinement studies with Richardson orders."""

import math

import numpy as np

from .. import geometry as geo
from ..errors import ParameterError
from ..glue import MEANCONVEX, robin_eigensolve, robin_root
from ..report import Report

ORDER_MIN = 1.9
EXACT_TOL = 1e-9


def _curvature_scene(scene, N):
    """Grid metric (no exact channels) and the exact scalar curvature."""
    if scene == "round-s3":
        g = geo.build_grid(0.3, 2.8, N, 0.5, 2.5, N)
        s2 = np.sin(g.T) ** 2
        W = geo.WarpedMetric(g, 1.0, s2, s2 * np.sin(g.R) ** 2)
        return W, 6.0
    if scene == "hyperbolic":
        g = geo.build_grid(0.5, 1.5, N, -0.5, 0.5, N)
        e = np.exp(2 * g.T)
        return geo.WarpedMetric(g, 1.0, e, e * g.R**2), -6.0
    if scene == "flat":
        g = geo.build_grid(0.5, 1.5, N, 0.0, 1.0, N)
        return geo.WarpedMetric(g, 1.0, 1.0, g.R**2), 0.0
    raise ParameterError(f"unknown curvature scene {scene!r}; use round-s3, hyperbolic or flat")


def _curvature_error(scene, N):
    W, exact = _curvature_scene(scene, N)
    R = geo.ambient_scalar_curvature(W, exact=False)
    return float(np.max(np.abs(R - exact)))


def _robin_error(scene, N):
    """Flat square [1, 2] x [0, 1], Neumann everywhere except Robin beta on r_max."""
    beta = float(scene) if scene not in (None, "", "flat-square") else 1.0
    g = geo.build_grid(1.0, 2.0, N, 0.0, 1.0, N).relabel(r_min="Z")
    W = geo.WarpedMetric(g, 1.0, 1.0, 1.0)
    c = geo.c_of_n(2)
    eig = robin_eigensolve(W, np.zeros(g.shape), {"r_max": np.full(g.Nt, beta)}, MEANCONVEX)
    k = robin_root(2 * beta / c)
    return abs(eig.lam - k * k)


def rayleigh_trials(beta=1.0, N=33, trials=50, seed=0):
    """lambda1 of the flat-square Robin problem against random positive trial functions."""
    from ..glue import robin_operator, rayleigh_quotient

    g = geo.build_grid(1.0, 2.0, N, 0.0, 1.0, N).relabel(r_min="Z")
    W = geo.WarpedMetric(g, 1.0, 1.0, 1.0)
    Vr = 0.5 + 0.5 * np.sin(3 * g.R) ** 2
    Vb = {"r_max": np.full(g.Nt, beta)}
    eig = robin_eigensolve(W, Vr, Vb, MEANCONVEX)
    A, m, _ = robin_operator(W, Vr, Vb)
    rng = np.random.default_rng(seed)
    quotients = [rayleigh_quotient(A, m, rng.uniform(0.1, 1.0, g.shape)) for _ in range(trials)]
    slack = min(quotients) - eig.lam
    rep = Report("refine:rayleigh", data={"lambda1": eig.lam, "rayleigh_at_w": eig.rayleigh, "min_trial": min(quotients), "trials": trials, "seed": seed})
    rep.at_least("trial_quotients_above_lambda1", slack, -1e-12 * max(1.0, abs(eig.lam)))
    rep.at_most("rayleigh_at_w", abs(eig.rayleigh - eig.lam), 1e-8 * max(1.0, abs(eig.lam)))
    return rep


OPS = {
    "curvature": (_curvature_error, "round-s3"),
    "robin": (_robin_error, "flat-square"),
}


def refinement_study(op, scene=None, levels=3, N0=17, seed=0):
    """Run ``op`` at N = (N0 - 1) 2^L + 1 for L < levels; orders from consecutive error ratios."""
    if op == "seam":
        return _seam_study(scene or "double-round-band")
    if op == "rayleigh":
        return rayleigh_trials(float(scene) if scene else 1.0, seed=seed)
    if op not in OPS:
        raise ParameterError(f"unknown refinement op {op!r}; known: {', '.join(sorted(OPS) + ['seam'])}")
    if levels < 3:
        raise ParameterError("a refinement study needs at least three levels")
    fn, default = OPS[op]
    scene = scene or default
    rows = []
    for L in range(levels):
        N = (N0 - 1) * 2**L + 1
        rows.append({"N": N, "error": fn(scene, N)})
    errs = [r["error"] for r in rows]
    if max(errs) <= EXACT_TOL:
        # exact at every level (e.g. flat space): nothing left to converge
        orders, monotone = [math.inf] * (levels - 1), True
    else:
        orders = [float(x) for x in geo.observed_order(np.maximum(errs, 1e-300))]
        monotone = all(a > b for a, b in zip(errs, errs[1:]))
    rep = Report(f"refine:{op}", data={"op": op, "scene": scene, "levels": rows, "orders": orders})
    rep.flag("monotone_errors", monotone, note="non-monotone error sequence" if not monotone else "")
    rep.at_least("observed_order", min(orders), ORDER_MIN)
    return rep


def _seam_study(scene):
    from .scenarios import run_scenario

    srep = run_scenario(scene)
    rep = Report("refine:seam", data={"op": "seam", "scene": scene, "runs": {}})
    for key, run in srep.data["runs"].items():
        rep.data["runs"][key] = run["data"].get("seams", [])
        for s, name in zip(rep.data["runs"][key], ("t0", "teps")):
            prefix = "" if key == "glue" else key + "."
            rep.at_least(f"{prefix}seam_order.{name}", s["order"] if not isinstance(s["order"], str) else math.inf, ORDER_MIN)
    if not srep.data["runs"]:
        rep.flag("scenario_ran", False, note=str(srep.data.get("error")))
    return rep


__all__ = ["refinement_study", "rayleigh_trials", "OPS", "ORDER_MIN"]
