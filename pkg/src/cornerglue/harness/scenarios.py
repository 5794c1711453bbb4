"""Data-driven scenario library.

A scenario is a JSON document::

    {
      "name": "...",
      "description": "...",
      "kind": "glue" | "concordance",
      "cross_section": {"backend": "annulus", "shape": "round", "r_min": .., "r_max": .., "Nr": ..,
                         "labels": {"r_min": "Z", "r_max": "Y"}},
      "minus": {side spec}, "plus": {side spec},        # kind "glue"
      "concordance": {"beta": .., "T": .., "Ns": ..},    # kind "concordance"
      "f": 0.2,
      "config": {GlueConfig fields},
      "expect": {"outcome": "pass"} | {"outcome": "error", "stage": "...", "error": "..."}
    }

Side specs are ``{"builder": "warped", "u": .., "rho": [c0, c1, ...], "T": .., "Ns": ..}``
(slices ``rho(s) h0`` with a polynomial ``rho`` in the collar coordinate).
"""

import json
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import CornerGlueError, FormatError, ParameterError
from ..geometry import ANNULUS, INTERVAL
from ..glue import GlueConfig, glue_pipeline
from ..report import Report
from ..sources import AnalyticSource
from .io import write_metric, write_report

SHAPES = ("round", "flat", "polar")
END_TOL = 1e-9


def library_dir():
    return resources.files("cornerglue") / "scenarios"


def list_scenarios():
    return sorted(p.name[:-5] for p in library_dir().iterdir() if p.name.endswith(".json"))


def load_scenario(name_or_path):
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        text = p.read_text()
    else:
        f = library_dir() / f"{name_or_path}.json"
        if not f.is_file():
            raise ParameterError(f"unknown scenario {name_or_path!r}; known: {', '.join(list_scenarios())}")
        text = f.read_text()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{name_or_path}:{exc.lineno}: {exc.msg}", line=exc.lineno) from exc
    for key in ("name", "kind", "cross_section", "expect"):
        if key not in spec:
            raise FormatError(f"scenario {name_or_path!r} lacks {key!r}")
    return spec


# ------------------------------------------------------------ builders


def cross_section(cs):
    shape = cs.get("shape", "round")
    if shape not in SHAPES:
        raise ParameterError(f"cross-section shape must be one of {SHAPES}")
    backend = cs.get("backend", ANNULUS)
    r = np.linspace(float(cs["r_min"]), float(cs["r_max"]), int(cs["Nr"]))
    A0 = np.ones_like(r)
    B0 = None
    if backend == ANNULUS:
        B0 = {"round": np.sin(r) ** 2, "flat": np.ones_like(r), "polar": r**2}[shape]
    labels = {"r_min": "Y", "r_max": "Y", "t_min": "Z", "t_max": "Z"}
    labels.update(cs.get("labels", {}))
    return r, backend, A0, B0, labels


def _poly_source(r, backend, A0, B0, labels, u, coeffs):
    c = np.asarray(coeffs, dtype=float)
    p0 = np.polynomial.Polynomial(c)
    p1, p2 = p0.deriv(1), p0.deriv(2)

    def fn(S, R):
        z = np.zeros_like(S)
        rho, r1, r2 = p0(S) + z, p1(S) + z, p2(S) + z
        d = {"u": u + z, "u_t": z, "A": rho * A0, "A_t": r1 * A0, "A_tt": r2 * A0}
        if B0 is not None:
            d.update({"B": rho * B0, "B_t": r1 * B0, "B_tt": r2 * B0})
        return d

    return AnalyticSource(r, backend, fn, labels, name="warped")


def _concordance_source(r, backend, A0, B0, labels, beta, end):
    """Collar at one end of rho(t) = 1 - beta (1 + cos pi t)/2 on [0, 1]; s measured from the face."""
    sg = -1.0 if end == 1 else 1.0

    def fn(S, R):
        t = end + sg * S
        z = np.zeros_like(S)
        rho = 1 - beta * (1 + np.cos(np.pi * t)) / 2 + z
        r1 = sg * beta * np.pi * np.sin(np.pi * t) / 2 + z
        r2 = beta * np.pi**2 * np.cos(np.pi * t) / 2 + z
        d = {"u": 1.0 + z, "u_t": z, "A": rho * A0, "A_t": r1 * A0, "A_tt": r2 * A0}
        if B0 is not None:
            d.update({"B": rho * B0, "B_t": r1 * B0, "B_tt": r2 * B0})
        return d

    return AnalyticSource(r, backend, fn, labels, name=f"concordance_end{end}")


def build_side(cs, side):
    r, backend, A0, B0, labels = cross_section(cs)
    if side.get("builder", "warped") != "warped":
        raise ParameterError(f"unknown side builder {side.get('builder')!r}")
    src = _poly_source(r, backend, A0, B0, labels, float(side.get("u", 1.0)), side.get("rho", [1.0]))
    return src.metric(np.linspace(0.0, float(side["T"]), int(side.get("Ns", 129))))


def _config(spec, f):
    kw = dict(spec.get("config", {}))
    kw["f"] = f
    return GlueConfig(**kw)


# ------------------------------------------------------------ running


def _expectation(rep, spec, err):
    exp = spec["expect"]
    if exp.get("outcome", "pass") == "error":
        got_stage = None if err is None else err.stage
        got_kind = None if err is None else type(err).__name__
        ok = err is not None and got_stage == exp.get("stage") and got_kind == exp.get("error", got_kind)
        rep.flag("expected_failure", ok, note=f"expected {exp.get('error', 'error')} at {exp.get('stage')}, got {got_kind} at {got_stage}")
    elif err is not None:
        rep.flag("unexpected_error", False, note=f"{type(err).__name__} at {err.stage}: {err}")


def _end_constancy(out, sigma_eps, product_side):
    """Max deviation of slices from the product face slice beyond |t| >= 2 sigma + eps."""
    t = out.grid.t_nodes
    sel = t >= sigma_eps if product_side == "plus" else t <= -sigma_eps
    j_end = -1 if product_side == "plus" else 0
    dev = 0.0
    for key in ("u", "A", "B"):
        v = getattr(out, key)
        if v is not None and np.any(sel):
            dev = max(dev, float(np.max(np.abs(v[sel] - v[j_end]))))
    return dev


def _glue_runs(spec):
    """Yield (label, minus, plus, product_side) for the pipeline runs of a scenario."""
    cs = spec["cross_section"]
    if spec["kind"] == "glue":
        yield "", build_side(cs, spec["minus"]), build_side(cs, spec["plus"]), None
        return
    if spec["kind"] != "concordance":
        raise ParameterError(f"unknown scenario kind {spec['kind']!r}")
    c = spec["concordance"]
    beta, T, Ns = float(c["beta"]), float(c["T"]), int(c.get("Ns", 129))
    r, backend, A0, B0, labels = cross_section(cs)
    s = np.linspace(0.0, T, Ns)
    for end in (0, 1):
        conc = _concordance_source(r, backend, A0, B0, labels, beta, end).metric(s)
        rho_end = 1 - beta * (1 + np.cos(np.pi * end)) / 2
        prod = _poly_source(r, backend, A0, B0, labels, 1.0, [rho_end]).metric(s)
        # the product collar lies beyond the concordance: before t = 0, after t = 1
        if end == 0:
            yield f"end{end}.", prod, conc, "minus"
        else:
            yield f"end{end}.", conc, prod, "plus"


def run_scenario(spec, out_dir=None):
    """Build the inputs, run the pipeline(s) and compare with the declared expectation."""
    if not isinstance(spec, dict):
        spec = load_scenario(spec)
    rep = Report(f"scenario:{spec['name']}", data={"scenario": spec["name"], "expect": spec["expect"], "runs": {}})
    err = None
    outs = {}
    try:
        for label, gm, gp, product_side in _glue_runs(spec):
            cfg = _config(spec, spec.get("f", 0.0))
            out, prep = glue_pipeline(gm, gp, cfg.f, cfg)
            rep.extend(prep, label)
            rep.data["runs"][label.rstrip(".") or "glue"] = prep.to_dict()
            outs[label.rstrip(".") or "glue"] = out
            if product_side is not None:
                trail = {d["stage"]: d for d in prep.data["trail"]}
                edge = 2 * trail["conformal"]["sigma"] + trail["bridge"]["eps"]
                rep.at_most(f"{label}product_end_constant", _end_constancy(out, edge, product_side), END_TOL)
    except CornerGlueError as exc:
        err = exc
        rep.data["error"] = exc.to_dict()
    _expectation(rep, spec, err)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for key, out in outs.items():
            write_metric(out, d / f"{spec['name']}.{key}.metric")
        write_report(rep, d / f"{spec['name']}.report.json")
    return rep


__all__ = ["list_scenarios", "load_scenario", "run_scenario", "build_side", "cross_section", "library_dir", "INTERVAL"]
