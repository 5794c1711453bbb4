"""Local deformations near a face at t = 0 (collar t >= 0).

``c_normal_deform`` replaces the Taylor tail of the slice family by
``-C t^2 h0`` under a logarithmic cutoff, and ``prescribe_II`` bends the
first-order coefficient from ``h1`` to a prescribed ``k`` while freezing the
warping factor.  Both act on metric sources so that their outputs can be
evaluated, with exact t-derivatives, on scales far below any grid spacing.
Every post-condition is checked on the output with the geometry operators.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import geometry as geo
from .errors import ConvergenceError, ParameterError, PreconditionError, VerificationError
from .geometry import RadialSymTensor, CrossSectionMetric
from .profiles import build_chi, build_lambda, build_tau
from .report import Report
from .sources import MetricSource, as_source

LAMBDA_EPS_MAX = 0.2

_FWD4_1 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_FWD4_2 = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0


@dataclass(frozen=True)
class DeformParams:
    C: float
    delta: float
    eps: float
    eta: float = 0.1

    def __post_init__(self):
        if not self.C > 0:
            raise ParameterError("C must be positive", C=self.C)
        if not 0 < self.delta < 0.25:
            raise ParameterError("delta must lie in (0, 1/4)", delta=self.delta)
        if not 0 < self.eps < 0.5:
            raise ParameterError("eps must lie in (0, 1/2)", eps=self.eps)
        if self.C * self.eps > 1 + 1e-12:
            raise ParameterError("C * eps must not exceed 1", C=self.C, eps=self.eps)
        if not self.eta > 0:
            raise ParameterError("eta must be positive", eta=self.eta)

    def to_dict(self):
        return {"C": self.C, "delta": self.delta, "eps": self.eps, "eta": self.eta}


@dataclass(frozen=True)
class TaylorData:
    """h_t = h0 - 2t h1 + t^2/2 hddot0 + Q_t on the collar nodes."""

    h0: CrossSectionMetric
    h1: RadialSymTensor
    hddot0: RadialSymTensor
    t_nodes: np.ndarray
    Q: list = field(repr=False)
    q_ratios: np.ndarray = field(default=None, repr=False)

    def reconstruct(self, j):
        t = self.t_nodes[j]
        out = []
        for h0, h1, hd, q in (
            (self.h0.A, self.h1.p_rr, self.hddot0.p_rr, self.Q[j].p_rr),
            (self.h0.B, self.h1.p_tt, self.hddot0.p_tt, self.Q[j].p_tt),
        ):
            out.append(None if h0 is None else h0 - 2 * t * h1 + 0.5 * t * t * hd + q)
        return out


def _face_index(W):
    t = W.grid.t_nodes
    j0 = int(np.argmin(np.abs(t)))
    if abs(t[j0]) > 1e-12 * max(1.0, abs(t[-1])):
        raise ParameterError("the grid must contain the face t = 0")
    if j0 != 0:
        raise ParameterError("the collar must lie on t >= 0 (flip the side first)")
    return j0


def taylor_split(W, exact=True, check=True):
    """Second-order Taylor data at the face t = 0 and the remainder Q_t."""
    _face_index(W)
    if W.grid.Nt < 6:
        raise ParameterError("taylor_split needs at least 6 t-nodes on the collar")
    ann = W.B is not None
    names = ("A", "B") if ann else ("A",)
    h1, hd = {}, {}
    if exact and W.has_channels():
        for k in names:
            h1[k] = -0.5 * W.channels[k + "_t"][0]
            hd[k] = W.channels[k + "_tt"][0].copy()
    else:
        dt = W.grid.dt
        for k in names:
            f = getattr(W, k)
            h1[k] = -0.5 * np.tensordot(_FWD4_1, f[:5], axes=1) / dt
            hd[k] = np.tensordot(_FWD4_2, f[:6], axes=1) / dt**2
    t = W.grid.t_nodes
    h0 = W.slice(0)
    Q = []
    for j in range(W.grid.Nt):
        q = {}
        for k in names:
            q[k] = getattr(W, k)[j] - (getattr(h0, k) - 2 * t[j] * h1[k] + 0.5 * t[j] ** 2 * hd[k])
        Q.append(RadialSymTensor(q["A"], q.get("B")))
    ratios = np.array([np.max(geo.norm(h0, Q[j])) / t[j] ** 2 for j in (1, 2, 3)])
    td = TaylorData(
        h0,
        RadialSymTensor(h1["A"], h1.get("B")),
        RadialSymTensor(hd["A"], hd.get("B")),
        t.copy(),
        Q,
        ratios,
    )
    if check and np.max(ratios) > 1e-9 and not np.all(np.diff(ratios) > 0):
        raise VerificationError(
            "remainder is not o(t^2) on the first nodes; input looks non-smooth",
            stage="taylor_split",
            ratios=ratios,
        )
    return td


# ------------------------------------------------------------ C-normal


class CNormalSource(MetricSource):
    """h -> h - tau P with P = t^2/2 (hddot0 + 2C h0) + Q_t; u untouched.

    Below ``T_SWITCH`` the remainder is the cubic model t^3 h3 / 6, with h3
    matched to Q'' at the switch.  Forming Q by subtraction there would be
    pure rounding noise, and tau'' ~ 1/(t^2 |log delta|) amplifies it.
    Where tau = 1 the output is set to the C-normal form exactly.
    """

    T_SWITCH = 1e-3

    def __init__(self, base, td, p):
        super().__init__(base.r_nodes, base.backend, base.labels, base.t_range)
        self.base = base
        self.td = td
        self.p = p
        self.tau = build_tau(p.delta, p.eps)
        self.support = p.eps
        self.names = ("A", "B") if self.backend == geo.ANNULUS else ("A",)
        ds = base.eval(np.array([self.T_SWITCH]))
        self.h3 = {k: (ds[k + "_tt"][0] - self._coef(k)[2]) / self.T_SWITCH for k in self.names}

    def _coef(self, name):
        td = self.td
        if name == "A":
            return td.h0.A, td.h1.p_rr, td.hddot0.p_rr
        return td.h0.B, td.h1.p_tt, td.hddot0.p_tt

    def target(self, t, name):
        """Slice of the C-normal form and its two t-derivatives."""
        C = self.p.C
        h0, h1, _ = self._coef(name)
        h0, h1 = h0[None, :], h1[None, :]
        t = np.asarray(t, dtype=float)[:, None]
        return h0 - 2 * t * h1 - C * t * t * h0, -2 * h1 - 2 * C * t * h0, -2 * C * h0 + 0 * t

    def _P(self, t, d, name):
        h0, h1, hd = (x[None, :] for x in self._coef(name))
        T = t[:, None]
        K = hd + 2 * self.p.C * h0
        Q = d[name] - (h0 - 2 * T * h1 + 0.5 * T * T * hd)
        Q1 = d[name + "_t"] + 2 * h1 - T * hd
        Q2 = d[name + "_tt"] - hd
        small = T < self.T_SWITCH
        h3 = self.h3[name][None, :]
        Q = np.where(small, T**3 / 6 * h3, Q)
        Q1 = np.where(small, T**2 / 2 * h3, Q1)
        Q2 = np.where(small, T * h3, Q2)
        return 0.5 * T * T * K + Q, T * K + Q1, K + Q2

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        d = self.base.eval(t)
        tau, t1, t2, _ = self.tau.derivs(t)
        live = (t < self.support)[:, None]
        full = (tau == 1.0)[:, None]
        tau, t1, t2 = tau[:, None], t1[:, None], t2[:, None]
        for name in self.names:
            c0, c1, c2 = self.target(t, name)
            P, P1, P2 = self._P(t, d, name)
            new = np.where(full, c0, d[name] - tau * P)
            new1 = np.where(full, c1, d[name + "_t"] - t1 * P - tau * P1)
            new2 = np.where(full, c2, d[name + "_tt"] - t2 * P - 2 * t1 * P1 - tau * P2)
            d[name] = np.where(live, new, d[name])
            d[name + "_t"] = np.where(live, new1, d[name + "_t"])
            d[name + "_tt"] = np.where(live, new2, d[name + "_tt"])
        return d


def c_normal_deform(W, td, p, U_extent=None, verify=False):
    """C-normal deformation on [0, eps]; returns the deformed metric (and report if verify)."""
    _face_index(W)
    ext = U_extent if U_extent is not None else float(W.grid.t_nodes[-1])
    if p.eps > ext:
        raise ParameterError("deformation support [0, eps] exceeds the collar", eps=p.eps, extent=ext)
    base = as_source(W)
    src = CNormalSource(base, td, p)
    out = src.metric(W.grid.t_nodes)
    if not verify:
        return out
    return out, verify_cnormal(W, out, td, p)


def dense_samples(a, b, lo=None, n_log=400, n_lin=200):
    """Sorted union of a logarithmic scan from ``lo`` to ``b`` and a uniform scan of [a, b]."""
    parts = [np.linspace(a, b, n_lin)]
    if lo is not None and lo < b:
        parts.append(np.geomspace(lo, b, n_log))
    return np.unique(np.concatenate(parts))


def _h0_norm(td, dA, dB):
    s = (dA / td.h0.A) ** 2
    if dB is not None:
        s = s + (dB / td.h0.B) ** 2
    return np.sqrt(s)


def verify_cnormal(W, out, td, p):
    """The six conclusions plus the C-normal form on [0, delta*eps]."""
    rep = Report("c_normal")
    t = W.grid.t_nodes
    ann = W.B is not None
    diff = lambda a, b: float(np.max(np.abs(a - b))) if a.size else 0.0
    outside = t >= p.eps
    d_out = max(diff(out.A[outside], W.A[outside]), diff(out.u[outside], W.u[outside]))
    if ann:
        d_out = max(d_out, diff(out.B[outside], W.B[outside]))
    rep.at_most("item1.unchanged_outside", d_out, 0.0, "exact equality for t >= eps")
    d_face = diff(out.A[0], W.A[0]) + (diff(out.B[0], W.B[0]) if ann else 0.0)
    rep.at_most("item2.face_metric", d_face, 0.0)
    II0, _ = geo.slice_geometry(W, 0)
    II1, _ = geo.slice_geometry(out, 0)
    d_II = diff(II0.p_rr, II1.p_rr) + (diff(II0.p_tt, II1.p_tt) if ann else 0.0)
    rep.at_most("item3.face_second_fundamental_form", d_II, 1e-12)
    rep.at_most("item4.dt_component", diff(out.u, W.u), 0.0)

    src_in, src_out = as_source(W), as_source(out)
    ts = dense_samples(0.0, p.eps, lo=p.delta * p.eps * 1e-2)
    din, dout = src_in.eval(ts), src_out.eval(ts)
    dB = (lambda k: dout["B" + k] - din["B" + k]) if ann else (lambda k: None)
    c0 = _h0_norm(td, dout["A"] - din["A"], dB(""))
    c1 = _h0_norm(td, dout["A_t"] - din["A_t"], dB("_t"))
    dr = W.grid.dr
    cr = _h0_norm(
        td,
        geo.d1(dout["A"] - din["A"], dr, 1),
        None if not ann else geo.d1(dout["B"] - din["B"], dr, 1),
    )
    rep.at_most("item5.C1_smallness", max(c0.max(), c1.max(), cr.max()), p.eta, "h0-norm of the difference and its first derivatives")
    R0 = geo.ambient_scalar_curvature(W)[0]
    Rs = geo.ambient_scalar_curvature(src_out.sample(ts))
    margin = float(np.min(Rs - R0[None, :]))
    rep.at_least("item6.scalar_curvature_drop", margin, -p.eta, "min R_hat(x,t) - R_g(x,0) on (0, eps]")
    zone = ts[ts <= p.delta * p.eps]
    if zone.size:
        src = CNormalSource(src_in, td, p)
        dz = src_out.eval(zone)
        cA, _, _ = src.target(zone, "A")
        err = np.max(np.abs(dz["A"] - cA) / td.h0.A)
        if ann:
            cB, _, _ = src.target(zone, "B")
            err = max(err, np.max(np.abs(dz["B"] - cB) / td.h0.B))
        rep.at_most("c_normal_form", err, 1e-10, "on [0, delta*eps]")
    rep.data.update({"params": p.to_dict(), "min_R_out": float(np.min(Rs)), "samples": int(ts.size)})
    return rep


# ------------------------------------------------------------ prescribe II


class PrescribeSource(MetricSource):
    """h -> h + 2 chi(t)(h1 - k); u -> u(lambda(t)) unless u is t-independent."""

    def __init__(self, base, h1, k, eps, freeze=True, cnormal_zone=np.inf):
        super().__init__(base.r_nodes, base.backend, base.labels, base.t_range)
        self.cnormal_zone = float(cnormal_zone)
        self.base = base
        self.h1 = h1
        self.k = k
        self.eps = float(eps)
        self.chi = build_chi(self.eps)
        self.eps_lambda = min(self.eps, LAMBDA_EPS_MAX)
        self.lam = build_lambda(self.eps_lambda) if freeze else None
        self.support = max(self.chi.root, self.eps_lambda / 2 if freeze else 0.0)

    @property
    def exact_zone(self):
        z = min(self.eps / 20, self.cnormal_zone)
        if self.lam is not None:
            z = min(z, self.eps_lambda**2)
        return z

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        d = self.base.eval(t)
        c, c1, c2, _ = (x[:, None] for x in self.chi.derivs(t))
        live = (t < self.chi.root)[:, None]
        for name, a, b in (("A", self.h1.p_rr, self.k.p_rr), ("B", self.h1.p_tt, self.k.p_tt)):
            if name not in d or a is None:
                continue
            w = (a - b)[None, :]
            d[name] = np.where(live, d[name] + 2 * c * w, d[name])
            d[name + "_t"] = np.where(live, d[name + "_t"] + 2 * c1 * w, d[name + "_t"])
            d[name + "_tt"] = np.where(live, d[name + "_tt"] + 2 * c2 * w, d[name + "_tt"])
        if self.lam is not None:
            lv, l1, _, _ = self.lam.derivs(t)
            moved = lv != t
            if np.any(moved):
                dl = self.base.eval(lv[moved])
                d["u"][moved] = dl["u"]
                d["u_t"][moved] = dl["u_t"] * l1[moved, None]
        return d


def _u_is_static(src, t_max, tol=1e-12):
    ts = np.linspace(0.0, t_max, 65)
    d = src.eval(ts)
    return float(np.max(np.abs(d["u_t"]))) <= tol and float(np.max(np.abs(d["u"] - d["u"][:1]))) <= tol


def trace_condition(td, k):
    """tr_h0 k - tr_h0 h1 at each r-node (must be <= 0)."""
    return geo.trace(td.h0, k) - geo.trace(td.h0, td.h1)


def prescribe_II(W, k, p, eta=None, td=None, verify=False, check_positive=True, cnormal_zone=None):
    """Prescribe the face second fundamental form to k on a C-normal metric."""
    _face_index(W)
    td = td if td is not None else taylor_split(W)
    gap = trace_condition(td, k)
    if np.any(gap > 1e-12):
        i = int(np.argmax(gap))
        raise PreconditionError(
            "trace condition tr k <= tr h1 fails", stage="prescribe_II", node=i, r=float(W.grid.r_nodes[i]), excess=float(gap[i])
        )
    base = as_source(W)
    freeze = not _u_is_static(base, min(p.eps, float(W.grid.t_nodes[-1])))
    if cnormal_zone is None:
        cnormal_zone = base.p.delta * base.p.eps if isinstance(base, CNormalSource) else np.inf
    src = PrescribeSource(base, td.h1, k, p.eps, freeze=freeze, cnormal_zone=cnormal_zone)
    if src.support > W.grid.t_nodes[-1]:
        raise ParameterError("prescribe support exceeds the collar", support=src.support)
    if check_positive:
        ts = dense_samples(0.0, src.support, lo=1e-3 * src.exact_zone)
        Rin = geo.ambient_scalar_curvature(base.sample(ts))
        if np.min(Rin) <= 0:
            raise PreconditionError("R_g must be positive on the support", stage="prescribe_II", min_R=float(np.min(Rin)))
    out = src.metric(W.grid.t_nodes)
    if not verify:
        return out
    return out, verify_prescribe(W, out, td, k, p, eta if eta is not None else p.eta)


def verify_prescribe(W, out, td, k, p, eta):
    rep = Report("prescribe_II")
    src = out.source
    ann = W.B is not None
    t = W.grid.t_nodes
    outside = t >= src.support
    d_out = float(np.max(np.abs(out.A[outside] - W.A[outside]))) if outside.any() else 0.0
    d_out = max(d_out, float(np.max(np.abs(out.u[outside] - W.u[outside]))) if outside.any() else 0.0)
    if ann and outside.any():
        d_out = max(d_out, float(np.max(np.abs(out.B[outside] - W.B[outside]))))
    rep.at_most("unchanged_outside_support", d_out, 0.0)
    # slice_geometry orients by +d_t; the face's outward normal is -d_t
    II, _ = geo.slice_geometry(out, 0)
    u0 = W.u[0]
    err = np.max(np.abs(-II.p_rr - k.p_rr / u0))
    if ann:
        err = max(err, np.max(np.abs(-II.p_tt - k.p_tt / u0)))
    rep.at_most("face_II_equals_k_over_u", err, 1e-12)
    ts = dense_samples(0.0, src.support, lo=1e-3 * src.exact_zone)
    S = src.sample(ts)
    R = geo.ambient_scalar_curvature(S)
    rep.at_least("R_positive_on_support", float(np.min(R)), 0.0, "strict: must exceed 0")
    rep.verdicts[-1].passed = bool(np.min(R) > 0)
    base = as_source(W)
    Sin = base.sample(ts)
    drift = 0.0
    for side in W.grid.y_sides():
        drift = max(drift, float(np.max(np.abs(geo.boundary_mean_curvature(S, side) - geo.boundary_mean_curvature(Sin, side)))))
    rep.at_most("mean_curvature_drift", drift, eta)
    zone = ts[ts <= src.exact_zone]
    if zone.size:
        dz = src.eval(zone)
        z = zone[:, None]
        C = p.C
        formA = td.h0.A - 2 * z * k.p_rr - C * z * z * td.h0.A
        errf = np.max(np.abs(dz["A"] - formA) / td.h0.A)
        if ann:
            formB = td.h0.B - 2 * z * k.p_tt - C * z * z * td.h0.B
            errf = max(errf, np.max(np.abs(dz["B"] - formB) / td.h0.B))
        rep.at_most("prepared_form_on_zone", errf, 1e-10, f"t <= {src.exact_zone:.3g}")
        rep.at_most("frozen_u_on_zone", float(np.max(np.abs(dz["u"] - u0[None, :]))), 1e-12)
    rep.data.update({"support": src.support, "exact_zone": src.exact_zone, "min_R": float(np.min(R)), "H_drift": drift})
    return rep


# ------------------------------------------------------------ calibration

CNORMAL = "cnormal"
PRESCRIBE = "prescribe"


def _try_params(W, target, k, p, td):
    if target == CNORMAL:
        _, rep = c_normal_deform(W, td, p, verify=True)
    else:
        _, rep = prescribe_II(W, k, p, td=td, verify=True)
    return rep


def calibrate_constants(
    W,
    target=CNORMAL,
    k=None,
    eta=0.1,
    eps_cap=None,
    C_start=1.0,
    delta0=0.1,
    max_doublings=30,
    max_halvings=1000,
    safety=0.5,
):
    """Doubling search over C with eps = min(eps_cap, 1/C); delta halved until the checks pass.

    The checks are run against ``safety * eta`` so that a passing set keeps
    margin when C is later doubled.  The halving count is located by
    exponential then binary search, which returns the same count as halving
    one step at a time whenever passing is monotone in the count.
    """
    if target not in (CNORMAL, PRESCRIBE):
        raise ParameterError(f"unknown target {target!r}")
    td = taylor_split(W)
    ext = float(W.grid.t_nodes[-1] - W.grid.t_nodes[0])
    eps_cap = eps_cap if eps_cap is not None else 0.05 * ext
    if target == PRESCRIBE:
        if k is None:
            raise ParameterError("PrescribeII calibration needs k")
        R = geo.ambient_scalar_curvature(W)
        if np.min(R) <= 0:
            raise PreconditionError("R_g must be positive for PrescribeII", stage="calibrate", min_R=float(np.min(R)))
    trace = []
    C = float(C_start)
    for _ in range(max_doublings + 1):
        eps = min(eps_cap, 1.0 / C)

        # keep delta*eps far above the double-precision floor of tau''
        cap = min(max_halvings, int(math.log2(delta0 * eps / 1e-140)))

        def run(nh):
            p = DeformParams(C, delta0 * 0.5**nh, eps, safety * eta)
            rep = _try_params(W, target, k, p, td)
            trace.append({"C": C, "eps": eps, "delta": p.delta, "passed": rep.passed, "worst": _worst(rep)})
            return rep.passed

        nh = _first_pass(run, cap) if target == CNORMAL else (0 if run(0) else None)
        if nh is not None:
            return DeformParams(C, delta0 * 0.5**nh, eps, eta), trace
        C *= 2.0
    raise ConvergenceError("calibration exhausted", stage="calibrate", trace=trace[-5:])


def _worst(rep):
    f = rep.failures()
    return None if not f else f"{f[0].id}={f[0].value:.3g}"


def _first_pass(run, cap):
    if run(0):
        return 0
    lo, hi = 0, 1
    while not run(hi):
        lo, hi = hi, hi * 2
        if hi > cap:
            return None if not run(cap) else _bisect(run, lo, cap)
    return _bisect(run, lo, hi)


def _bisect(run, lo, hi):
    # run(lo) fails, run(hi) passes
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if run(mid):
            hi = mid
        else:
            lo = mid
    return hi


def tau_log_length(delta):
    return -math.log(delta)
