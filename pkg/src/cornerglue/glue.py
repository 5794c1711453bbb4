"""Gluing two prepared collars along an isometric face.

Coordinates: each input side is a collar ``s >= 0`` with its face at ``s = 0``
and ``s`` increasing into the side.  In the glued chart the Minus side
occupies ``t = -s <= 0`` and the Plus side ``t = s >= 0``.  With outward face
normals the prepared slices on both sides read

    h0 + (2/n) t u f h0 - C t^2 h0,

and the Step-1 bridge on ``[0, eps]`` keeps that form with the warping
factor interpolated logarithmically through ``phi_eps``.  The bridge
overwrites the Plus collar on ``[0, eps]``, so ``eps`` must not exceed the
interval on which the Plus side is already in prepared form.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from . import geometry as geo
from .deform import (
    CNORMAL,
    DeformParams,
    c_normal_deform,
    calibrate_constants,
    dense_samples,
    prescribe_II,
    taylor_split,
)
from .errors import ConvergenceError, CornerGlueError, ParameterError, PreconditionError, VerificationError
from .geometry import ANNULUS, RadialSymTensor, WarpedMetric
from .profiles import build_bump, build_clamp, build_phi
from .report import Report
from .sources import FlipSource, MetricSource, PiecewiseSource, RescaleSource, as_source

MINIMAL = "minimal"
MEANCONVEX = "meanconvex"
MODES = (MINIMAL, MEANCONVEX)
MINUS = "minus"
PLUS = "plus"
NONNEGATIVE = "nonnegative"
NONPOSITIVE = "nonpositive"

FORM_TOL = 1e-10
H_FLOOR = -1e-9
LAMBDA_ZERO_TOL = 1e-10


# ------------------------------------------------------------ configuration


def f_sign_of(f):
    f = np.asarray(f, dtype=float)
    if np.all(f >= 0):
        return NONNEGATIVE
    if np.all(f <= 0):
        return NONPOSITIVE
    raise ParameterError("jump function f must not change sign", min_f=float(f.min()), max_f=float(f.max()))


@dataclass(frozen=True)
class GlueConfig:
    """Pipeline parameters.

    ``delta`` is the mean-curvature tolerance and, through ``rho = delta``,
    the clamp threshold of Step 2.  ``deform_delta`` and ``deform_eps`` are
    the cutoff parameters of the preparatory deformations.
    """

    delta: float = 0.05
    C: float = 1.0
    eps: float = 0.02
    sigma: float | None = None
    rho: float | None = None
    mode: str = MEANCONVEX
    f: object = 0.0
    n: int = 2
    eta: float = 0.1
    deform_delta: float = 0.1
    deform_eps: float | None = None
    Nt: int = 257
    T: float | None = None
    tol_min: float = 1e-6
    max_shrinks: int = 6
    seam_levels: int = 3
    auto: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}", mode=self.mode)
        if not self.delta > 0:
            raise ParameterError("delta must be positive", delta=self.delta)
        if not (self.C > 0 and self.eps > 0):
            raise ParameterError("C and eps must be positive", C=self.C, eps=self.eps)
        if self.C * self.eps > 1 + 1e-12:
            raise ParameterError("C * eps must not exceed 1", C=self.C, eps=self.eps)
        if self.n < 2:
            raise ParameterError("gluing needs n >= 2 (conformal exponent 4/(n-1))", n=self.n)
        f_sign_of(self.f)

    @property
    def f_sign(self):
        return f_sign_of(self.f)

    @property
    def c_n(self):
        return geo.c_of_n(self.n)

    @property
    def rho_value(self):
        return self.delta if self.rho is None else self.rho

    def f_array(self, Nr):
        return np.broadcast_to(np.asarray(self.f, dtype=float), (Nr,)).copy()

    def to_dict(self):
        f = np.asarray(self.f, dtype=float)
        return {
            "delta": self.delta,
            "C": self.C,
            "eps": self.eps,
            "sigma": self.sigma,
            "rho": self.rho_value,
            "mode": self.mode,
            "f": float(f) if f.ndim == 0 else f.tolist(),
            "f_sign": self.f_sign,
            "c_n": self.c_n,
            "deform_delta": self.deform_delta,
            "deform_eps": self.deform_eps,
            "Nt": self.Nt,
            "T": self.T,
        }


# ------------------------------------------------------------ prepared sides


@dataclass
class PreparedSide:
    side: str
    W: WarpedMetric
    source: MetricSource
    u_face: np.ndarray
    k: RadialSymTensor
    C: float
    zone: float
    support: float
    params: DeformParams | None = None
    reports: dict = field(default_factory=dict)

    @property
    def h0(self):
        return self.W.slice(0)

    def closed_form(self, s):
        """Prepared slices (A, B) in the collar coordinate s."""
        s = np.asarray(s, dtype=float)[:, None]
        h0 = self.h0
        A = h0.A - 2 * s * self.k.p_rr - self.C * s * s * h0.A
        B = None if h0.B is None else h0.B - 2 * s * self.k.p_tt - self.C * s * s * h0.B
        return A, B


def face_mean_curvature(td, u_face):
    """Mean curvature of the face (outward normal) from the Taylor data."""
    return geo.trace(td.h0, td.h1) / u_face


def jump_term(side, u_face, f, h0, n):
    """k = +-(1/n) u f h0, so that tr_h0 k = +-u f."""
    sgn = 1.0 if side == MINUS else -1.0
    c = sgn * u_face * f / n
    return RadialSymTensor(c * h0.A, None if h0.B is None else c * h0.B)


def _prepared_zone(side, src, extent):
    s = np.unique(np.concatenate([np.geomspace(1e-12 * extent, extent, 400), np.linspace(0, extent, 257)]))
    d = src.eval(s)
    A, B = side.closed_form(s)
    bad = np.max(np.abs(d["A"] - A) / side.h0.A[None, :], axis=1) > FORM_TOL
    if B is not None:
        bad |= np.max(np.abs(d["B"] - B) / side.h0.B[None, :], axis=1) > FORM_TOL
    bad |= np.max(np.abs(d["u"] - side.u_face[None, :]) / side.u_face[None, :], axis=1) > 1e-12
    if not np.any(bad):
        return float(extent)
    i = int(np.argmax(bad))
    return float(s[i - 1]) if i > 0 else 0.0


def check_side(W, mode, name, tol_min=1e-6):
    """R > 0 on the collar nodes and the Y boundary sign condition."""
    R = geo.ambient_scalar_curvature(W)
    if not np.min(R) > 0:
        j, i = np.unravel_index(int(np.argmin(R)), R.shape)
        raise PreconditionError(
            f"{name}: scalar curvature must be positive", stage="input", min_R=float(R[j, i]), t=float(W.grid.t_nodes[j]), r=float(W.grid.r_nodes[i])
        )
    for sd in W.grid.y_sides():
        H = geo.boundary_mean_curvature(W, sd)
        if mode == MEANCONVEX and np.min(H) < H_FLOOR:
            raise PreconditionError(f"{name}: boundary {sd} is not mean-convex", stage="input", min_H=float(np.min(H)))
        if mode == MINIMAL and np.max(np.abs(H)) > tol_min:
            raise PreconditionError(f"{name}: boundary {sd} is not minimal", stage="input", max_abs_H=float(np.max(np.abs(H))))


def detect_prepared(W, k, td=None, tol=FORM_TOL):
    """C if the whole collar already reads u_face^2 ds^2 + h0 - 2 s k - C s^2 h0 (C >= 0), else None."""
    td = td if td is not None else taylor_split(W, check=False)
    h0 = td.h0
    if np.max(np.abs(td.h1.p_rr - k.p_rr) / h0.A) > tol:
        return None
    if h0.B is not None and np.max(np.abs(td.h1.p_tt - k.p_tt) / h0.B) > tol:
        return None
    C = -0.5 * float(np.mean(td.hddot0.p_rr / h0.A))
    if C < -tol:
        return None
    C = C if C > 0 else 0.0
    s = W.grid.t_nodes[:, None]
    err = np.max(np.abs(W.A - (h0.A - 2 * s * k.p_rr - C * s * s * h0.A)) / h0.A)
    if h0.B is not None:
        err = max(err, np.max(np.abs(W.B - (h0.B - 2 * s * k.p_tt - C * s * s * h0.B)) / h0.B))
    if err > tol or np.max(np.abs(W.u - W.u[:1])) > 1e-12 * np.max(W.u):
        return None
    return C


def prepare_side(g_side, f, C, eta=0.1, side=MINUS, delta=0.1, eps=None, auto=False, verify=True, C_prepared=None):
    """Bring one collar into prepared form u(x)^2 ds^2 + h0 - 2 s k - C s^2 h0.

    Runs the Taylor split, the C-normal deformation and the prescription of
    the face second fundamental form to k = +-(1/n) u f h0.  The jump
    condition (H_face >= f for Minus, H_face >= -f for Plus) is checked node
    by node first.  With ``auto`` the cutoff parameter delta is calibrated at
    the given C.  ``C_prepared`` declares the collar already prepared with
    that constant (see ``detect_prepared``); the deformations are then skipped.
    """
    if side not in (MINUS, PLUS):
        raise ParameterError("side must be 'minus' or 'plus'", side=side)
    W = g_side
    td = taylor_split(W)
    n = W.n
    u_face = W.u[0].copy()
    f = np.broadcast_to(np.asarray(f, dtype=float), u_face.shape).copy()
    H = face_mean_curvature(td, u_face)
    need = f if side == MINUS else -f
    gap = H - need
    tol = 1e-12 * max(1.0, float(np.max(np.abs(H))))
    if np.any(gap < -tol):
        i = int(np.argmin(gap))
        raise PreconditionError(
            f"jump condition fails on the {side} side at r-node {i}",
            stage="prepare_side",
            node=i,
            r=float(W.grid.r_nodes[i]),
            H_face=float(H[i]),
            required=float(need[i]),
        )
    ext = float(W.grid.t_nodes[-1])
    k = jump_term(side, u_face, f, td.h0, n)
    if C_prepared is not None:
        src = as_source(W)
        ps = PreparedSide(side, W, src, u_face, k, float(C_prepared), 0.0, 0.0, None, {})
        ps.zone = _prepared_zone(ps, src, ext)
        if ps.zone < ext:
            raise VerificationError("side is not in prepared form", stage="prepare_side", side=side, zone=ps.zone)
        return ps
    eps = eps if eps is not None else min(0.05 * ext, 1.0 / C, 0.49)
    eps = min(eps, 1.0 / C, 0.49)
    if auto:
        p, trail = calibrate_constants(W, CNORMAL, eta=eta, eps_cap=eps, C_start=C, max_doublings=0, delta0=delta)
    else:
        p, trail = DeformParams(C, delta, eps, eta), []
    reports = {}
    if verify:
        cn, rep_cn = c_normal_deform(W, td, p, verify=True)
        reports["c_normal"] = rep_cn
    else:
        cn = c_normal_deform(W, td, p)
    out = prescribe_II(cn, k, p, td=td, verify=verify)
    if verify:
        out, reports["prescribe"] = out
    src = out.source
    support = max(p.eps, src.support)
    ps = PreparedSide(side, out, src, u_face, k, p.C, 0.0, support, p, reports)
    ps.zone = _prepared_zone(ps, src, ext)
    if verify:
        bad = [f"{name}:{v.id}" for name, r in reports.items() for v in r.failures()]
        if bad:
            raise VerificationError("preparation failed its checks", stage="prepare_side", side=side, failures=bad)
    ps.reports["calibration"] = trail
    return ps


# ------------------------------------------------------------ Step 1 bridge


class BridgeSource(MetricSource):
    """u_t^2 dt^2 + h0 (1 + (2/n) t u_t f - C t^2) on [0, eps].

    log u_t interpolates log u_- and log u_+ through phi_eps / eps.  All
    t-derivatives are assembled from t*phi' and (t*phi')' so nothing is
    divided by t.
    """

    def __init__(self, minus, plus, f, C, eps, labels=None):
        h0 = minus.h0
        backend = ANNULUS if h0.B is not None else geo.INTERVAL
        super().__init__(h0.r, backend, labels, (0.0, eps))
        self.A0, self.B0 = h0.A, h0.B
        self.log_m = np.log(minus.u_face)
        self.L = np.log(plus.u_face) - self.log_m
        self.f = np.asarray(f, dtype=float)
        self.C = float(C)
        self.eps = float(eps)
        self.nn = 2 if self.B0 is not None else 1
        self.phi = build_phi(self.eps) if np.any(self.L != 0) else None

    def _phi(self, t):
        if self.phi is None:
            z = np.zeros_like(t)
            return z, z, z, z
        v, d1, _, _ = self.phi.derivs(t)
        tp, tpp = self.phi.t_dphi(np.clip(t, 0.0, self.eps))
        return v, d1, tp, tpp

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        v, d1, tp, tpp = (x[:, None] for x in self._phi(t))
        L, e, C, f = self.L[None, :], self.eps, self.C, self.f[None, :]
        T = t[:, None]
        u = np.exp(self.log_m[None, :] + v / e * L)
        u_t = u * d1 * L / e
        tu_t = u * tp * L / e
        dtu_t = u_t * tp * L / e + u * tpp * L / e
        c = 2.0 / self.nn
        rho = 1 + c * T * u * f - C * T * T
        rho_t = c * f * (u + tu_t) - 2 * C * T
        rho_tt = c * f * (u_t + dtu_t) - 2 * C
        d = {"u": u, "u_t": u_t}
        for name, h in (("A", self.A0), ("B", self.B0)):
            if h is None:
                continue
            d[name] = rho * h[None, :]
            d[name + "_t"] = rho_t * h[None, :]
            d[name + "_tt"] = rho_tt * h[None, :]
        return d


def _glued_labels(minus):
    lab = dict(minus.W.grid.boundary_labels)
    lab["t_min"] = lab["t_max"] = "Z"
    return lab


def glued_source(minus, plus, bridge):
    lab = _glued_labels(minus)
    pieces = [(-np.inf, 0.0, FlipSource(minus.source)), (0.0, bridge.eps, bridge), (bridge.eps, np.inf, plus.source)]
    return PiecewiseSource(pieces, labels=lab)


def bridge_step1(minus, plus, cfg, t_nodes=None):
    """Three-piece metric g_- | bridge | g_+ on the glued chart."""
    if minus.side != MINUS or plus.side != PLUS:
        raise ParameterError("bridge_step1 expects (minus, plus) prepared sides")
    h0m, h0p = minus.h0, plus.h0
    err = np.max(np.abs(h0m.A - h0p.A) / h0m.A)
    if h0m.B is not None:
        err = max(err, np.max(np.abs(h0m.B - h0p.B) / h0m.B))
    if err > 1e-10:
        raise PreconditionError("faces are not isometric", stage="bridge_step1", mismatch=float(err))
    f = cfg.f_array(h0m.A.size)
    if np.max(np.abs(minus.C - plus.C)) > 1e-12 * max(1.0, cfg.C):
        raise PreconditionError("sides were prepared with different C", stage="bridge_step1", C_minus=minus.C, C_plus=plus.C)
    order = f * np.log(plus.u_face / minus.u_face)
    if np.any(order > 0):
        i = int(np.argmax(order))
        raise PreconditionError(
            "warping-factor ordering violated: need f log(u+/u-) <= 0",
            stage="bridge_step1",
            node=i,
            u_minus=float(minus.u_face[i]),
            u_plus=float(plus.u_face[i]),
            f=float(f[i]),
        )
    C = minus.C
    eps = cfg.eps
    if C * eps > 1 + 1e-12:
        raise ParameterError("C * eps must not exceed 1", stage="bridge_step1", C=C, eps=eps)
    if eps > plus.zone or minus.zone <= 0:
        raise PreconditionError(
            "bridge is wider than the prepared zone",
            stage="bridge_step1",
            eps=eps,
            zone_minus=minus.zone,
            zone_plus=plus.zone,
        )
    bridge = BridgeSource(minus, plus, f, C, eps, _glued_labels(minus))
    src = glued_source(minus, plus, bridge)
    if t_nodes is None:
        T = min(float(minus.W.grid.t_nodes[-1]), float(plus.W.grid.t_nodes[-1]))
        if cfg.T is not None:
            T = min(T, cfg.T)
        t_nodes = np.linspace(-T, T, cfg.Nt)
    return src.metric(t_nodes)


def bridge_diagnostics(W, cfg):
    """Identities of the bridge derivatives, the warping bound and min R on a dense scan."""
    glued = W.source
    bridge = glued.pieces[1][2]
    rep = Report("bridge")
    e = bridge.eps
    lo = bridge.phi.w0 if bridge.phi is not None else 1e-6 * e
    ts = dense_samples(0.0, e, lo=lo)
    d = bridge.eval(ts)
    u = d["u"]
    _, d1, tp, _ = (x[:, None] for x in bridge._phi(ts))
    n = bridge.nn
    T = ts[:, None]
    tdlog = tp * bridge.L[None, :] / e
    rhs = (2.0 / n) * (1 + tdlog) * bridge.f[None, :] * bridge.A0[None, :] - 2 * bridge.C * T / u * bridge.A0[None, :]
    err = float(np.max(np.abs(d["A_t"] / u - rhs) / bridge.A0[None, :]))
    rep.at_most("first_derivative_identity", err, 1e-10)
    bound = 2 * e * float(np.max(np.abs(bridge.L)))
    rep.at_most("warping_bound", float(np.max(np.abs(tdlog))), bound * (1 + 1e-9) + 1e-15, "|t dlog u/dt| <= 2 eps max|log(u+/u-)|")
    R = geo.ambient_scalar_curvature(bridge.sample(ts))
    rep.at_least("min_R_bridge", float(np.min(R)), 0.0, "strict")
    rep.verdicts[-1].passed = bool(np.min(R) > 0)
    rep.data.update({"eps": e, "samples": int(ts.size), "min_R": float(np.min(R))})
    return rep


# ------------------------------------------------------------ eigenproblem


@dataclass
class EigenResult:
    lam: float
    w: np.ndarray
    residual: float
    rayleigh: float
    shift: float = 0.0

    def to_dict(self):
        return {"lambda1": self.lam, "residual": self.residual, "rayleigh": self.rayleigh, "min_w": float(np.min(self.w)), "max_w": float(np.max(self.w))}


def robin_operator(W, Vr, Vb, c_n=None):
    """(A, m): A = K + diag(m Vr / c_n) + Robin terms (2/c_n) Vb on Y, m = lumped volume mass."""
    c_n = geo.c_of_n(max(W.n, 2)) if c_n is None else c_n
    K, m = geo.assemble_laplacian(W)
    D = m * np.broadcast_to(np.asarray(Vr, dtype=float), W.grid.shape).ravel() / c_n
    Nt, Nr = W.grid.shape
    for side, vb in (Vb or {}).items():
        if W.grid.boundary_labels[side] != "Y":
            raise ParameterError(f"Robin data given on non-Y side {side}")
        k = Nr - 1 if side == "r_max" else 0
        idx = np.arange(Nt) * Nr + k
        D[idx] += 2.0 / c_n * geo.boundary_area_weights(W, side) * np.broadcast_to(np.asarray(vb, dtype=float), (Nt,))
    return (K + sparse.diags(D)).tocsr(), m, D


def rayleigh_quotient(A, m, w):
    w = np.asarray(w, dtype=float).ravel()
    return float(w @ (A @ w) / (w @ (m * w)))


def robin_eigensolve(W, Vr, Vb=None, mode=MEANCONVEX, c_n=None, tol=0.0):
    """Principal eigenpair of -Lap w + Vr/c_n w = lam w with (2/c_n) Vb Robin data on Y.

    Shift-invert Lanczos on the symmetrized pencil.  The shift sits below
    min(D/m), which bounds the spectrum from below because K is positive
    semidefinite, so the eigenvalue nearest the shift is the principal one.
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")
    A, m, D = robin_operator(W, Vr, Vb, c_n)
    if not np.any(D):
        w = np.ones(W.grid.shape)
        return EigenResult(0.0, w, 0.0, rayleigh_quotient(A, m, w), 0.0)
    s = 1.0 / np.sqrt(m)
    S = sparse.diags(s) @ A @ sparse.diags(s)
    shift = float(np.min(D / m)) - 1.0
    try:
        vals, vecs = eigsh(S.tocsc(), k=1, sigma=shift, which="LM", v0=np.sqrt(m), tol=tol, maxiter=10_000)
    except ArpackNoConvergence as exc:
        raise ConvergenceError("principal eigenvalue iteration did not converge", stage="robin_eigensolve") from exc
    lam = float(vals[0])
    x = vecs[:, 0]
    x = x if x.sum() > 0 else -x
    res = float(np.linalg.norm(S @ x - lam * x) / np.linalg.norm(x)) / max(1.0, abs(lam))
    w = x * s
    w = w / np.mean(w)
    if np.min(w) <= 0:
        raise VerificationError("principal eigenfunction is not positive", stage="robin_eigensolve", min_w=float(np.min(w)))
    if np.max(np.abs(w - 1)) < 1e-10:
        w = np.ones_like(w)
    w = w.reshape(W.grid.shape)
    return EigenResult(lam, w, res, rayleigh_quotient(A, m, w), shift)


def robin_root(b):
    """Smallest k > 0 with k tan k = b (b > 0): the 1D Robin-Neumann eigenvalue is k^2."""
    from scipy.optimize import brentq

    if b <= 0:
        raise ParameterError("b must be positive")
    return brentq(lambda k: k * math.sin(k) - b * math.cos(k), 0.0, math.pi / 2, xtol=1e-15, rtol=4 * np.finfo(float).eps)


# ------------------------------------------------------------ Step 2 conformal correction


def conformal_dict(d, phi, phi_t, phi_tt, n=2):
    """Fields and exact channels of phi^(4/(n-1)) g (n = 2)."""
    if n != 2:
        raise ParameterError("conformal change is implemented for n = 2 only")
    p2, p4 = phi**2, phi**4
    dp4 = 4 * phi**3 * phi_t
    ddp4 = 12 * phi**2 * phi_t**2 + 4 * phi**3 * phi_tt
    out = {"u": p2 * d["u"], "u_t": 2 * phi * phi_t * d["u"] + p2 * d["u_t"]}
    for k in ("A", "B"):
        if k not in d:
            continue
        out[k] = p4 * d[k]
        out[k + "_t"] = dp4 * d[k] + p4 * d[k + "_t"]
        out[k + "_tt"] = ddp4 * d[k] + 2 * dp4 * d[k + "_t"] + p4 * d[k + "_tt"]
    return out


class ConformalSource(MetricSource):
    """phi^4 g with phi = 1 + (1 - xi)(w - 1), xi the bump, w splined along t."""

    def __init__(self, base, w, t_nodes, sigma):
        super().__init__(base.r_nodes, base.backend, base.labels, base.t_range)
        self.base = base
        self.bump = build_bump(sigma)
        self.w = np.asarray(w, dtype=float)
        self.t_nodes = np.asarray(t_nodes, dtype=float)
        self.trivial = bool(np.all(self.w == 1.0))
        self.spline = None if self.trivial else CubicSpline(self.t_nodes, self.w, axis=0)

    def factor(self, t):
        t = np.asarray(t, dtype=float)
        xi, x1, x2, _ = (x[:, None] for x in self.bump.derivs(t))
        if self.trivial:
            one = np.ones((t.size, self.r_nodes.size))
            return one, 0 * one, 0 * one
        w, w1, w2 = self.spline(t), self.spline(t, 1), self.spline(t, 2)
        idx = np.clip(np.searchsorted(self.t_nodes, t), 0, self.t_nodes.size - 1)
        hit = self.t_nodes[idx] == t
        w[hit] = self.w[idx[hit]]
        phi = 1 + (1 - xi) * (w - 1)
        phi_t = -x1 * (w - 1) + (1 - xi) * w1
        phi_tt = -x2 * (w - 1) - 2 * x1 * w1 + (1 - xi) * w2
        return phi, phi_t, phi_tt

    def eval(self, t):
        d = self.base.eval(t)
        if self.trivial:
            return d
        return conformal_dict(d, *self.factor(t))


def clamp_fields(W, rho, mode):
    """Clamped R and boundary H used as eigenproblem potentials."""
    clamp = build_clamp(rho)
    R = geo.ambient_scalar_curvature(W)
    Vr = clamp.derivs(R)[0]
    Vb = {}
    for side in W.grid.y_sides():
        H = geo.boundary_mean_curvature(W, side)
        Vb[side] = clamp.derivs(H)[0] if mode == MEANCONVEX else H
    return Vr, Vb


def _window_mean(W, w, T):
    g = W.grid
    mask = (np.abs(g.t_nodes) <= T)[:, None] * np.ones(g.Nr)
    return geo.volume_inner(W, w, mask) / geo.volume_inner(W, np.ones_like(w), mask)


def conformal_step2(W, cfg, sigma, rho=None):
    """Solve the clamped Robin problem and apply the localized conformal factor."""
    rho = cfg.rho_value if rho is None else rho
    Vr, Vb = clamp_fields(W, rho, cfg.mode)
    eig = robin_eigensolve(W, Vr, Vb, cfg.mode, cfg.c_n)
    if eig.lam < -LAMBDA_ZERO_TOL:
        raise CornerGlueError("principal eigenvalue is negative; shrink delta", stage="conformal_step2", lam=eig.lam)
    w = eig.w
    if not np.all(w == 1.0):
        w = w / _window_mean(W, w, 3 * sigma)
    base = as_source(W)
    src = ConformalSource(base, w, W.grid.t_nodes, sigma)
    out = src.metric(W.grid.t_nodes)
    data = {"lambda1": eig.lam, "rho": rho, "max_Vr": float(np.max(np.abs(Vr))), "max_Vb": max([float(np.max(np.abs(v))) for v in Vb.values()] or [0.0])}
    return out, eig, data


def conformal_dual_path(W, phi):
    """Direct R and H of phi^4 g against the conformal-Laplacian and boundary formulas (n = 2).

    Everything is finite-differenced on the grid; returns max errors over
    the middle three quarters of the chart (a fixed physical region, so the
    one-sided closures at the edges do not pollute the refinement order)
    and over the same t-range of the Y boundaries.
    """
    n = W.n
    c = geo.c_of_n(n)
    Wc = geo.conformal_metric(W.strip_channels(), phi)
    Wf = W.strip_channels()
    R_direct = geo.ambient_scalar_curvature(Wc, exact=False)
    R_formula = phi ** (-(n + 3) / (n - 1)) * (-c * geo.ambient_laplacian(Wf, phi) + geo.ambient_scalar_curvature(Wf, exact=False) * phi)
    qt, qr = max(2, (W.grid.Nt - 1) // 8), max(2, (W.grid.Nr - 1) // 8)
    sl = (slice(qt, -qt), slice(qr, -qr))
    errR = float(np.max(np.abs(R_direct - R_formula)[sl]))
    errH = 0.0
    for side in W.grid.y_sides():
        k = -1 if side == "r_max" else 0
        sgn = 1.0 if side == "r_max" else -1.0
        dphi = sgn * geo.d1_edge(phi, W.grid.dr, "max" if side == "r_max" else "min") / np.sqrt(Wf.A[:, k])
        H_direct = geo.boundary_mean_curvature(Wc, side)
        H_formula = phi[:, k] ** (-(n + 1) / (n - 1)) * (geo.boundary_mean_curvature(Wf, side) * phi[:, k] + c / 2 * dphi)
        errH = max(errH, float(np.max(np.abs(H_direct - H_formula)[qt:-qt])))
    return errR, errH


# ------------------------------------------------------------ seams


_D1P = np.array([-3.0, 4.0, -1.0]) / 2.0
_D2P = np.array([2.0, -5.0, 4.0, -1.0])


def seam_jumps(src, seam, h, fields=("u", "A", "B")):
    """Jumps of one-sided first and second t-derivatives across ``seam`` at spacing h."""
    j = np.arange(-3, 4)
    d = src.eval(seam + h * j)
    out1 = out2 = 0.0
    scale = 0.0
    for k in fields:
        if k not in d:
            continue
        v = d[k]
        scale = max(scale, float(np.max(np.abs(v))))
        right = v[3:]
        left = v[3::-1]
        d1p, d1m = _D1P @ right[:3] / h, -(_D1P @ left[:3]) / h
        d2p, d2m = _D2P @ right / h**2, _D2P @ left / h**2
        out1 = max(out1, float(np.max(np.abs(d1p - d1m))))
        out2 = max(out2, float(np.max(np.abs(d2p - d2m))))
    return out1, out2, scale


def seam_study(src, seam, h0, levels=3):
    """Dyadic refinement of the seam jumps; orders are inf where every jump is at roundoff."""
    hs = [h0 / 2**L for L in range(levels)]
    j1, j2, floor1, floor2 = [], [], [], []
    for h in hs:
        a, b, sc = seam_jumps(src, seam, h)
        j1.append(a)
        j2.append(b)
        ulp = np.finfo(float).eps * max(sc, 1.0)
        floor1.append(1e3 * ulp / h)
        floor2.append(1e3 * ulp / h**2)
    out = {"seam": seam, "h": hs, "jump_d1": j1, "jump_d2": j2}
    for key, js, fl in (("order_d1", j1, floor1), ("order_d2", j2, floor2)):
        if all(x <= y for x, y in zip(js, fl)):
            out[key] = math.inf
        else:
            out[key] = float(np.min(geo.observed_order(np.maximum(js, 1e-300))))
    out["order"] = min(out["order_d1"], out["order_d2"])
    return out


# ------------------------------------------------------------ pipeline


def order_rescale(g_minus, g_plus, f):
    """Scale factor kappa for the Minus side so that f log(u+/u-) <= 0 holds with margin."""
    f = np.asarray(f, dtype=float)
    ratio = g_plus.u[0] / g_minus.u[0]
    if not np.any(f != 0) or np.all(f * np.log(ratio) <= 0):
        return 1.0
    if f_sign_of(f) == NONNEGATIVE:
        return 1.1 * float(np.max(ratio))
    return 0.9 * float(np.min(ratio))


def rescale_collar(W, kappa):
    """Same metric in s' = s / kappa: u -> kappa u(kappa s')."""
    if kappa == 1.0:
        return W
    src = RescaleSource(as_source(W), kappa)
    return src.metric(W.grid.t_nodes / kappa)


def _side_chart(W, kappa, flip):
    src = as_source(W)
    if kappa != 1.0:
        src = RescaleSource(src, kappa)
    return FlipSource(src) if flip else src


def _min_location(F, W):
    j, i = np.unravel_index(int(np.argmin(F)), F.shape)
    return {"value": float(F[j, i]), "t": float(W.grid.t_nodes[j]), "r": float(W.grid.r_nodes[i])}


def glue_pipeline(g_minus, g_plus, f, cfg):
    """Prepare both sides, build the bridge, correct conformally and certify.

    Inputs are collars in their own coordinates (face at s = 0).  Returns the
    glued metric on the chart t in [-T, T] and a report whose verdicts cover
    positivity, the boundary condition of the mode, locality and the seams.
    """
    f = np.broadcast_to(np.asarray(f, dtype=float), (g_minus.grid.Nr,)).copy()
    if cfg.n != g_minus.n:
        cfg = _replace(cfg, n=g_minus.n)
    cfg = _replace(cfg, f=f)
    trail = []
    rep = Report("glue_pipeline", data={"config": cfg.to_dict(), "trail": trail})
    for W, name in ((g_minus, MINUS), (g_plus, PLUS)):
        check_side(W, cfg.mode, name, cfg.tol_min)
    A0m, A0p = g_minus.A[0], g_plus.A[0]
    mis = np.max(np.abs(A0m - A0p) / A0m)
    if g_minus.B is not None:
        mis = max(mis, np.max(np.abs(g_minus.B[0] - g_plus.B[0]) / g_minus.B[0]))
    if mis > 1e-10:
        raise PreconditionError("faces are not isometric", stage="input", mismatch=float(mis))

    kappa = order_rescale(g_minus, g_plus, f)
    trail.append({"stage": "rescale", "kappa_minus": kappa})
    gm = rescale_collar(g_minus, kappa)

    C = cfg.C
    found = []
    for W, name in ((gm, MINUS), (g_plus, PLUS)):
        td = taylor_split(W, check=False)
        found.append(detect_prepared(W, jump_term(name, W.u[0], f, td.h0, W.n), td))
    pre = None
    if None not in found and abs(found[0] - found[1]) <= 1e-9 * max(1.0, found[0]):
        pre = found[1]
        C = pre
    sides = {}
    for W, name in ((gm, MINUS), (g_plus, PLUS)):
        sides[name] = prepare_side(W, f, C, cfg.eta, name, cfg.deform_delta, cfg.deform_eps, auto=cfg.auto, C_prepared=pre)
        ps = sides[name]
        trail.append(
            {
                "stage": f"prepare_{name}",
                "params": None if ps.params is None else ps.params.to_dict(),
                "already_prepared": ps.params is None,
                "C": ps.C,
                "zone": ps.zone,
                "support": ps.support,
            }
        )
    minus, plus = sides[MINUS], sides[PLUS]

    eps = cfg.eps
    L = np.log(plus.u_face / minus.u_face)
    if not np.any(L != 0):
        # equal warping factors: the bridge is the prepared form itself
        eps = min(eps, plus.zone, minus.zone)
    cfg = _replace(cfg, eps=eps)
    T = min(float(gm.grid.t_nodes[-1]), float(g_plus.grid.t_nodes[-1]))
    if cfg.T is not None:
        T = min(T, cfg.T)
    t_nodes = np.linspace(-T, T, cfg.Nt)
    W1 = bridge_step1(minus, plus, cfg, t_nodes)
    brep = bridge_diagnostics(W1, cfg)
    rep.extend(brep, "bridge.")
    trail.append({"stage": "bridge", "eps": eps, "T": T, "dt": float(t_nodes[1] - t_nodes[0])})

    support = max(minus.support, plus.support, eps)
    sigma = cfg.sigma if cfg.sigma is not None else max(5 * eps, support)
    if 3 * sigma > T:
        raise ParameterError("3 sigma must fit inside the glued chart", sigma=sigma, T=T)
    lam_trace = []
    out = eig = None
    for k in range(cfg.max_shrinks + 1):
        rho = cfg.rho_value / 2**k
        try:
            out, eig, data = conformal_step2(W1, cfg, sigma, rho)
        except CornerGlueError as exc:
            if exc.stage != "conformal_step2":
                raise
            lam_trace.append({"rho": rho, "lambda1": exc.details.get("lam"), "accepted": False})
            continue
        ok = _final_checks(out, cfg, sigma, eps, dry=True)
        lam_trace.append({"rho": rho, "lambda1": eig.lam, "accepted": ok})
        if ok:
            break
    if out is None:
        raise ConvergenceError("delta shrinking exhausted", stage="conformal_step2", trace=lam_trace)
    trail.append({"stage": "conformal", "sigma": sigma, "rho": lam_trace[-1]["rho"], "eigen": eig.to_dict()})
    rep.data["lambda_trace"] = lam_trace
    _final_checks(out, cfg, sigma, eps, rep=rep)

    # locality against the inputs pulled back to the glued chart
    inputs = PiecewiseSource([(-np.inf, 0.0, _side_chart(g_minus, kappa, True)), (0.0, np.inf, _side_chart(g_plus, 1.0, False))])
    far = np.abs(t_nodes) >= 2 * sigma + eps
    diff = 0.0
    if np.any(far):
        ref = inputs.eval(t_nodes[far])
        for key in ("u", "A", "B"):
            if key in ref:
                diff = max(diff, float(np.max(np.abs(getattr(out, key)[far] - ref[key]))))
    rep.at_most("locality", diff, 0.0, f"bit-for-bit for |t| >= 2 sigma + eps = {2 * sigma + eps:.4g}")
    rep.data["locality_nodes"] = int(np.sum(far))

    h0 = float(t_nodes[1] - t_nodes[0])
    seams = [seam_study(out.source, s, h0, cfg.seam_levels) for s in (0.0, eps)]
    for s, name in zip(seams, ("t0", "teps")):
        rep.at_least(f"seam_order.{name}", s["order"], 1.9)
    rep.data["seams"] = seams
    rep.data["rescale_kappa"] = kappa
    return out, rep


def _replace(cfg, **kw):
    from dataclasses import replace

    return replace(cfg, **kw)


def _dense_bands(out, eps, sigma):
    """Dense t values around the bridge and the deformation supports."""
    parts = [dense_samples(0.0, eps, lo=max(eps * 1e-9, 1e-300)) if eps > 0 else np.zeros(0)]
    for sgn in (-1.0, 1.0):
        parts.append(sgn * dense_samples(0.0, 2 * sigma, lo=1e-12))
    return np.unique(np.concatenate(parts))


def _final_checks(out, cfg, sigma, eps, rep=None, dry=False):
    R = geo.ambient_scalar_curvature(out)
    ts = _dense_bands(out, eps, sigma)
    S = out.source.sample(ts)
    Rd = geo.ambient_scalar_curvature(S)
    minR = min(float(np.min(R)), float(np.min(Rd)))
    Hs = {}
    worstH = math.inf
    for side in out.grid.y_sides():
        H = np.concatenate([geo.boundary_mean_curvature(out, side), geo.boundary_mean_curvature(S, side)])
        Hs[side] = {"min": float(np.min(H)), "max": float(np.max(H))}
        worstH = min(worstH, float(np.min(H)) if cfg.mode == MEANCONVEX else -float(np.max(np.abs(H))))
    if cfg.mode == MEANCONVEX:
        okH = worstH > H_FLOOR
    else:
        okH = -worstH < cfg.tol_min
    ok = minR > 0 and okH
    if dry:
        return ok
    loc = _min_location(R, out)
    if float(np.min(Rd)) < loc["value"]:
        j, i = np.unravel_index(int(np.argmin(Rd)), Rd.shape)
        loc = {"value": float(Rd[j, i]), "t": float(ts[j]), "r": float(out.grid.r_nodes[i])}
    rep.at_least("min_R", minR, 0.0, "strict: must exceed 0")
    rep.verdicts[-1].passed = bool(minR > 0)
    if cfg.mode == MEANCONVEX:
        rep.at_least("boundary.min_H", worstH, H_FLOOR)
    else:
        rep.at_most("boundary.max_abs_H", -worstH, cfg.tol_min)
    rep.data["min_R"] = loc
    rep.data["H"] = Hs
    return ok


__all__ = [
    "GlueConfig",
    "PreparedSide",
    "EigenResult",
    "MINIMAL",
    "MEANCONVEX",
    "MINUS",
    "PLUS",
    "prepare_side",
    "bridge_step1",
    "bridge_diagnostics",
    "BridgeSource",
    "robin_operator",
    "robin_eigensolve",
    "rayleigh_quotient",
    "robin_root",
    "conformal_step2",
    "conformal_dual_path",
    "ConformalSource",
    "clamp_fields",
    "seam_study",
    "seam_jumps",
    "glue_pipeline",
    "order_rescale",
    "face_mean_curvature",
    "detect_prepared",
    "jump_term",
]
