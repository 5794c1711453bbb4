"""Gradient-flow block normal form near an interface.

A collar metric in meridian coordinates ``(r, s)`` with cross term ``F`` is
pulled back along the flow of ``V = grad f / |grad f|^2``.  Because
``df(V) = 1``, the flow parameter equals ``f`` and the pulled-back metric is
``u^2 dt^2 + h_t`` with ``u = 1/|grad f|`` and no ``dt dr`` term.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import DegenerateFoliationError, FlowExitError, ParameterError, PreconditionError
from .geometry import ANNULUS, CylGrid, WarpedMetric, normal_log_u
from .report import Report

GRAD_FLOOR = 1e-8


@dataclass(frozen=True)
class CollarMetric:
    """E dr^2 + 2F dr ds + G ds^2 + B dtheta^2 on an (s, r) grid; interface s = 0."""

    r_nodes: np.ndarray
    s_nodes: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    B: np.ndarray
    y_sides: tuple = ("r_min", "r_max")

    def __post_init__(self):
        shape = (len(self.s_nodes), len(self.r_nodes))
        for name in ("E", "F", "G", "B"):
            v = np.array(np.broadcast_to(np.asarray(getattr(self, name), dtype=float), shape))
            object.__setattr__(self, name, v)
        for name in ("r_nodes", "s_nodes"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (np.all(self.E > 0) and np.all(self.G > 0) and np.all(self.B > 0)):
            raise ParameterError("collar metric must have E, G, B > 0")
        if not np.all(self.E * self.G - self.F**2 > 0):
            raise ParameterError("collar metric is not positive definite (EG - F^2 <= 0)")
        if not np.any(np.isclose(self.s_nodes, 0.0, atol=1e-14)):
            raise ParameterError("s_nodes must contain the interface s = 0")

    @property
    def i0(self):
        return int(np.argmin(np.abs(self.s_nodes)))

    @property
    def ds(self):
        return float(self.s_nodes[1] - self.s_nodes[0])

    @property
    def dr(self):
        return float(self.r_nodes[1] - self.r_nodes[0])


def verify_flow_function(g, f, tol=1e-4):
    """Check that f vanishes on the interface, grad f is tangent to Y, and |grad f| > tol there.

    Gradients come from the same bicubic spline model the flow uses.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != g.E.shape:
        raise ParameterError("flow function shape does not match the collar grid")
    field = _Field(g, f)
    S, R = np.meshgrid(g.s_nodes, g.r_nodes, indexing="ij")
    V, n2 = field.V(R, S)
    E, F, G = field.metric(R, S)
    det = E * G - F * F
    i0 = g.i0
    rep = Report("flow_function")
    rep.at_most("vanishes_on_interface", np.max(np.abs(f[i0])), tol)
    worst = 0.0
    for side in g.y_sides:
        k = 0 if side == "r_min" else -1
        # g(grad f, nu) = (grad f)^r / sqrt(g^rr), and grad f = n2 * V
        ginv_rr = G[:, k] / det[:, k]
        worst = max(worst, float(np.max(np.abs(n2[:, k] * V[0][:, k]) / np.sqrt(ginv_rr))))
    rep.at_most("tangent_on_Y", worst, tol, "max |g(grad f, nu)| on Y")
    rep.at_least("nondegenerate_on_interface", np.min(np.sqrt(n2[i0])), tol)
    return rep


class _Field:
    """Spline model of the collar metric and flow function."""

    def __init__(self, g, f):
        s, r = g.s_nodes, g.r_nodes
        self.g = g
        self.sp = {k: RectBivariateSpline(s, r, getattr(g, k)) for k in ("E", "F", "G", "B")}
        self.f = RectBivariateSpline(s, r, np.asarray(f, dtype=float))
        self.lo = np.array([r[0], s[0]])
        self.hi = np.array([r[-1], s[-1]])

    def metric(self, r, s):
        return tuple(self.sp[k].ev(s, r) for k in ("E", "F", "G"))

    def V(self, r, s):
        E, F, G = self.metric(r, s)
        f_s = self.f.ev(s, r, dx=1)
        f_r = self.f.ev(s, r, dy=1)
        det = E * G - F * F
        gr = (G * f_r - F * f_s) / det
        gs = (-F * f_r + E * f_s) / det
        n2 = f_r * gr + f_s * gs
        with np.errstate(divide="ignore", invalid="ignore"):  # degenerate f is reported, not warned
            return np.array([gr / n2, gs / n2]), n2

    def _parts(self, r, s, d):
        """Metric, inverse metric and differential of f (with one derivative if d)."""
        ev = lambda sp, dr=0, ds=0: sp.ev(s, r, dx=ds, dy=dr)
        g = np.array([[ev(self.sp["E"]), ev(self.sp["F"])], [ev(self.sp["F"]), ev(self.sp["G"])]])
        df = np.array([ev(self.f, 1, 0), ev(self.f, 0, 1)])
        out = [g, df]
        if d:
            for dr, ds in ((1, 0), (0, 1)):
                gx = np.array(
                    [[ev(self.sp["E"], dr, ds), ev(self.sp["F"], dr, ds)], [ev(self.sp["F"], dr, ds), ev(self.sp["G"], dr, ds)]]
                )
                dfx = np.array([ev(self.f, 1 + dr, ds), ev(self.f, dr, 1 + ds)])
                out.extend([gx, dfx])
        return out

    def rhs(self, X, J):
        """Flow field and its exact Jacobian applied to J (variational equation)."""
        r, s = X
        g, df, gr, dfr, gs, dfs = self._parts(r, s, True)
        det = g[0, 0] * g[1, 1] - g[0, 1] ** 2
        gi = np.array([[g[1, 1], -g[0, 1]], [-g[0, 1], g[0, 0]]]) / det
        w = np.einsum("ij...,j...->i...", gi, df)
        n2 = np.einsum("i...,i...->...", df, w)
        V = w / n2
        dJ = np.zeros_like(J)
        for k, (gx, dfx) in enumerate(((gr, dfr), (gs, dfs))):
            gix = -np.einsum("ij...,jk...,kl...->il...", gi, gx, gi)
            wx = np.einsum("ij...,j...->i...", gix, df) + np.einsum("ij...,j...->i...", gi, dfx)
            n2x = np.einsum("i...,i...->...", dfx, w) + np.einsum("i...,i...->...", df, wx)
            Vx = (wx * n2 - w * n2x) / n2**2
            dJ = dJ + Vx * J[k]
        return V, dJ, n2


def _flow(field, r0, t_nodes, substeps, exit_tol):
    """RK4 integration of the flow and its variational equation from (r0, 0)."""
    Nt = len(t_nodes)
    j0 = int(np.argmin(np.abs(t_nodes)))
    N = r0.size
    X_out = np.empty((Nt, 2, N))
    J_out = np.empty((Nt, 2, N))
    X0 = np.array([r0, np.zeros(N)])
    J0 = np.array([np.ones(N), np.zeros(N)])
    X_out[j0], J_out[j0] = X0, J0
    min_grad = np.inf
    span = field.hi - field.lo
    for direction in (1, -1):
        X, J = X0.copy(), J0.copy()
        rng = range(j0 + 1, Nt) if direction > 0 else range(j0 - 1, -1, -1)
        prev = t_nodes[j0]
        for j in rng:
            h = (t_nodes[j] - prev) / substeps
            for _ in range(substeps):
                k1, l1, n2 = field.rhs(X, J)
                min_grad = min(min_grad, float(np.min(n2)))
                if min_grad < GRAD_FLOOR**2:
                    raise DegenerateFoliationError("|grad f| vanishes along the flow", stage="normalform")
                k2, l2, _ = field.rhs(X + 0.5 * h * k1, J + 0.5 * h * l1)
                k3, l3, _ = field.rhs(X + 0.5 * h * k2, J + 0.5 * h * l2)
                k4, l4, _ = field.rhs(X + h * k3, J + h * l3)
                X = X + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                J = J + h / 6 * (l1 + 2 * l2 + 2 * l3 + l4)
                out = (X < field.lo[:, None] - exit_tol * span[:, None]) | (X > field.hi[:, None] + exit_tol * span[:, None])
                if np.any(out):
                    i = int(np.where(out.any(axis=0))[0][0])
                    raise FlowExitError(
                        "flow line leaves the collar",
                        stage="normalform",
                        node=i,
                        r0=float(r0[i]),
                        t=float(t_nodes[j]),
                    )
            X_out[j], J_out[j] = X, J
            prev = t_nodes[j]
    return X_out, J_out, min_grad


@dataclass(frozen=True)
class NormalFormInfo:
    positions: np.ndarray  # (Nt, 2, Nr) flow-map images (r, s)
    cross_term: np.ndarray  # pulled-back g(d_t, d_r)
    boundary_drift: float  # max |r(t) - r0| over Y-boundary flow lines
    delta_collar: float
    min_grad: float


def block_normal_form(g, f, delta_collar=None, Nt=None, t_nodes=None, substeps=4, return_info=False, check=True):
    """Pull g back to u^2 dt^2 + h_t on |t| <= delta_collar.

    The r-derivative of the flow map comes from the variational equation
    integrated alongside the flow, so the pulled-back cross term vanishes
    up to integrator error.  On a flow-exit error with the default
    ``delta_collar`` the collar is halved (at most 6 times).
    """
    f = np.asarray(f, dtype=float)
    if check:
        rep = verify_flow_function(g, f)
        if not rep.passed:
            raise PreconditionError("flow function fails its conditions", stage="normalform", report=rep.to_dict())
    field = _Field(g, f)
    auto = delta_collar is None and t_nodes is None
    if auto:
        delta_collar = 0.1 * float(g.s_nodes[-1] - g.s_nodes[0])
    for attempt in range(7):
        if t_nodes is None:
            m = int(Nt // 2) if Nt is not None else max(4, int(round(delta_collar / g.ds)))
            tn = np.linspace(-delta_collar, delta_collar, 2 * m + 1)
        else:
            tn = np.asarray(t_nodes, dtype=float)
        try:
            X, J, min_grad = _flow(field, g.r_nodes, tn, substeps, 1e-9)
            break
        except FlowExitError:
            if not auto or attempt == 6:
                raise
            delta_collar *= 0.5
    r, s = X[:, 0, :], X[:, 1, :]
    E, F, G = field.metric(r, s)
    Jr, Js = J[:, 0, :], J[:, 1, :]
    V, n2 = field.V(r, s)
    A = E * Jr**2 + 2 * F * Jr * Js + G * Js**2
    cross = E * Jr * V[0] + F * (Jr * V[1] + Js * V[0]) + G * Js * V[1]
    u = 1.0 / np.sqrt(n2)
    B = field.sp["B"].ev(s, r)
    labels = {"r_min": "Z", "r_max": "Z", "t_min": "Z", "t_max": "Z"}
    for side in g.y_sides:
        labels[side] = "Y"
    grid = CylGrid(g.r_nodes.copy(), tn, ANNULUS, labels)
    W = WarpedMetric(grid, u, A, B)
    if not return_info:
        return W
    drift = 0.0
    for side in g.y_sides:
        k = 0 if side == "r_min" else -1
        drift = max(drift, float(np.max(np.abs(r[:, k] - g.r_nodes[k]))))
    return W, NormalFormInfo(X, cross, drift, float(tn[-1]), float(np.sqrt(min_grad)))


def interface_normal_log_u(W, side="r_max"):
    """d_nu log u on the interface t = 0 at an r-boundary."""
    j0 = int(np.argmin(np.abs(W.grid.t_nodes)))
    return float(normal_log_u(W, side)[j0])


# ------------------------------------------------------------ analytic collars


def ball_collar(Nr, Ns, r_min=0.05, s_half=0.3, kappa=0.3):
    """Flat unit ball in meridian coordinates psi = s(1 + kappa r^2), angle from the equator.

    The interface s = 0 is the equatorial disk and r = 1 the unit sphere.
    """
    r = np.linspace(r_min, 1.0, Nr)
    s = np.linspace(-s_half, s_half, Ns)
    S, R = np.meshgrid(s, r, indexing="ij")
    q = 1 + kappa * R**2
    psi = S * q
    psi_r = 2 * kappa * R * S
    E = 1 + R**2 * psi_r**2
    F = R**2 * psi_r * q
    G = R**2 * q**2
    B = (R * np.cos(psi)) ** 2
    g = CollarMetric(r, s, E, F, G, B, y_sides=("r_max",))
    f = psi * (1 - 0.2 * (1 - R) ** 2)
    return g, f


def catenoid_collar(Nr, Ns, r_min=0.05, s_half=0.3):
    """Region inside the catenoid rho = cosh z, coordinates rho = r cosh s, z = s."""
    r = np.linspace(r_min, 1.0, Nr)
    s = np.linspace(-s_half, s_half, Ns)
    S, R = np.meshgrid(s, r, indexing="ij")
    ch, sh = np.cosh(S), np.sinh(S)
    E = ch**2
    F = R * ch * sh
    G = 1 + R**2 * sh**2
    B = (R * ch) ** 2
    g = CollarMetric(r, s, E, F, G, B, y_sides=("r_max",))
    # f_s = (1 + r^2)/2 at s = 0, so |grad f| stays away from 0 near the axis
    f = S + 0.5 * (R**2 - 1) * np.tanh(S)
    return g, f


def flat_collar(Nr, Ns, r_range=(1.0, 2.0), s_half=0.3):
    r = np.linspace(*r_range, Nr)
    s = np.linspace(-s_half, s_half, Ns)
    S, R = np.meshgrid(s, r, indexing="ij")
    return CollarMetric(r, s, 1.0, 0.0, 1.0, R**2), S


def rescale_flow(f, lam):
    return lam * np.asarray(f, dtype=float)


def collar_with(g, **changes):
    return replace(g, **changes)
