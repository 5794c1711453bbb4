"""Grids, rotationally symmetric metric types and their curvature operators.

Metrics have the block form ``g = u^2 dt^2 + A dr^2 (+ B dtheta^2)``.  All
fields are stored as arrays of shape ``(Nt, Nr)`` so that ``field[j]`` is the
slice at ``t_nodes[j]``.

Derivatives in ``r`` are always finite differences.  Derivatives in ``t``
are finite differences unless the metric carries exact t-derivative
channels (``u_t``, ``A_t``, ``B_t``, ``A_tt``, ``B_tt``); analytic scenes and
the deformation operators supply them when the t-structure (logarithmic
cutoffs, exponentially thin layers) is finer than any affordable grid.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy import sparse

from .errors import ParameterError

INTERVAL = "interval"
ANNULUS = "annulus"
BACKENDS = {INTERVAL: 1, ANNULUS: 2}
SIDES = ("r_min", "r_max", "t_min", "t_max")
CHANNELS = ("u_t", "A_t", "B_t", "A_tt", "B_tt")


# ------------------------------------------------------------ difference stencils


def d1(f, h, axis):
    """First derivative, central inside, second-order one-sided at the ends."""
    return np.gradient(f, h, axis=axis, edge_order=2)


def d2(f, h, axis):
    """Second derivative: compact 3-point inside, 4-point one-sided at the ends."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h**2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / h**2
    return np.moveaxis(out, 0, axis)


_FWD4 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


def d1_edge(f, h, side):
    """Fourth-order one-sided derivative along the last axis at one end."""
    f = np.asarray(f, dtype=float)
    if side == "min":
        return f[..., :5] @ _FWD4 / h
    return -(f[..., ::-1][..., :5] @ _FWD4) / h


# ------------------------------------------------------------ types


@dataclass(frozen=True)
class CylGrid:
    r_nodes: np.ndarray
    t_nodes: np.ndarray
    backend: str
    boundary_labels: dict = field(default_factory=lambda: {"r_min": "Y", "r_max": "Y", "t_min": "Z", "t_max": "Z"})

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ParameterError(f"unknown backend {self.backend!r}")
        for name in ("r_nodes", "t_nodes"):
            x = np.asarray(getattr(self, name), dtype=float)
            if x.ndim != 1 or x.size < 9:
                raise ParameterError(f"{name} needs at least 9 nodes")
            dx = np.diff(x)
            if np.any(dx <= 0):
                raise ParameterError(f"{name} must be strictly increasing")
            if np.max(np.abs(dx - dx.mean())) > 1e-12 * max(1.0, abs(dx.mean()), np.max(np.abs(x))):
                raise ParameterError(f"{name} spacing is not uniform")
            object.__setattr__(self, name, x)
        if self.backend == ANNULUS and self.r_nodes[0] <= 0:
            raise ParameterError("annulus backend needs r_min > 0")
        labels = dict(self.boundary_labels)
        if set(labels) != set(SIDES) or not set(labels.values()) <= {"Y", "Z"}:
            raise ParameterError("boundary_labels must map each of r_min, r_max, t_min, t_max to Y or Z")
        object.__setattr__(self, "boundary_labels", labels)

    @property
    def n(self):
        return BACKENDS[self.backend]

    @property
    def Nr(self):
        return self.r_nodes.size

    @property
    def Nt(self):
        return self.t_nodes.size

    @property
    def shape(self):
        return (self.Nt, self.Nr)

    @property
    def dr(self):
        return float((self.r_nodes[-1] - self.r_nodes[0]) / (self.Nr - 1))

    @property
    def dt(self):
        return float((self.t_nodes[-1] - self.t_nodes[0]) / (self.Nt - 1))

    @property
    def R(self):
        return np.broadcast_to(self.r_nodes[None, :], self.shape)

    @property
    def T(self):
        return np.broadcast_to(self.t_nodes[:, None], self.shape)

    def y_sides(self):
        return [s for s in ("r_min", "r_max") if self.boundary_labels[s] == "Y"]

    def relabel(self, **labels):
        new = dict(self.boundary_labels)
        new.update(labels)
        return replace(self, boundary_labels=new)

    def with_t(self, t_nodes):
        return replace(self, t_nodes=np.asarray(t_nodes, dtype=float))

    def same_as(self, other):
        return (
            self.backend == other.backend
            and np.array_equal(self.r_nodes, other.r_nodes)
            and np.array_equal(self.t_nodes, other.t_nodes)
        )


def build_grid(r_min, r_max, Nr, t_min, t_max, Nt, backend=ANNULUS):
    if not r_min < r_max:
        raise ParameterError("r_min must be below r_max", r_min=r_min, r_max=r_max)
    if not t_min < t_max:
        raise ParameterError("t_min must be below t_max", t_min=t_min, t_max=t_max)
    if Nr < 9 or Nt < 9:
        raise ParameterError("Nr and Nt must be at least 9", Nr=Nr, Nt=Nt)
    if backend == ANNULUS and r_min <= 0:
        raise ParameterError("annulus backend needs r_min > 0", r_min=r_min)
    return CylGrid(np.linspace(r_min, r_max, int(Nr)), np.linspace(t_min, t_max, int(Nt)), backend)


@dataclass(frozen=True)
class CrossSectionMetric:
    r: np.ndarray
    A: np.ndarray
    B: np.ndarray | None = None

    def __post_init__(self):
        if np.any(~(np.asarray(self.A) > 0)):
            raise ParameterError("A must be positive")
        if self.B is not None and np.any(~(np.asarray(self.B) > 0)):
            raise ParameterError("B must be positive")

    @property
    def n(self):
        return 1 if self.B is None else 2


@dataclass(frozen=True)
class RadialSymTensor:
    p_rr: np.ndarray
    p_tt: np.ndarray | None = None  # the theta-theta entry

    def __add__(self, other):
        return RadialSymTensor(self.p_rr + other.p_rr, None if self.p_tt is None else self.p_tt + other.p_tt)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rmul__(self, c):
        return RadialSymTensor(c * self.p_rr, None if self.p_tt is None else c * self.p_tt)

    __mul__ = __rmul__


@dataclass(frozen=True)
class WarpedMetric:
    """g = u^2 dt^2 + h_t with h_t = A dr^2 + B dtheta^2; arrays are (Nt, Nr)."""

    grid: CylGrid
    u: np.ndarray
    A: np.ndarray
    B: np.ndarray | None = None
    channels: dict | None = None
    source: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        shape = self.grid.shape
        for name in ("u", "A", "B"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.array(np.broadcast_to(np.asarray(v, dtype=float), shape))
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if (self.B is None) != (self.grid.backend == INTERVAL):
            raise ParameterError("B is required exactly for the annulus backend")
        for name, v in (("u", self.u), ("A", self.A), ("B", self.B)):
            if v is not None and not np.all(v > 0):
                raise ParameterError(f"{name} must be positive at every node")
        if self.channels:
            ch = {}
            for k, v in self.channels.items():
                if k not in CHANNELS:
                    raise ParameterError(f"unknown channel {k!r}")
                if self.B is None and k.startswith("B"):
                    continue
                a = np.array(np.broadcast_to(np.asarray(v, dtype=float), shape))
                a.setflags(write=False)
                ch[k] = a
            object.__setattr__(self, "channels", ch)

    @property
    def n(self):
        return self.grid.n

    @property
    def slices(self):
        r = self.grid.r_nodes
        return [CrossSectionMetric(r, self.A[j], None if self.B is None else self.B[j]) for j in range(self.grid.Nt)]

    def slice(self, j):
        return CrossSectionMetric(self.grid.r_nodes, self.A[j], None if self.B is None else self.B[j])

    def has_channels(self):
        return bool(self.channels) and all(
            k in self.channels for k in CHANNELS if self.B is not None or not k.startswith("B")
        )

    def strip_channels(self):
        return replace(self, channels=None, source=None)

    def restrict_t(self, sl):
        """Sub-metric on the t-index slice ``sl``."""
        g = self.grid.with_t(self.grid.t_nodes[sl])
        ch = None if not self.channels else {k: v[sl] for k, v in self.channels.items()}
        return WarpedMetric(g, self.u[sl], self.A[sl], None if self.B is None else self.B[sl], ch, self.source)

    def fields(self):
        out = {"u": self.u, "A": self.A}
        if self.B is not None:
            out["B"] = self.B
        return out


@dataclass(frozen=True)
class CurvatureFields:
    R: np.ndarray
    H_slice: np.ndarray
    II_slice: list
    H_cyl: dict


# ------------------------------------------------------------ t-derivatives


def t_derivatives(W, exact=True):
    """Return dict with u_t, A_t, A_tt (and B_t, B_tt) over the grid."""
    dt = W.grid.dt
    if exact and W.has_channels():
        return dict(W.channels)
    out = {"u_t": d1(W.u, dt, 0), "A_t": d1(W.A, dt, 0), "A_tt": d2(W.A, dt, 0)}
    if W.B is not None:
        out["B_t"] = d1(W.B, dt, 0)
        out["B_tt"] = d2(W.B, dt, 0)
    return out


# ------------------------------------------------------------ cross-section operators


def _cross_terms(r, A, B, u):
    """R_h and Laplacian of u for each slice; arrays broadcast along axis 0."""
    h = float(r[1] - r[0])
    a = np.sqrt(A)
    u_r = d1(u, h, -1)
    u_rr = d2(u, h, -1)
    a_r = d1(a, h, -1)
    if B is None:
        # 1-dimensional slices are flat; Laplacian is a^-1 (u'/a)'
        return np.zeros_like(A), (u_rr - a_r * u_r / a) / A
    b = np.sqrt(B)
    b_r = d1(b, h, -1)
    b_rr = d2(b, h, -1)
    Rh = -2.0 / (a * b) * (b_rr * a - b_r * a_r) / A
    q = b / a
    q_r = d1(q, h, -1)
    lap = (q * u_rr + q_r * u_r) / (a * b)
    return Rh, lap


def trace(h, p):
    t = p.p_rr / h.A
    if h.B is not None and p.p_tt is not None:
        t = t + p.p_tt / h.B
    return t


def norm(h, p):
    s = (p.p_rr / h.A) ** 2
    if h.B is not None and p.p_tt is not None:
        s = s + (p.p_tt / h.B) ** 2
    return np.sqrt(s)


def cross_section_ops(h, u_slice, p):
    """(R_h, Lap_h u, tr_h p, |p|_h) for one slice."""
    Rh, lap = _cross_terms(h.r, np.asarray(h.A, float), None if h.B is None else np.asarray(h.B, float), np.asarray(u_slice, float))
    return Rh, lap, trace(h, p), norm(h, p)


# ------------------------------------------------------------ curvature of g


def slice_geometry(W, j, exact=True):
    """II_t = h_dot/(2u) and H_t = tr h_dot/(2u) with unit normal along d_t."""
    if not -W.grid.Nt <= j < W.grid.Nt:
        raise IndexError(j)
    d = t_derivatives(W, exact)
    u = W.u[j]
    II = RadialSymTensor(d["A_t"][j] / (2 * u), None if W.B is None else d["B_t"][j] / (2 * u))
    return II, trace(W.slice(j), II)


def _tensor_scalars(W, d):
    ta = d["A_t"] / W.A
    tra = d["A_tt"] / W.A
    tr1, n2, tr2 = ta, ta**2, tra
    if W.B is not None:
        tb = d["B_t"] / W.B
        tr1 = tr1 + tb
        n2 = n2 + tb**2
        tr2 = tr2 + d["B_tt"] / W.B
    return tr1, n2, tr2


def ambient_scalar_curvature(W, exact=True, parts=False):
    """Scalar curvature of u^2 dt^2 + h_t on every node."""
    d = t_derivatives(W, exact)
    Rh, lap = _cross_terms(W.grid.r_nodes, W.A, W.B, W.u)
    tr1, n2, tr2 = _tensor_scalars(W, d)
    u = W.u
    u2 = u * u
    R = Rh - 2.0 * lap / u + d["u_t"] * tr1 / (u2 * u) - tr2 / u2 + n2 / u2 - tr1**2 / (4 * u2) - n2 / (4 * u2)
    if parts:
        return R, {"R_h": Rh, "lap_u": lap, "tr_hdot": tr1, "norm2_hdot": n2, "tr_hddot": tr2}
    return R


def slice_boundary_curvature(W, side):
    """Geodesic curvature of the slice boundary circle (outward), over t."""
    if W.B is None:
        return np.zeros(W.grid.Nt)
    h = W.grid.dr
    k = -1 if side == "r_max" else 0
    b = np.sqrt(W.B)
    a = np.sqrt(W.A[:, k])
    sgn = 1.0 if side == "r_max" else -1.0
    b_r = d1_edge(b, h, "max" if side == "r_max" else "min")
    return sgn * b_r / (a * b[:, k])


def boundary_mean_curvature(W, side):
    """Mean curvature of the r = const boundary, outward normal; array over t."""
    if side not in ("r_min", "r_max"):
        raise ParameterError("side must be r_min or r_max", side=side)
    k = -1 if side == "r_max" else 0
    sgn = 1.0 if side == "r_max" else -1.0
    logu_r = d1_edge(np.log(W.u), W.grid.dr, "max" if side == "r_max" else "min")
    dnu = sgn * logu_r / np.sqrt(W.A[:, k])
    return slice_boundary_curvature(W, side) + dnu


def normal_log_u(W, side):
    k = -1 if side == "r_max" else 0
    sgn = 1.0 if side == "r_max" else -1.0
    logu_r = d1_edge(np.log(W.u), W.grid.dr, "max" if side == "r_max" else "min")
    return sgn * logu_r / np.sqrt(W.A[:, k])


def curvature_fields(W, exact=True):
    R = ambient_scalar_curvature(W, exact)
    d = t_derivatives(W, exact)
    II = []
    for j in range(W.grid.Nt):
        II.append(RadialSymTensor(d["A_t"][j] / (2 * W.u[j]), None if W.B is None else d["B_t"][j] / (2 * W.u[j])))
    tr1, _, _ = _tensor_scalars(W, d)
    H = tr1 / (2 * W.u)
    Hc = {s: boundary_mean_curvature(W, s) for s in W.grid.y_sides()}
    return CurvatureFields(R, H, II, Hc)


# ------------------------------------------------------------ Laplacian


def _volume_density(W):
    a = np.sqrt(W.A)
    if W.B is None:
        return W.u * a
    return W.u * a * np.sqrt(W.B)


def _flux_coefficients(W):
    """(r-coefficient, t-coefficient) = (sqrt(det g) g^rr, sqrt(det g) g^tt)."""
    vol = _volume_density(W)
    return vol / W.A, vol / W.u**2


def ambient_laplacian(W, w, form="fd"):
    """Laplace-Beltrami of the warped metric on rotationally symmetric w.

    ``form="fd"`` differentiates the divergence form pointwise;
    ``form="fv"`` applies the assembled finite-volume operator (natural
    Neumann closure at every boundary), which is what the eigensolver uses.
    """
    w = np.asarray(w, dtype=float)
    if form == "fv":
        K, m = assemble_laplacian(W)
        return -(K @ w.ravel() / m).reshape(W.grid.shape)
    g = W.grid
    vol = _volume_density(W)
    cr, ct = _flux_coefficients(W)
    w_r = d1(w, g.dr, 1)
    w_t = d1(w, g.dt, 0)
    out = cr * d2(w, g.dr, 1) + d1(cr, g.dr, 1) * w_r + ct * d2(w, g.dt, 0) + d1(ct, g.dt, 0) * w_t
    return out / vol


def trapezoid_weights(x):
    h = float(x[1] - x[0])
    w = np.full(x.size, h)
    w[0] = w[-1] = 0.5 * h
    return w


def assemble_laplacian(W):
    """Stiffness K (symmetric, PSD) and lumped mass m with -Lap ~ diag(m)^-1 K.

    Nodes are flattened row-major over (t, r).  The mass is the volume
    density times trapezoid weights; fluxes use midpoint averages of the
    divergence-form coefficients.
    """
    g = W.grid
    Nt, Nr = g.shape
    wr = trapezoid_weights(g.r_nodes)
    wt = trapezoid_weights(g.t_nodes)
    vol = _volume_density(W)
    m = (vol * wt[:, None] * wr[None, :]).ravel()
    cr, ct = _flux_coefficients(W)
    idx = np.arange(Nt * Nr).reshape(Nt, Nr)
    rows, cols, vals = [], [], []

    def add(i0, i1, c):
        rows.extend([i0, i1, i0, i1])
        cols.extend([i0, i1, i1, i0])
        vals.extend([c, c, -c, -c])

    fr = 0.5 * (cr[:, 1:] + cr[:, :-1]) * wt[:, None] / g.dr
    ft = 0.5 * (ct[1:, :] + ct[:-1, :]) * wr[None, :] / g.dt
    add(idx[:, :-1].ravel(), idx[:, 1:].ravel(), fr.ravel())
    add(idx[:-1, :].ravel(), idx[1:, :].ravel(), ft.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    K = sparse.coo_matrix((vals, (rows, cols)), shape=(Nt * Nr, Nt * Nr)).tocsr()
    return K, m


def boundary_area_weights(W, side):
    """Induced area density times trapezoid weights along t for an r-boundary."""
    k = -1 if side == "r_max" else 0
    dens = W.u[:, k] if W.B is None else W.u[:, k] * np.sqrt(W.B[:, k])
    return dens * trapezoid_weights(W.grid.t_nodes)


def volume_inner(W, w, v):
    g = W.grid
    wt = trapezoid_weights(g.t_nodes)
    wr = trapezoid_weights(g.r_nodes)
    return float(np.sum(_volume_density(W) * w * v * wt[:, None] * wr[None, :]))


# ------------------------------------------------------------ conformal change


def conformal_metric(W, phi, phi_t=None, phi_tt=None):
    """phi^(4/(n-1)) g for the annulus backend (n = 2): u -> phi^2 u, h -> phi^4 h."""
    if W.n != 2:
        raise ParameterError("conformal change is implemented for n = 2 only")
    phi = np.asarray(phi, dtype=float)
    ch = None
    if W.has_channels() and phi_t is not None and phi_tt is not None:
        c = W.channels
        p2, p4 = phi**2, phi**4
        dp4 = 4 * phi**3 * phi_t
        ddp4 = 12 * phi**2 * phi_t**2 + 4 * phi**3 * phi_tt
        ch = {
            "u_t": 2 * phi * phi_t * W.u + p2 * c["u_t"],
            "A_t": dp4 * W.A + p4 * c["A_t"],
            "B_t": dp4 * W.B + p4 * c["B_t"],
            "A_tt": ddp4 * W.A + 2 * dp4 * c["A_t"] + p4 * c["A_tt"],
            "B_tt": ddp4 * W.B + 2 * dp4 * c["B_t"] + p4 * c["B_tt"],
        }
    return WarpedMetric(W.grid, phi**2 * W.u, phi**4 * W.A, phi**4 * W.B, ch)


def c_of_n(n):
    if n < 2:
        raise ParameterError("c(n) = 4n/(n-1) needs n >= 2", n=n)
    return 4.0 * n / (n - 1.0)


def observed_order(errors, ratio=2.0):
    """Richardson orders log(e_k/e_{k+1})/log(ratio) for consecutive levels."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(e[:-1] / e[1:]) / math.log(ratio)
