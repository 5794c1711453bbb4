"""Metrics evaluable at arbitrary t with exact t-derivatives.

A source knows its r-grid and returns, for any array of t values, the fields
``u, A, B`` and the t-derivative channels ``u_t, A_t, B_t, A_tt, B_tt`` as
arrays of shape ``(len(t), Nr)``.  Uniform samples become ``WarpedMetric``
values carrying those channels; non-uniform samples (dense logarithmic
scans near a face) become metrics on a placeholder index grid, which is
enough for every curvature operator because t-derivatives then come from the
channels alone.
"""

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ParameterError
from .geometry import ANNULUS, INTERVAL, CHANNELS, CylGrid, WarpedMetric

KEYS = ("u", "A", "B") + CHANNELS


class MetricSource:
    def __init__(self, r_nodes, backend, labels=None, t_range=(-np.inf, np.inf)):
        self.r_nodes = np.asarray(r_nodes, dtype=float)
        self.backend = backend
        self.labels = dict(labels or {"r_min": "Y", "r_max": "Y", "t_min": "Z", "t_max": "Z"})
        self.t_range = tuple(float(x) for x in t_range)

    @property
    def n(self):
        return 2 if self.backend == ANNULUS else 1

    def eval(self, t):
        raise NotImplementedError

    def _grid(self, t_nodes):
        return CylGrid(self.r_nodes, np.asarray(t_nodes, dtype=float), self.backend, self.labels)

    def metric(self, t_nodes):
        """WarpedMetric on the uniform grid ``t_nodes`` with exact channels."""
        d = self.eval(np.asarray(t_nodes, dtype=float))
        return _to_metric(self._grid(t_nodes), d, self)

    def sample(self, t):
        """Metric on arbitrary (sorted or not) t, with a placeholder t-grid."""
        t = np.asarray(t, dtype=float)
        if t.size < 9:
            raise ParameterError("sample needs at least 9 t values")
        d = self.eval(t)
        return _to_metric(self._grid(np.arange(t.size, dtype=float)), d, None)


def _to_metric(grid, d, src):
    B = d.get("B") if grid.backend == ANNULUS else None
    ch = {k: d[k] for k in CHANNELS if k in d and (B is not None or not k.startswith("B"))}
    return WarpedMetric(grid, d["u"], d["A"], B, ch, src)


def _full(d, shape):
    return {k: np.broadcast_to(np.asarray(v, dtype=float), shape).copy() for k, v in d.items()}


class AnalyticSource(MetricSource):
    """``fn(T, R) -> dict`` with all KEYS present (B keys only for annulus)."""

    def __init__(self, r_nodes, backend, fn, labels=None, t_range=(-np.inf, np.inf), name="analytic"):
        super().__init__(r_nodes, backend, labels, t_range)
        self.fn = fn
        self.name = name

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        T, R = np.meshgrid(t, self.r_nodes, indexing="ij")
        return _full(self.fn(T, R), T.shape)


class GridSource(MetricSource):
    """Cubic-spline interpolation in t of a gridded metric.

    Evaluation at a grid node returns the stored data (and stored channels,
    if any) exactly, so locality comparisons stay bit-for-bit.
    """

    def __init__(self, W):
        g = W.grid
        super().__init__(g.r_nodes, g.backend, g.boundary_labels, (g.t_nodes[0], g.t_nodes[-1]))
        self.W = W
        self.t_nodes = g.t_nodes
        self.splines = {k: CubicSpline(g.t_nodes, v, axis=0) for k, v in W.fields().items()}

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        out = {}
        for k, sp in self.splines.items():
            out[k] = sp(t)
            out[k + "_t"] = sp(t, 1)
            if k != "u":
                out[k + "_tt"] = sp(t, 2)
        idx = np.searchsorted(self.t_nodes, t)
        idx = np.clip(idx, 0, self.t_nodes.size - 1)
        hit = self.t_nodes[idx] == t
        if np.any(hit):
            j = idx[hit]
            for k, v in self.W.fields().items():
                out[k][hit] = v[j]
            if self.W.channels:
                for k, v in self.W.channels.items():
                    out[k][hit] = v[j]
        return out


class FlipSource(MetricSource):
    """t -> -t."""

    def __init__(self, base):
        super().__init__(base.r_nodes, base.backend, _swap_t(base.labels), (-base.t_range[1], -base.t_range[0]))
        self.base = base

    def eval(self, t):
        d = self.base.eval(-np.asarray(t, dtype=float))
        for k in ("u_t", "A_t", "B_t"):
            if k in d:
                d[k] = -d[k]
        return d


def _swap_t(labels):
    out = dict(labels)
    out["t_min"], out["t_max"] = labels["t_max"], labels["t_min"]
    return out


class RescaleSource(MetricSource):
    """u -> kappa u with t -> t / kappa: the same metric in the coordinate t' = t / kappa."""

    def __init__(self, base, kappa):
        kappa = float(kappa)
        super().__init__(base.r_nodes, base.backend, base.labels, tuple(x / kappa for x in base.t_range))
        self.base = base
        self.kappa = kappa

    def eval(self, t):
        k = self.kappa
        d = self.base.eval(k * np.asarray(t, dtype=float))
        d["u"] = k * d["u"]
        d["u_t"] = k * k * d["u_t"]
        for name in ("A", "B"):
            if name + "_t" in d:
                d[name + "_t"] = k * d[name + "_t"]
                d[name + "_tt"] = k * k * d[name + "_tt"]
        return d


class ShiftSource(MetricSource):
    def __init__(self, base, shift):
        super().__init__(base.r_nodes, base.backend, base.labels, tuple(x + shift for x in base.t_range))
        self.base = base
        self.shift = float(shift)

    def eval(self, t):
        return self.base.eval(np.asarray(t, dtype=float) - self.shift)


class PiecewiseSource(MetricSource):
    """Selects a source by t-interval: pieces are (t_lo, t_hi, source), first match wins."""

    def __init__(self, pieces, labels=None):
        first = pieces[0][2]
        super().__init__(first.r_nodes, first.backend, labels or first.labels, (pieces[0][0], pieces[-1][1]))
        self.pieces = pieces

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        out = None
        done = np.zeros(t.shape, bool)
        for lo, hi, src in self.pieces:
            m = (t >= lo) & (t <= hi) & ~done
            if not np.any(m):
                continue
            d = src.eval(t[m])
            if out is None:
                out = {k: np.empty((t.size, self.r_nodes.size)) for k in d}
            for k in out:
                out[k][m] = d[k]
            done |= m
        if out is None or not np.all(done):
            raise ParameterError("t outside every piece of the source")
        return out


def as_source(W):
    """The source attached to W, or a spline source over its grid."""
    if isinstance(W, MetricSource):
        return W
    return W.source if W.source is not None else GridSource(W)


def product_source(r_nodes, backend, A0, B0=None, u=1.0, name="product", labels=None):
    """dt^2-type product u^2 dt^2 + h0 with u independent of t."""
    A0 = np.asarray(A0, dtype=float)

    def fn(T, R):
        z = np.zeros_like(T)
        d = {"u": u + z, "A": A0[None, :] + z, "u_t": z, "A_t": z, "A_tt": z}
        if backend == ANNULUS:
            d.update({"B": np.asarray(B0)[None, :] + z, "B_t": z, "B_tt": z})
        return d

    return AnalyticSource(r_nodes, backend, fn, labels, name=name)


def warped_source(r_nodes, backend, A0, B0, rho, rho_t, rho_tt, u=1.0, name="warped", labels=None):
    """u^2 dt^2 + rho(t) h0 with analytic rho and derivatives."""
    A0 = np.asarray(A0, dtype=float)
    B0 = None if B0 is None else np.asarray(B0, dtype=float)

    def fn(T, R):
        z = np.zeros_like(T)
        p, p1, p2 = rho(T), rho_t(T), rho_tt(T)
        d = {"u": u + z, "u_t": z, "A": p * A0, "A_t": p1 * A0, "A_tt": p2 * A0}
        if B0 is not None:
            d.update({"B": p * B0, "B_t": p1 * B0, "B_tt": p2 * B0})
        return d

    return AnalyticSource(r_nodes, backend, fn, labels, name=name)


__all__ = [
    "MetricSource",
    "AnalyticSource",
    "GridSource",
    "FlipSource",
    "RescaleSource",
    "ShiftSource",
    "PiecewiseSource",
    "as_source",
    "product_source",
    "warped_source",
    "INTERVAL",
    "ANNULUS",
]
