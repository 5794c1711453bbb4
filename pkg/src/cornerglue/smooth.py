"""C-infinity transition built from the compactly supported bump exp(-1/(1-y^2)).

``step(x)`` rises from 0 (x <= 0) to 1 (x >= 1); it is the normalized
cumulative integral of the bump kernel, evaluated by Gauss-Legendre
quadrature.  Derivatives of every order we need are closed form because
they are derivatives of the kernel itself.
"""

import numpy as np

GL_NODES = 80
_GX, _GW = np.polynomial.legendre.leggauss(GL_NODES)


def kernel(y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    m = np.abs(y) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - y[m] ** 2))
    return out


def _kernel_d1(y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    m = np.abs(y) < 1.0
    ym = y[m]
    q = 1.0 - ym**2
    out[m] = np.exp(-1.0 / q) * (-2.0 * ym / q**2)
    return out


def _kernel_d2(y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    m = np.abs(y) < 1.0
    ym = y[m]
    q = 1.0 - ym**2
    g = -2.0 * ym / q**2
    dg = -2.0 / q**2 - 8.0 * ym**2 / q**3
    out[m] = np.exp(-1.0 / q) * (g * g + dg)
    return out


KERNEL_MASS = float(np.sum(_GW * kernel(_GX)))


def gl_rule(a, b):
    """Nodes and weights of the 80-point rule mapped to [a, b] (broadcasting)."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (_GX + 1.0), half * _GW


def _cdf_left(y):
    # integral of the kernel over [-1, y] for y <= 0, normalized
    nodes, w = gl_rule(-1.0 * np.ones_like(y), y)
    return np.sum(w * kernel(nodes), axis=-1) / KERNEL_MASS


def _cdf_direct(y):
    y = np.asarray(y, dtype=float)
    out = np.where(y >= 1.0, 1.0, 0.0)
    m = np.abs(y) < 1.0
    if np.any(m):
        ym = y[m]
        left = _cdf_left(-np.abs(ym))
        out[m] = np.where(ym > 0, 1.0 - left, left)
    return out


# Tabulated values plus exact first and second derivatives allow quintic
# Hermite interpolation with error far below double-precision roundoff.
_TAB_N = 4096
_X = np.linspace(0.0, 1.0, _TAB_N + 1)
_H = _X[1] - _X[0]


def _quintic(x, f0, f1, d0, d1, s0, s1, h):
    # Hermite quintic on [0, h] in local coordinate u = x / h
    u = x / h
    u2, u3 = u * u, u * u * u
    h00 = 1 - 10 * u3 + 15 * u3 * u - 6 * u3 * u2
    h01 = 1 - h00
    h10 = u - 6 * u3 + 8 * u3 * u - 3 * u3 * u2
    h11 = -4 * u3 + 7 * u3 * u - 3 * u3 * u2
    h20 = 0.5 * (u2 - 3 * u3 + 3 * u3 * u - u3 * u2)
    h21 = 0.5 * (u3 - 2 * u3 * u + u3 * u2)
    return f0 * h00 + f1 * h01 + h * (d0 * h10 + d1 * h11) + h * h * (s0 * h20 + s1 * h21)


def _build_tables():
    S = _cdf_direct(2.0 * _X - 1.0)
    S1 = 2.0 * kernel(2.0 * _X - 1.0) / KERNEL_MASS
    S2 = 4.0 * _kernel_d1(2.0 * _X - 1.0) / KERNEL_MASS
    # integral of S by composite Gauss-Legendre on each cell
    nodes, w = gl_rule(_X[:-1], _X[1:])
    cell = np.sum(w * _cdf_direct(2.0 * nodes - 1.0), axis=-1)
    I = np.concatenate([[0.0], np.cumsum(cell)])
    return S, S1, S2, I


_S, _S1, _S2, _I = _build_tables()
_S3 = 8.0 * _kernel_d2(2.0 * _X - 1.0) / KERNEL_MASS


def _interp(x, f, d, s):
    k = np.clip(np.floor(x / _H).astype(int), 0, _TAB_N - 1)
    return _quintic(x - _X[k], f[k], f[k + 1], d[k], d[k + 1], s[k], s[k + 1], _H)


def cdf(y):
    """Normalized kernel CDF on [-1, 1]; exact 0 and 1 outside."""
    y = np.asarray(y, dtype=float)
    out = np.where(y >= 1.0, 1.0, 0.0)
    m = np.abs(y) < 1.0
    if np.any(m):
        x = 0.5 * (y[m] + 1.0)
        out[m] = _interp(x, _S, _S1, _S2)
    return out


def step(x, order=0):
    """Transition on [0, 1] and its derivatives up to order 3."""
    x = np.asarray(x, dtype=float)
    y = 2.0 * x - 1.0
    if order == 0:
        return cdf(y)
    if order == 1:
        return 2.0 * kernel(y) / KERNEL_MASS
    if order == 2:
        return 4.0 * _kernel_d1(y) / KERNEL_MASS
    if order == 3:
        return 8.0 * _kernel_d2(y) / KERNEL_MASS
    raise ValueError("order must be 0..3")


def step_all(x):
    return tuple(step(x, k) for k in range(4))


def step_integral(x):
    """Integral of step over [0, x]; equals x - 1/2 once x >= 1."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, x - 0.5, 0.0)
    m = (x > 0.0) & (x < 1.0)
    if np.any(m):
        out[m] = _interp(x[m], _I, _S, _S1)
    return out


STEP_D1_MAX = float(2.0 * np.exp(-1.0) / KERNEL_MASS)


def _sup(fn):
    xs = np.linspace(0.0, 1.0, 20001)
    return float(np.max(np.abs(fn(xs))))


STEP_D2_MAX = _sup(lambda s: step(s, 2))
STEP_D3_MAX = _sup(lambda s: step(s, 3))
