"""Auxiliary cutoff and interpolation profiles with machine-checked certificates.

Five families are built here: the logarithmic cutoff ``tau``, the bend
``chi``, the warping freeze ``lambda``, the interpolation function ``phi``
and the bump ``xi``.  A sixth, ``clamp``, is the threshold function used on
curvature fields during the conformal step.  Every profile exposes
``derivs(t) -> (value, d1, d2, d3)`` and a list of transition intervals, and
``certify_profile`` evaluates the stated inequalities on dense samples.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import bisect

from . import smooth
from .errors import ParameterError, SmallnessError

PASS_MARGIN = -1e-9


@dataclass(frozen=True)
class InequalityCheck:
    id: str
    samples: int
    worst_margin: float
    passed: bool
    note: str = ""

    def to_dict(self):
        return {
            "id": self.id,
            "samples": self.samples,
            "worst_margin": self.worst_margin,
            "passed": self.passed,
            "note": self.note,
        }


@dataclass(frozen=True)
class PropertyCertificate:
    kind: str
    params: dict
    checks: tuple
    constants: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def check(self, check_id):
        for c in self.checks:
            if c.id == check_id:
                return c
        raise KeyError(check_id)

    def to_dict(self):
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "constants": dict(self.constants),
        }


def _check(cid, margins, note=""):
    margins = np.atleast_1d(np.asarray(margins, dtype=float))
    worst = float(np.min(margins)) if margins.size else float("inf")
    return InequalityCheck(cid, int(margins.size), worst, bool(worst >= PASS_MARGIN), note)


class CutoffProfile:
    """Common evaluator interface.  Subclasses fill in ``derivs``."""

    kind = "abstract"
    log_scaled = False
    value_scale = 1.0

    def __init__(self, params):
        self.params = dict(params)

    def derivs(self, t):
        raise NotImplementedError

    def __call__(self, t, order=0):
        return self.derivs(np.asarray(t, dtype=float))[order]

    @property
    def transitions(self):
        return ()

    @property
    def domain(self):
        raise NotImplementedError

    @property
    def break_points(self):
        pts = []
        for lo, hi in self.transitions:
            pts.extend([lo, hi])
        return np.array(sorted(set(pts)))

    def sample_points(self, n=10_000):
        lo, hi = self.domain
        parts = [np.linspace(lo, hi, n + 1), self.break_points]
        for a, b in self.transitions:
            w = b - a
            parts.append(np.linspace(a - 0.25 * w, b + 0.25 * w, 201))
        pts = np.concatenate(parts)
        pts = pts[(pts >= lo) & (pts <= hi)]
        return np.unique(pts)

    def local_scale(self, t):
        t = np.asarray(t, dtype=float)
        s = np.full(t.shape, np.inf)
        for a, b in self.transitions:
            dist = np.maximum(np.maximum(a - t, t - b), 0.0)
            s = np.minimum(s, np.maximum(b - a, dist))
        if self.log_scaled:
            s = np.minimum(s, np.abs(t))
        lo, hi = self.domain
        return np.minimum(s, hi - lo)

    def random_points(self, n, rng):
        lo, hi = self.domain
        return rng.uniform(lo, hi, n)

    def inequalities(self, t):
        return [], {}


# ---------------------------------------------------------------- tau


class TauProfile(CutoffProfile):
    """Smoothed clamp of log(eps/t)/|log delta|: 1 below delta*eps, 0 above eps."""

    kind = "tau"
    log_scaled = True

    def __init__(self, delta, eps):
        super().__init__({"delta": delta, "eps": eps})
        self.delta = float(delta)
        self.eps = float(eps)
        self.L = -math.log(self.delta)

    @property
    def transitions(self):
        return ((self.delta * self.eps, self.eps),)

    @property
    def domain(self):
        return (0.0, 1.5 * self.eps)

    def random_points(self, n, rng):
        lo = self.delta * self.eps / 4
        return np.exp(rng.uniform(math.log(lo), math.log(1.5 * self.eps), n))

    def sample_points(self, n=10_000):
        g = np.geomspace(self.delta * self.eps / 10, 1.5 * self.eps, n)
        return np.unique(np.concatenate([super().sample_points(n), g]))

    def derivs(self, t):
        t = np.asarray(t, dtype=float)
        L = self.L
        v = np.where(t < self.eps, 1.0, 0.0)
        d1, d2, d3 = np.zeros_like(t), np.zeros_like(t), np.zeros_like(t)
        m = (t > self.delta * self.eps) & (t < self.eps)
        if np.any(m):
            tm = t[m]
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                return self._band(t, tm, m, v, d1, d2, d3, L)
        return v, d1, d2, d3

    def _band(self, t, tm, m, v, d1, d2, d3, L):
        S, S1, S2, S3 = smooth.step_all(np.log(self.eps / tm) / L)
        x1 = -1.0 / (tm * L)
        x2 = 1.0 / (tm**2 * L)
        x3 = -2.0 / (tm**3 * L)
        v[m] = S
        d1[m] = S1 * x1
        d2[m] = S2 * x1**2 + S1 * x2
        d3[m] = S3 * x1**3 + 3.0 * S2 * x1 * x2 + S1 * x3
        return v, d1, d2, d3

    @staticmethod
    def universal_constants():
        # |log delta| >= log 4 on the admissible range
        l4 = math.log(4.0)
        return {
            "C1": smooth.STEP_D1_MAX,
            "C2": smooth.STEP_D2_MAX / l4 + smooth.STEP_D1_MAX,
            "C3": smooth.STEP_D3_MAX / l4**2 + 3 * smooth.STEP_D2_MAX / l4 + 2 * smooth.STEP_D1_MAX,
        }

    def inequalities(self, t):
        v, d1, d2, d3 = self.derivs(t)
        de = self.delta * self.eps
        bound = self.universal_constants()
        checks = [
            _check("tau.1", -np.abs(v[t <= de] - 1.0)),
            _check("tau.2", -np.abs(v[t >= self.eps])),
            _check("tau.3", np.minimum(v, 1.0 - v)),
        ]
        consts = {}
        pos = t > 0
        for ell, d in ((1, d1), (2, d2), (3, d3)):
            scaled = np.abs(d[pos]) * t[pos] ** ell * self.L
            achieved = float(np.max(scaled))
            consts[f"C{ell}"] = achieved
            checks.append(_check(f"tau.4.C{ell}", bound[f"C{ell}"] - scaled, "bound is the delta-free constant"))
        return checks, consts


def build_tau(delta, eps):
    if not (0.0 < delta < 0.25):
        raise ParameterError("delta must lie in (0, 1/4)", delta=delta)
    if not (0.0 < eps < 1.0):
        raise ParameterError("eps must lie in (0, 1)", eps=eps)
    return TauProfile(delta, eps)


# ---------------------------------------------------------------- chi


class ChiProfile(CutoffProfile):
    """Identity near 0, concave bend to a plateau, smooth decay to 0 at sqrt(eps)."""

    kind = "chi"
    BEND = 0.85  # bend width in units of eps; keeps chi'' >= -1.95/eps

    def __init__(self, eps):
        super().__init__({"eps": eps})
        e = float(eps)
        self.eps = e
        self.value_scale = e
        self.a = e / 20.0
        self.w = self.BEND * e
        self.top = self.a + 0.5 * self.w
        self.root = math.sqrt(e)
        self.D = self.root - e

    @property
    def transitions(self):
        return ((self.a, self.a + self.w), (self.eps, self.root))

    @property
    def domain(self):
        return (0.0, 1.25 * self.root)

    def derivs(self, t):
        t = np.asarray(t, dtype=float)
        v = np.zeros_like(t)
        d1 = np.zeros_like(t)
        d2 = np.zeros_like(t)
        d3 = np.zeros_like(t)
        m0 = t <= self.a
        v[m0] = t[m0]
        d1[m0] = 1.0
        mb = (t > self.a) & (t < self.a + self.w)
        if np.any(mb):
            y = (t[mb] - self.a) / self.w
            v[mb] = self.a + self.w * (y - smooth.step_integral(y))
            d1[mb] = 1.0 - smooth.step(y)
            d2[mb] = -smooth.step(y, 1) / self.w
            d3[mb] = -smooth.step(y, 2) / self.w**2
        mp = (t >= self.a + self.w) & (t <= self.eps)
        v[mp] = self.top
        md = (t > self.eps) & (t < self.root)
        if np.any(md):
            y = (t[md] - self.eps) / self.D
            v[md] = self.top * (1.0 - smooth.step(y))
            d1[md] = -self.top * smooth.step(y, 1) / self.D
            d2[md] = -self.top * smooth.step(y, 2) / self.D**2
            d3[md] = -self.top * smooth.step(y, 3) / self.D**3
        return v, d1, d2, d3

    @staticmethod
    def universal_c0():
        r = math.sqrt(0.5)
        top = 0.475  # plateau height in units of eps
        return max(
            1.0,
            top * smooth.STEP_D1_MAX * r / (1 - r),
            top * smooth.STEP_D2_MAX / (1 - r) ** 2,
        )

    def inequalities(self, t):
        v, d1, d2, _ = self.derivs(t)
        e = self.eps
        c0 = self.universal_c0()
        on_e = t <= e
        late = (t >= e) & (t <= self.root)
        checks = [
            _check("chi.1.identity", -np.abs(v[t <= e / 20] - t[t <= e / 20])),
            _check("chi.1.vanish", -np.abs(v[t >= self.root])),
            _check("chi.1.range", np.minimum(v, e / 2 - v)),
            _check("chi.2", c0 - np.abs(d1)),
            _check("chi.3.lower", d2[on_e] + 2.0 / e),
            _check("chi.3.upper", -d2[on_e]),
            _check("chi.3.late", c0 - np.abs(d2[late])),
        ]
        consts = {"c0": float(max(np.max(np.abs(d1)), np.max(np.abs(d2[late])) if late.any() else 0.0)), "c0_bound": c0}
        return checks, consts


def build_chi(eps):
    if not (0.0 < eps < 0.5):
        raise ParameterError("eps must lie in (0, 1/2)", eps=eps)
    return ChiProfile(eps)


# ---------------------------------------------------------------- lambda


class LambdaProfile(CutoffProfile):
    """0 up to eps^2, identity from eps/2, slope kept in [0, 2].

    The slope is beta*S(y/theta) - (beta-1)*S((y-1+theta)/theta) in the
    rescaled variable y; beta is fixed by the area constraint.
    """

    kind = "lambda"
    THETA = 0.1

    def __init__(self, eps):
        super().__init__({"eps": eps})
        e = float(eps)
        self.eps = e
        self.value_scale = e
        self.t0 = e * e
        self.L = e / 2.0 - e * e
        th = self.THETA
        self.beta = (1.0 + self.t0 / self.L - th / 2.0) / (1.0 - th)

    @property
    def transitions(self):
        th = self.THETA
        return (
            (self.t0, self.t0 + th * self.L),
            (self.t0 + (1 - th) * self.L, self.t0 + self.L),
        )

    @property
    def domain(self):
        return (0.0, 1.5 * self.eps)

    def derivs(self, t):
        t = np.asarray(t, dtype=float)
        th, b, L = self.THETA, self.beta, self.L
        y = (t - self.t0) / L
        y1 = y / th
        y2 = (y - 1.0 + th) / th
        mid = (t > self.t0) & (t < self.eps / 2)
        v = np.where(t >= self.eps / 2, t, 0.0)
        if np.any(mid):
            v[mid] = L * th * (b * smooth.step_integral(y1[mid]) - (b - 1) * smooth.step_integral(y2[mid]))
        d1 = b * smooth.step(y1) - (b - 1) * smooth.step(y2)
        d2 = (b * smooth.step(y1, 1) - (b - 1) * smooth.step(y2, 1)) / (th * L)
        d3 = (b * smooth.step(y1, 2) - (b - 1) * smooth.step(y2, 2)) / (th * L) ** 2
        return v, d1, d2, d3

    def inequalities(self, t):
        v, d1, _, _ = self.derivs(t)
        e = self.eps
        checks = [
            _check("lambda.zero", -np.abs(v[t <= e * e])),
            _check("lambda.identity", -np.abs(v[t >= e / 2] - t[t >= e / 2])),
            _check("lambda.slope", np.minimum(d1, 2.0 - d1)),
        ]
        return checks, {"beta": self.beta, "max_slope": float(np.max(d1))}


def build_lambda(eps):
    if not (0.0 < eps < 0.5):
        raise ParameterError("eps must lie in (0, 1/2)", eps=eps)
    p = LambdaProfile(eps)
    if p.L <= 0 or p.beta > 2.0:
        # slope <= 2 cannot carry lambda from 0 at eps^2 to eps/2 at eps/2
        raise SmallnessError(
            "no lambda profile with slope in [0,2] exists for this eps", eps=eps, beta=p.beta
        )
    return p


# ---------------------------------------------------------------- bump


class BumpProfile(CutoffProfile):
    """Even bump: 0 on |s| <= sigma, 1 on |s| >= 2 sigma."""

    kind = "bump"

    def __init__(self, sigma):
        super().__init__({"sigma": sigma})
        self.sigma = float(sigma)

    @property
    def transitions(self):
        s = self.sigma
        return ((-2 * s, -s), (s, 2 * s))

    @property
    def domain(self):
        return (-3 * self.sigma, 3 * self.sigma)

    def derivs(self, t):
        t = np.asarray(t, dtype=float)
        s = self.sigma
        x = (np.abs(t) - s) / s
        sg = np.sign(t)
        return (
            smooth.step(x),
            sg * smooth.step(x, 1) / s,
            smooth.step(x, 2) / s**2,
            sg * smooth.step(x, 3) / s**3,
        )

    def inequalities(self, t):
        v, d1, _, _ = self.derivs(t)
        s = self.sigma
        right = (t >= s) & (t <= 2 * s)
        left = (t >= -2 * s) & (t <= -s)
        checks = [
            _check("bump.inner", -np.abs(v[np.abs(t) <= s])),
            _check("bump.outer", -np.abs(v[np.abs(t) >= 2 * s] - 1.0)),
            _check("bump.range", np.minimum(v, 1.0 - v)),
            _check("bump.monotone.right", d1[right]),
            _check("bump.monotone.left", -d1[left]),
        ]
        return checks, {}


def build_bump(sigma):
    if not sigma > 0:
        raise ParameterError("sigma must be positive", sigma=sigma)
    return BumpProfile(sigma)


# ---------------------------------------------------------------- clamp


class ClampProfile(CutoffProfile):
    """x for x <= mu/2, 0 for x >= mu, strictly between 0 and x in between."""

    kind = "clamp"

    def __init__(self, mu):
        super().__init__({"mu": mu})
        self.mu = float(mu)
        self.value_scale = self.mu

    @property
    def transitions(self):
        return ((self.mu / 2, self.mu),)

    @property
    def domain(self):
        return (-self.mu, 2 * self.mu)

    def derivs(self, x):
        x = np.asarray(x, dtype=float)
        c = 2.0 / self.mu
        y = (x - self.mu / 2) * c
        S, S1, S2, S3 = smooth.step_all(y)
        v = np.where(x >= self.mu, 0.0, x * (1.0 - S))
        d1 = (1.0 - S) - x * c * S1
        d2 = -2.0 * c * S1 - x * c * c * S2
        d3 = -3.0 * c * c * S2 - x * c**3 * S3
        return v, d1, d2, d3

    def inequalities(self, x):
        v = self.derivs(x)[0]
        mu = self.mu
        inside = (x > 0) & (x < mu)
        checks = [
            _check("clamp.identity", -np.abs(v[x <= mu / 2] - x[x <= mu / 2])),
            _check("clamp.vanish", -np.abs(v[x >= mu])),
            _check("clamp.below_identity", x - v),
            _check("clamp.positive", v[inside] if inside.any() else []),
        ]
        return checks, {}


def build_clamp(mu):
    if not mu > 0:
        raise ParameterError("mu must be positive", mu=mu)
    return ClampProfile(mu)


# ---------------------------------------------------------------- phi


@dataclass(frozen=True)
class _Element:
    """Smooth plateau: rises over ``rise`` (or starts at 1), falls over ``fall``."""

    rise: tuple | None
    fall: tuple | None

    def value(self, s, order=0):
        s = np.asarray(s, dtype=float)
        one, zero = np.ones_like(s), np.zeros_like(s)
        R0, Rk, F0, Fk = one, zero, one, zero
        if self.rise is not None:
            a, b = self.rise
            w = b - a
            R0 = smooth.step((s - a) / w, 0)
            if order:
                Rk = smooth.step((s - a) / w, order) / w**order
        if self.fall is not None:
            a, b = self.fall
            w = b - a
            F0 = 1.0 - smooth.step((s - a) / w, 0)
            if order:
                Fk = -smooth.step((s - a) / w, order) / w**order
        if order == 0:
            return R0 * F0
        # disjoint transitions: at most one factor varies at any point
        return Rk * F0 + R0 * Fk

    def _pieces(self, t):
        """Yield (kind, lo, hi) covering [0, t] clipped to the element support."""
        start = self.rise[0] if self.rise else 0.0
        flat_lo = self.rise[1] if self.rise else 0.0
        flat_hi = self.fall[0] if self.fall else np.inf
        end = self.fall[1] if self.fall else np.inf
        out = []
        if self.rise:
            out.append(("rise", start, flat_lo))
        out.append(("flat", flat_lo, flat_hi))
        if self.fall:
            out.append(("fall", flat_hi, end))
        return out

    def integrals(self, t):
        """Return (int_0^t E, int_0^t E(r) log(t/r) dr) for t > 0."""
        t = np.asarray(t, dtype=float)
        I0 = np.zeros_like(t)
        IL = np.zeros_like(t)
        for kind, lo, hi in self._pieces(t):
            q = np.minimum(t, hi)
            act = q > lo
            if not np.any(act):
                continue
            tq, qq = t[act], q[act]
            if kind == "flat":
                I0[act] += qq - lo
                IL[act] += _lam(tq, qq) - _lam(tq, np.full_like(qq, lo))
                continue
            nodes, w = smooth.gl_rule(np.full_like(qq, lo), qq)
            e = self.value(nodes)
            I0[act] += np.sum(w * e, axis=-1)
            IL[act] += np.sum(w * e * np.log(tq[:, None] / nodes), axis=-1)
        return I0, IL


def _lam(t, x):
    # antiderivative x(1 + log(t/x)) of log(t/r), zero at x = 0
    out = np.zeros_like(x)
    m = x > 0
    out[m] = x[m] * (1.0 + np.log(t[m] / x[m]))
    return out


class PhiProfile(CutoffProfile):
    """Interpolation function obtained from the mixed step profiles f1, f2."""

    kind = "phi"
    log_scaled = True
    WIDTH = 1e-3

    def __init__(self, eps, tau_override=None):
        super().__init__({"eps": eps} if tau_override is None else {"eps": eps, "tau_override": tau_override})
        e = float(eps)
        self.eps = e
        self.value_scale = e
        if not (0.0 < e < 0.5):
            raise ParameterError("eps must lie in (0, 1/2)", eps=e)
        if 1.0 / e > 600.0:
            raise SmallnessError("exp(1/eps) overflows double precision", eps=e)
        self.a1 = math.exp(-1.0 / e)
        self.a2 = math.exp(-1.0 / (3.0 * e))
        self.w0 = self.WIDTH * self.a1
        self.we = self.WIDTH * (e - self.a2)
        fall1 = (self.a1 * (1 - self.WIDTH / 2), self.a1 * (1 + self.WIDTH / 2))
        fall2 = (self.a2 * (1 - self.WIDTH / 2), self.a2 * (1 + self.WIDTH / 2))
        hi_rise = (e - 2 * self.we, e - self.we)
        if not (self.a2 < e and fall2[1] < hi_rise[0]):
            raise SmallnessError(
                "second step profile does not fit inside [0, eps]", eps=e, a2=self.a2
            )
        rise0 = (self.w0, 2 * self.w0)
        # complement of the low plateau: f = 2 eps (1 - rise) + ... keeps f - 2 eps free of cancellation
        self.lo = _Element(rise0, None)
        self.hi = _Element(hi_rise, None)
        self.p1 = _Element(rise0, fall1)
        self.p2 = _Element(rise0, fall2)
        one = np.array([e])
        lo0, loL = (x[0] for x in self.lo.integrals(one))
        hi0, hiL = (x[0] for x in self.hi.integrals(one))
        p10, p1L = (x[0] for x in self.p1.integrals(one))
        p20, p2L = (x[0] for x in self.p2.integrals(one))
        base_mass = 2 * e * (e - lo0 + hi0)
        base_log = 2 * e * (e - loL + hiL)
        # plateau heights fixed by the mass identity int f_k = 2 eps^2
        self.H1 = (2 * e * e - base_mass) / p10
        self.H2 = (2 * e * e - base_mass) / p20
        self.J1 = base_log + self.H1 * p1L
        self.J2 = base_log + self.H2 * p2L
        self.target = e + 2 * e * e
        if not (self.J1 > self.target > self.J2):
            raise SmallnessError(
                "log-moment bracket fails; eps is not small enough",
                eps=e,
                J1=self.J1,
                J2=self.J2,
                target=self.target,
            )

        def resid(tau):
            return tau * self.J1 + (1 - tau) * self.J2 - self.target

        tau = bisect(resid, 0.0, 1.0, xtol=1e-300, rtol=1e-15, maxiter=400)
        self.tau_mix = float(tau)
        self.tau_residual = abs(resid(self.tau_mix)) / self.target
        self.tau_used = self.tau_mix if tau_override is None else float(tau_override)
        self.elements = (
            (-2 * e, self.lo),
            (2 * e, self.hi),
            (self.tau_used * self.H1, self.p1),
            ((1 - self.tau_used) * self.H2, self.p2),
        )

    @property
    def transitions(self):
        out = []
        for _, el in self.elements:
            if el.rise:
                out.append(el.rise)
            if el.fall:
                out.append(el.fall)
        return tuple(sorted(set(out)))

    @property
    def domain(self):
        return (0.0, self.eps)

    def sample_points(self, n=10_000):
        g = np.geomspace(self.w0 / 10, self.eps, n + 1)
        return np.unique(np.concatenate([super().sample_points(n), g, [0.0, self.eps]]))

    def random_points(self, n, rng):
        k = n // 2
        lg = np.exp(rng.uniform(math.log(self.w0 / 2), math.log(self.eps), n - k))
        return np.concatenate([rng.uniform(0, self.eps, k), lg])

    def f0(self, t, order=0):
        """f - 2 eps, or its derivative."""
        t = np.asarray(t, dtype=float)
        return sum(c * el.value(t, order) for c, el in self.elements)

    def f(self, t, order=0):
        return self.f0(t, order) + (2 * self.eps if order == 0 else 0.0)

    def cumulative(self, t):
        """(int_0^t (f - 2 eps), int_0^t (f(r) - 2 eps) log(t/r) dr)."""
        t = np.asarray(t, dtype=float)
        F = np.zeros_like(t)
        G = np.zeros_like(t)
        pos = t > 0
        for c, el in self.elements:
            I0, IL = el.integrals(t[pos])
            F[pos] += c * I0
            G[pos] += c * IL
        return F, G

    def derivs(self, t, _cum=None):
        t = np.asarray(t, dtype=float)
        e = self.eps
        tc = np.clip(t, 0.0, e)
        F0, v = self.cumulative(tc) if _cum is None else _cum
        f0 = self.f0(tc)
        f1 = self.f0(tc, 1)
        live = tc > self.w0
        ts = np.where(live, tc, 1.0)
        d1 = np.where(live, F0 / ts, 0.0)
        d2 = np.where(live, (f0 - d1) / ts, 0.0)
        d3 = np.where(live, (f1 - 2 * d2) / ts, 0.0)
        v = np.where(live, v, 0.0)
        outside = (t < 0) | (t > e)
        v = np.where(t > e, e, v)
        z = np.zeros_like(t)
        return v, np.where(outside, z, d1), np.where(outside, z, d2), np.where(outside, z, d3)

    def t_dphi(self, t):
        """t*phi'(t) and (t*phi')' computed without division."""
        t = np.asarray(t, dtype=float)
        return self.cumulative(t)[0], self.f0(t)

    def inequalities(self, t):
        e = self.eps
        cum = self.cumulative(np.clip(t, 0.0, e))
        v = self.derivs(t, _cum=cum)[0]
        tp, tpp = cum[0], self.f0(t)
        fv = self.f(t)
        near0 = t <= self.w0
        neare = t >= e - self.we
        m0, g0 = self.cumulative(np.array([e]))
        mass = m0[0] + 2 * e * e
        logm = g0[0] + 2 * e * e  # int_0^eps 2 eps log(eps/r) dr = 2 eps^2
        checks = [
            _check("phi.1", 2 * e - np.abs(v)),
            _check("phi.2", -np.abs(v[near0]), f"neighbourhood [0, {self.w0:.3e}]"),
            _check("phi.3", -np.abs(v[neare] - e), f"neighbourhood [{e - self.we:.6g}, eps]"),
            _check("phi.4", tpp + 2 * e),
            _check("phi.5", 2 * e * e - np.abs(tp)),
            _check("phi.6", e - np.abs(t * tpp)),
            _check("f.i", fv),
            _check("f.ii", -np.abs(fv[near0 | neare] - 2 * e)),
            _check("f.iii", [-abs(mass - 2 * e * e) / (2 * e * e)], "relative"),
            _check("f.iv", [-abs(logm - self.target) / self.target], "relative"),
            _check("f.v", (e - t * fv) / e, "scaled: (eps - t f)/eps"),
            _check("tau_mix.residual", [1e-12 - self.tau_residual]),
            _check("phi.sup_bound", [float(np.max(tpp)) - (1 - 1e-6)], "sup (t phi')' >= 1 - 1e-6"),
        ]
        consts = {
            "tau_mix": self.tau_mix,
            "tau_used": self.tau_used,
            "tau_residual": self.tau_residual,
            "H1": self.H1,
            "H2": self.H2,
            "sup_tdphi_prime": float(np.max(tpp)),
            "phi_at_eps": float(v[-1]) if t[-1] == e else float(self.derivs(np.array([e]))[0][0]),
        }
        return checks, consts


def build_phi(eps, tau_override=None):
    """Construct phi_eps; raises SmallnessError when eps is too large."""
    return PhiProfile(eps, tau_override=tau_override)


# ---------------------------------------------------------------- certification

_BUILDERS = {
    "tau": lambda p: build_tau(p["delta"], p["eps"]),
    "chi": lambda p: build_chi(p["eps"]),
    "lambda": lambda p: build_lambda(p["eps"]),
    "phi": lambda p: build_phi(p["eps"]),
    "bump": lambda p: build_bump(p["sigma"]),
    "clamp": lambda p: build_clamp(p["mu"]),
}


def build_profile(kind, **params):
    try:
        return _BUILDERS[kind](params)
    except KeyError as exc:
        if kind not in _BUILDERS:
            raise ParameterError(f"unknown profile kind {kind!r}") from exc
        raise ParameterError(f"missing parameter {exc.args[0]!r} for {kind}") from exc


def derivative_consistency(p, n=1000, seed=0):
    """Central differences of each evaluator against the next derivative.

    Returns the worst ratio err(h/2) / (err(h) + floor) over the sample;
    values near 0.25 mean O(h^2) agreement, anything <= 0.35 passes.
    """
    rng = np.random.default_rng(seed)
    t = p.random_points(n, rng)
    s = p.local_scale(t)
    h = 1e-3 * s
    worst = 0.0
    for k in range(3):
        d = p.derivs(t)[k + 1]
        vk = p.derivs(t)[k]

        def cd(step):
            return (p.derivs(t + step)[k] - p.derivs(t - step)[k]) / (2 * step)

        e1 = np.abs(cd(h) - d)
        e2 = np.abs(cd(h / 2) - d)
        # roundoff in the k-th derivative is ~ ulp(V / s^k); differencing divides by h
        noise = 1e3 * np.finfo(float).eps * np.maximum(np.abs(vk), p.value_scale / s**k) / h
        floor = 1e-9 * (np.abs(d) + np.abs(vk) / s) + noise + 1e-300
        ratio = e2 / (e1 + floor)
        ok = (e2 <= 0.35 * e1) | (e2 <= floor)
        if not np.all(ok):
            worst = max(worst, float(np.max(ratio[~ok])))
        else:
            worst = max(worst, float(np.max(np.where(e2 <= floor, 0.0, ratio))))
    return worst


def certify_profile(p, n=10_000, consistency=True):
    t = p.sample_points(n)
    checks, consts = p.inequalities(t)
    checks = list(checks)
    if consistency:
        r = derivative_consistency(p)
        checks.append(
            InequalityCheck("evaluator.consistency", 1000, 0.35 - r, bool(r <= 0.35), "error ratio under step halving")
        )
    return PropertyCertificate(p.kind, dict(p.params), tuple(checks), consts)
