import numpy as np
import pytest

from cornerglue.errors import ParameterError, SmallnessError
from cornerglue.profiles import build_phi, build_profile, certify_profile, derivative_consistency

KINDS = [
    ("tau", {"delta": 0.05, "eps": 0.02}),
    ("chi", {"eps": 0.1}),
    ("lambda", {"eps": 0.1}),
    ("bump", {"sigma": 0.2}),
    ("clamp", {"mu": 0.5}),
]


@pytest.mark.parametrize("kind,params", KINDS)
def test_certificates_pass(kind, params):
    cert = certify_profile(build_profile(kind, **params))
    failed = [c.id for c in cert.checks if not c.passed]
    assert cert.passed, failed
    assert max(c.samples for c in cert.checks) >= 10_000


def test_tau_examples():
    d, e = 0.05, 0.02
    p = build_profile("tau", delta=d, eps=e)
    v, d1, _, _ = p.derivs(np.array([0.0, d * e / 2, d * e, e, 2 * e]))
    np.testing.assert_array_equal(v, [1.0, 1.0, 1.0, 0.0, 0.0])
    t = np.linspace(d * e, e, 2001)
    vals = p.derivs(t)[0]
    assert np.all((vals >= 0) & (vals <= 1))
    assert set(p.universal_constants()) >= {"C1", "C2", "C3"}


def test_tau_log_decay_uniform_over_sweep():
    worst = []
    for d in (1e-1, 1e-2, 1e-3):
        for e in (0.2, 0.05):
            p = build_profile("tau", delta=d, eps=e)
            t = np.geomspace(d * e, e, 10_000)
            worst.append(np.max(np.abs(p.derivs(t)[1]) * t * abs(np.log(d))))
    assert max(worst) <= p.universal_constants()["C1"] * (1 + 1e-9)


def test_chi_examples():
    e = 0.1
    p = build_profile("chi", eps=e)
    v = p.derivs(np.array([e / 40, np.sqrt(e), 1.0]))[0]
    assert v[0] == e / 40 and v[1] == 0.0 and v[2] == 0.0
    t = np.linspace(0, e, 10_000)
    _, _, d2, _ = p.derivs(t)
    assert np.min(d2 + 2 / e) >= -1e-9 and np.max(d2) <= 1e-9
    assert np.max(p.derivs(np.linspace(0, 1, 10_000))[0]) <= e / 2


def test_bump_and_clamp_shapes():
    s = 0.2
    b = build_profile("bump", sigma=s)
    v = b.derivs(np.array([0.0, s, 3 * s, -3 * s]))[0]
    np.testing.assert_array_equal(v, [0.0, 0.0, 1.0, 1.0])
    t = np.linspace(s, 2 * s, 2001)
    assert np.min(b.derivs(t)[1]) >= 0
    c = build_profile("clamp", mu=0.5)
    x = np.array([-1.0, 0.1, 0.25, 0.5, 3.0])
    v = c.derivs(x)[0]
    np.testing.assert_array_equal(v[:3], x[:3])
    np.testing.assert_array_equal(v[3:], 0.0)
    y = np.linspace(-1, 2, 1001)
    assert np.all(c.derivs(y)[0] <= y)


def test_lambda_examples():
    e = 0.1
    p = build_profile("lambda", eps=e)
    v = p.derivs(np.array([e * e / 2, e, 1.0]))[0]
    assert v[0] == 0.0 and v[1] == e and v[2] == 1.0
    d1 = p.derivs(np.linspace(0, 1, 10_000))[1]
    assert np.min(d1) >= -1e-9 and np.max(d1) <= 2 + 1e-9


@pytest.mark.parametrize("eps", [0.1, 0.02])
def test_phi_certificate(eps):
    p = build_phi(eps)
    cert = certify_profile(p)
    assert cert.passed, [c.id for c in cert.checks if not c.passed]
    assert cert.constants["tau_residual"] < 1e-12
    assert cert.constants["sup_tdphi_prime"] >= 1 - 1e-6
    v = p.derivs(np.array([0.0, eps]))[0]
    assert v[0] == 0.0 and abs(v[1] - eps) < 1e-12


def test_corrupted_phi_fails_certificate():
    cert = certify_profile(build_phi(0.1, tau_override=0.3), consistency=False)
    failed = {c.id for c in cert.checks if not c.passed}
    assert "phi.3" in failed


def test_phi_smallness_bracket():
    with pytest.raises(SmallnessError):
        build_phi(0.4)


def test_derivative_consistency_detects_mismatch():
    p = build_profile("bump", sigma=0.2)
    assert derivative_consistency(p) <= 0.35

    class Broken:
        def __getattr__(self, name):
            return getattr(p, name)

        def derivs(self, t):
            v, d1, d2, d3 = p.derivs(t)
            return v, 1.5 * d1, d2, d3

    assert derivative_consistency(Broken()) > 0.35


def test_unknown_kind():
    with pytest.raises(ParameterError):
        build_profile("nope", eps=0.1)
    with pytest.raises(ParameterError):
        build_profile("chi")
