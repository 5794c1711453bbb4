import math

import numpy as np
import pytest

from cornerglue import geometry as geo
from cornerglue.errors import ParameterError, PreconditionError
from cornerglue.glue import (
    MEANCONVEX,
    MINIMAL,
    MINUS,
    PLUS,
    GlueConfig,
    bridge_diagnostics,
    bridge_step1,
    clamp_fields,
    conformal_dual_path,
    conformal_step2,
    detect_prepared,
    glue_pipeline,
    jump_term,
    order_rescale,
    prepare_side,
    rayleigh_quotient,
    robin_eigensolve,
    robin_operator,
    robin_root,
)
from cornerglue.deform import taylor_split
from cornerglue.harness.scenarios import build_side, run_scenario

CS = {"backend": "annulus", "shape": "round", "r_min": 0.3, "r_max": 1.4, "Nr": 33, "labels": {}}


def side(u, rho, T=0.5, Ns=65):
    return build_side(CS, {"u": u, "rho": rho, "T": T, "Ns": Ns})


# ------------------------------------------------------------ config


def test_config_validation():
    with pytest.raises(ParameterError):
        GlueConfig(mode="other")
    with pytest.raises(ParameterError):
        GlueConfig(C=100.0, eps=0.02)
    with pytest.raises(ParameterError):
        GlueConfig(f=np.array([0.1, -0.1]))
    assert GlueConfig(f=-0.2).f_sign == "nonpositive"
    assert GlueConfig().c_n == 8.0


# ------------------------------------------------------------ prepared sides


def test_product_side_prepared_form():
    W = side(1.0, [1.0])
    ps = prepare_side(W, 0.0, 4.0, side=MINUS, auto=True)
    s = np.linspace(0, ps.zone, 9)
    d = ps.source.eval(s)
    A, B = ps.closed_form(s)
    assert np.max(np.abs(d["A"] - A)) < 1e-10 and np.max(np.abs(d["B"] - B)) < 1e-10
    assert np.all(ps.k.p_rr == 0)


def test_prepared_trace_rate_equals_uf():
    ps = prepare_side(side(1.0, [1.0, -0.5]), 0.3, 4.0, side=MINUS, auto=True)
    d = ps.source.eval(np.array([0.0]))
    tr_h1 = -0.5 * (d["A_t"][0] / ps.h0.A + d["B_t"][0] / ps.h0.B)
    np.testing.assert_allclose(tr_h1, 0.3 * ps.u_face, atol=1e-14)


def test_jump_condition_violation():
    with pytest.raises(PreconditionError) as exc:
        prepare_side(side(1.0, [1.0, -0.1]), 0.3, 4.0, side=MINUS)
    assert exc.value.stage == "prepare_side"


def test_detect_prepared():
    W = side(1.0, [1.0, 0.0, -3.0], T=0.3)
    td = taylor_split(W, check=False)
    assert detect_prepared(W, jump_term(MINUS, W.u[0], 0.0, td.h0, 2), td) == pytest.approx(3.0, rel=1e-9)
    W = side(1.0, [1.0, -0.5, -3.0], T=0.3)
    assert detect_prepared(W, jump_term(MINUS, W.u[0], 0.0, td.h0, 2)) is None


def test_order_rescale():
    gm, gp = side(1.0, [1.0]), side(1.5, [1.0])
    assert order_rescale(gm, gp, 0.0) == 1.0
    assert order_rescale(gm, gp, 0.2) == pytest.approx(1.65)
    assert order_rescale(gm, gp, -0.2) == 1.0


# ------------------------------------------------------------ bridge


def _prepared_pair(u_minus, u_plus, C=4.0):
    gm, gp = side(u_minus, [1.0, 0.0, -C], T=0.3), side(u_plus, [1.0, 0.0, -C], T=0.3)
    return prepare_side(gm, 0.0, C, side=MINUS, C_prepared=C), prepare_side(gp, 0.0, C, side=PLUS, C_prepared=C)


def test_bridge_endpoints_exact():
    m, p = _prepared_pair(1.0, 2.0)
    cfg = GlueConfig(delta=0.05, C=4.0, eps=0.02, f=0.0)
    W = bridge_step1(m, p, cfg)
    d = W.source.pieces[1][2].eval(np.array([0.0, 0.02]))
    assert np.max(np.abs(d["u"][0] - 1.0)) == 0.0
    assert np.max(np.abs(d["u"][1] - 2.0)) <= 4e-16
    rep = bridge_diagnostics(W, cfg)
    assert rep.passed, [v.id for v in rep.failures()]


def test_bridge_equal_warping_is_prepared_form():
    m, p = _prepared_pair(1.0, 1.0)
    cfg = GlueConfig(delta=0.05, C=4.0, eps=0.02, f=0.0)
    W = bridge_step1(m, p, cfg)
    t = np.linspace(0, 0.02, 11)
    d = W.source.pieces[1][2].eval(t)
    np.testing.assert_allclose(d["A"], (1 - 4.0 * t[:, None] ** 2) * m.h0.A[None, :], rtol=1e-15)
    assert np.all(d["u"] == 1.0)


def test_bridge_ordering_violation():
    m, p = _prepared_pair(1.0, 2.0)
    # f >= 0 needs u+ <= u-
    cfg = GlueConfig(delta=0.05, C=4.0, eps=0.02, f=0.2)
    with pytest.raises(PreconditionError):
        bridge_step1(m, p, cfg)


# ------------------------------------------------------------ eigenproblem


def flat_square(N=33, relabel=True):
    g = geo.build_grid(1.0, 2.0, N, 0.0, 1.0, N)
    if relabel:
        g = g.relabel(r_min="Z")
    return geo.WarpedMetric(g, 1.0, 1.0, 1.0)


def test_constant_potentials():
    W = flat_square()
    e0 = robin_eigensolve(W, np.zeros(W.grid.shape), {"r_max": np.zeros(W.grid.Nt)})
    assert abs(e0.lam) <= 1e-10 and np.all(e0.w == 1.0)
    c = 0.7
    e1 = robin_eigensolve(W, np.full(W.grid.shape, c))
    assert abs(e1.lam - c / 8) <= 1e-8
    assert np.max(np.abs(e1.w - 1)) <= 1e-8
    assert e1.residual <= 1e-8


def test_robin_root_oracle():
    k = robin_root(0.25)
    assert abs(k * math.tan(k) - 0.25) < 1e-14
    with pytest.raises(ParameterError):
        robin_root(0.0)


def test_robin_flat_square_converges():
    beta = 1.0
    exact = robin_root(2 * beta / 8) ** 2
    errs = []
    for N in (33, 65, 129):
        W = flat_square(N)
        e = robin_eigensolve(W, np.zeros(W.grid.shape), {"r_max": np.full(N, beta)})
        errs.append(abs(e.lam - exact))
    assert errs[-1] < 1e-6
    assert errs[0] > errs[1] > errs[2]


def test_rayleigh_infimum():
    W = flat_square()
    Vr = 0.5 + 0.5 * np.sin(3 * W.grid.R) ** 2
    Vb = {"r_max": np.full(W.grid.Nt, 1.0)}
    e = robin_eigensolve(W, Vr, Vb)
    A, m, _ = robin_operator(W, Vr, Vb)
    rng = np.random.default_rng(0)
    q = [rayleigh_quotient(A, m, rng.uniform(0.1, 1.0, W.grid.shape)) for _ in range(50)]
    assert min(q) >= e.lam
    assert abs(e.rayleigh - e.lam) <= 1e-8 * max(1.0, abs(e.lam))
    assert np.all(e.w > 0)


def test_robin_data_only_on_Y():
    W = flat_square()
    with pytest.raises(ParameterError):
        robin_operator(W, 0.0, {"r_min": np.ones(W.grid.Nt)})


def graded_metric(Nr=65, Nt=33, a=0.5):
    # R = 6 a r - 4.5 a^2 r^4 rises from ~0.03 at r = 0.01; Neumann everywhere
    g = geo.build_grid(0.01, 1.0, Nr, 0.0, 1.0, Nt).relabel(r_min="Z", r_max="Z")
    return geo.WarpedMetric(g, 1.0, 1.0, np.exp(-a * g.R**3))


def test_lambda_cascade_to_zero():
    W = graded_metric()
    lams, sups = [], []
    for k in range(6):
        Vr, Vb = clamp_fields(W, 0.5 / 2**k, MEANCONVEX)
        lams.append(robin_eigensolve(W, Vr, Vb).lam)
        sups.append(float(np.max(np.abs(Vr))))
    assert all(a > b for a, b in zip(lams[:-1], lams[1:]))
    assert all(a >= b for a, b in zip(sups, sups[1:]))
    assert lams[-1] == 0.0


# ------------------------------------------------------------ conformal step


def test_trivial_eigenfunction_keeps_metric():
    g = geo.build_grid(1.0, 2.0, 33, -0.5, 0.5, 33)
    W = geo.WarpedMetric(g, 1.0, 1.0, 1.0)
    out, eig, _ = conformal_step2(W, GlueConfig(delta=0.05, mode=MINIMAL), 0.1)
    assert abs(eig.lam) <= 1e-10
    for k in ("u", "A", "B"):
        np.testing.assert_array_equal(getattr(out, k), getattr(W, k))


def test_conformal_dual_path_orders():
    eR, eH = [], []
    for N in (17, 33, 65):
        g = geo.build_grid(0.3, 1.4, N, 0.5, 1.5, N)
        s2 = np.sin(g.T) ** 2
        W = geo.WarpedMetric(g, 1.0, s2, s2 * np.sin(g.R) ** 2)
        phi = 1 + 0.2 * np.sin(2 * g.R) * np.cos(g.T)
        a, b = conformal_dual_path(W, phi)
        eR.append(a)
        eH.append(b)
    assert min(geo.observed_order(eR)) >= 1.9
    assert min(geo.observed_order(eH)) >= 1.9


# ------------------------------------------------------------ pipeline


def test_pipeline_double_band():
    rep = run_scenario("double-round-band")
    assert rep.passed, [v.id for v in rep.failures()]
    assert rep.get("locality").value == 0.0


def test_pipeline_rejects_nonisometric_faces():
    gm, gp = side(1.0, [1.0]), side(1.0, [1.1])
    with pytest.raises(PreconditionError):
        glue_pipeline(gm, gp, 0.0, GlueConfig(C=1.0, eps=0.02))


def test_pipeline_requires_positive_R():
    g = geo.build_grid(1.0, 2.0, 17, 0.0, 0.5, 17)
    W = geo.WarpedMetric(g, 1.0, 1.0, g.R**2)
    with pytest.raises(PreconditionError) as exc:
        glue_pipeline(W, W, 0.0, GlueConfig(mode=MEANCONVEX))
    assert exc.value.stage == "input"
