import math

import numpy as np
import pytest

from cornerglue import geometry as geo
from cornerglue.deform import (
    DeformParams,
    c_normal_deform,
    calibrate_constants,
    prescribe_II,
    taylor_split,
    trace_condition,
)
from cornerglue.errors import ParameterError, PreconditionError
from cornerglue.sources import AnalyticSource, product_source

T0 = 1.2


def round_band(Nr=65, Nt=41, t0=T0, r=(0.3, 1.2), T=0.4):
    def fn(T_, R):
        s, c = np.sin(T_ + t0), np.cos(T_ + t0)
        z = 0 * T_
        sr = np.sin(R) ** 2
        return {
            "u": 1 + z, "u_t": z,
            "A": s * s + z, "A_t": 2 * s * c + z, "A_tt": 2 * (c * c - s * s) + z,
            "B": s * s * sr, "B_t": 2 * s * c * sr, "B_tt": 2 * (c * c - s * s) * sr,
        }

    rr = np.linspace(*r, Nr)
    return AnalyticSource(rr, "annulus", fn).metric(np.linspace(0, T, Nt))


def product_band():
    r = np.linspace(0.05, math.pi / 2, 129)
    return product_source(r, "annulus", np.ones_like(r), np.sin(r) ** 2).metric(np.linspace(0, 1.28, 129))


def test_params_validation():
    with pytest.raises(ParameterError):
        DeformParams(0.0, 0.1, 0.1)
    with pytest.raises(ParameterError):
        DeformParams(20.0, 0.1, 0.1)  # C eps > 1
    with pytest.raises(ParameterError):
        DeformParams(1.0, 0.3, 0.1)


def test_taylor_split_exact_and_fd():
    W = round_band()
    td = taylor_split(W)
    s, c = math.sin(T0), math.cos(T0)
    np.testing.assert_allclose(td.h1.p_rr, -s * c, rtol=1e-14)
    # finite-difference path agrees to high order
    fd = taylor_split(W.strip_channels(), exact=False)
    assert np.max(np.abs(fd.h1.p_rr - td.h1.p_rr)) < 1e-5
    A, B = td.reconstruct(5)
    np.testing.assert_allclose(A, W.A[5], rtol=1e-13)
    assert np.all(np.diff(td.q_ratios) > 0) or np.max(td.q_ratios) < 1e-9


def test_taylor_split_needs_face():
    W = round_band()
    g = W.grid
    W2 = geo.WarpedMetric(geo.CylGrid(g.r_nodes, g.t_nodes + 0.1, g.backend, g.boundary_labels), W.u, W.A, W.B)
    with pytest.raises(ParameterError):
        taylor_split(W2)


def test_c_normal_items_at_small_delta():
    W = round_band()
    td = taylor_split(W)
    out, rep = c_normal_deform(W, td, DeformParams(1.0, 1e-10, 0.02, 0.1), verify=True)
    assert rep.passed, [v.id for v in rep.failures()]
    for item in ("item1.unchanged_outside", "item2.face_metric", "item4.dt_component"):
        assert rep.get(item).value == 0.0


def test_item6_fails_for_large_delta():
    # the item-6 drop shrinks only as delta -> 0
    W = round_band()
    _, rep = c_normal_deform(W, taylor_split(W), DeformParams(20.0, 1e-3, 0.02, 0.1), verify=True)
    assert not rep.get("item6.scalar_curvature_drop").passed


def test_calibrate_product_band():
    W = product_band()
    p, trace = calibrate_constants(W, eta=0.1)
    assert p.C <= 2**15 and p.C * p.eps <= 1
    assert trace[-1]["passed"]
    out, rep = c_normal_deform(W, taylor_split(W), p, verify=True)
    assert rep.passed


def test_prescribe_with_k_equal_h1_is_identity_on_face():
    W = product_band()
    td = taylor_split(W)
    p, _ = calibrate_constants(W, eta=0.1)
    cn = c_normal_deform(W, td, p)
    out, rep = prescribe_II(cn, td.h1, p, td=td, verify=True)
    assert rep.passed, [v.id for v in rep.failures()]
    assert rep.get("face_II_equals_k_over_u").value <= 1e-12


def test_prescribe_nonzero_k_face_form():
    # h = rho(s) h0 with rho = 1 - s/2: H_face = 1/2; prescribe k = 0.15 h0
    r = np.linspace(0.3, 1.4, 33)

    def fn(S, R):
        z = 0 * S
        rho = 1 - 0.5 * S + z
        sr = np.sin(R) ** 2
        return {"u": 1 + z, "u_t": z, "A": rho, "A_t": -0.5 + z, "A_tt": z, "B": rho * sr, "B_t": -0.5 * sr + z, "B_tt": z}

    W = AnalyticSource(r, "annulus", fn).metric(np.linspace(0, 0.5, 65))
    td = taylor_split(W)
    k = geo.RadialSymTensor(0.15 * td.h0.A, 0.15 * td.h0.B)
    p = DeformParams(4.0, 1e-13, 0.025, 0.1)
    out, rep = prescribe_II(c_normal_deform(W, td, p), k, p, td=td, verify=True)
    assert rep.get("face_II_equals_k_over_u").passed
    assert rep.get("prepared_form_on_zone").passed
    d = out.source.eval(np.array([0.0]))
    np.testing.assert_allclose(-0.5 * d["A_t"][0], k.p_rr, atol=1e-14)


def test_trace_condition_violation():
    W = product_band()
    td = taylor_split(W)
    p, _ = calibrate_constants(W, eta=0.1)
    k = geo.RadialSymTensor(0.1 * td.h0.A, 0.1 * td.h0.B)
    assert np.all(trace_condition(td, k) > 0)
    with pytest.raises(PreconditionError):
        prescribe_II(W, k, p, td=td)


def test_prescribe_requires_positive_R():
    r = np.linspace(1.0, 2.0, 33)
    W = product_source(r, "annulus", np.ones_like(r), r**2).metric(np.linspace(0, 0.5, 33))  # flat: R = 0
    td = taylor_split(W)
    with pytest.raises(PreconditionError):
        prescribe_II(W, td.h1, DeformParams(1.0, 0.01, 0.02), td=td)


def test_item6_drop_monotone_in_delta():
    W = round_band()
    td = taylor_split(W)
    drops = [c_normal_deform(W, td, DeformParams(20.0, d, 0.02, 0.1), verify=True)[1].get("item6.scalar_curvature_drop").value for d in (1e-3, 1e-10, 1e-50)]
    assert drops[0] < drops[1] < drops[2] <= 0.0 + 1e-12
