import numpy as np
import pytest

from cornerglue.errors import ParameterError, PreconditionError
from cornerglue.geometry import observed_order
from cornerglue.normalform import (
    CollarMetric,
    ball_collar,
    block_normal_form,
    catenoid_collar,
    collar_with,
    flat_collar,
    interface_normal_log_u,
    rescale_flow,
    verify_flow_function,
)


def test_flow_function_examples():
    g, f = flat_collar(33, 33)
    assert verify_flow_function(g, f).passed
    bad = verify_flow_function(g, f + g.r_nodes[None, :])
    assert not bad.get("vanishes_on_interface").passed
    assert not bad.get("tangent_on_Y").passed
    with pytest.raises(PreconditionError):
        block_normal_form(g, 0.0 * f)


def test_collar_validation():
    g, _ = flat_collar(9, 9)
    with pytest.raises(ParameterError):
        collar_with(g, F=np.full(g.E.shape, 1.0))
    with pytest.raises(ParameterError):
        CollarMetric(g.r_nodes, g.s_nodes + 0.01, 1.0, 0.0, 1.0, 1.0)


def test_identity_flow_reproduces_product():
    g, f = flat_collar(33, 33)
    W = block_normal_form(g, f, t_nodes=g.s_nodes[8:25])
    assert np.max(np.abs(W.A - g.E[8:25])) < 1e-10
    assert np.max(np.abs(W.u - 1)) < 1e-10
    assert np.max(np.abs(W.B - g.B[8:25])) < 1e-10


@pytest.mark.parametrize("collar,expect", [(ball_collar, 1.0), (catenoid_collar, -1.0)])
def test_interface_normal_log_u(collar, expect):
    errs = []
    for N in (17, 33, 65):
        g, f = collar(N, N)
        assert verify_flow_function(g, f).passed
        W, info = block_normal_form(g, f, return_info=True)
        assert np.max(np.abs(info.cross_term)) < 1e-8
        assert info.boundary_drift < 1e-8
        errs.append(abs(interface_normal_log_u(W) - expect))
    assert errs[-1] < 1e-5
    assert min(observed_order(errs)) >= 1.5


def test_rescaling_flow_divides_u():
    g, f = ball_collar(33, 33)
    W1 = block_normal_form(g, f, delta_collar=0.015, Nt=9)
    W2 = block_normal_form(g, rescale_flow(f, 2.0), delta_collar=0.03, Nt=9)
    np.testing.assert_allclose(W2.u, W1.u / 2, rtol=1e-6)
    np.testing.assert_allclose(W2.A, W1.A, rtol=1e-6)
    # d_nu log u is scale invariant
    assert abs(interface_normal_log_u(W1) - interface_normal_log_u(W2)) < 1e-6
