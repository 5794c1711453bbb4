import math

import numpy as np
import pytest

from cornerglue import geometry as geo
from cornerglue.errors import ParameterError

LEVELS = (17, 33, 65)


def orders(errs):
    return geo.observed_order(errs)


# ---------------------------------------------------------------- closed-form scenes


def round_s3(N):
    g = geo.build_grid(0.3, 2.8, N, 0.5, 2.5, N)
    s2 = np.sin(g.T) ** 2
    return geo.WarpedMetric(g, 1.0, s2, s2 * np.sin(g.R) ** 2)


def hyperbolic(N):
    g = geo.build_grid(1.0, 2.0, N, -0.5, 0.5, N)
    e = np.exp(2 * g.T)
    return geo.WarpedMetric(g, 1.0, e, e)


def flat(N):
    g = geo.build_grid(1.0, 2.0, N, 0.0, 1.0, N)
    return geo.WarpedMetric(g, 1.0, 1.0, g.R**2)


def test_build_grid_examples():
    g = geo.build_grid(1, 2, 65, -1, 1, 129, geo.ANNULUS)
    assert g.dr == pytest.approx(1 / 64, abs=1e-15)
    assert g.boundary_labels == {"r_min": "Y", "r_max": "Y", "t_min": "Z", "t_max": "Z"}
    assert geo.build_grid(0, 1, 33, 0, 0.5, 33, geo.INTERVAL).n == 1
    with pytest.raises(ParameterError):
        geo.build_grid(0, 2, 65, 0, 1, 65, geo.ANNULUS)
    with pytest.raises(ParameterError):
        geo.build_grid(1, 2, 8, 0, 1, 65)


def test_grid_rejects_nonuniform():
    r = np.linspace(1, 2, 17)
    r[3] += 1e-6
    with pytest.raises(ParameterError):
        geo.CylGrid(r, np.linspace(0, 1, 17), geo.ANNULUS)


def test_metric_rejects_nonpositive_fields():
    g = geo.build_grid(1, 2, 9, 0, 1, 9)
    with pytest.raises(ParameterError):
        geo.WarpedMetric(g, 0.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        geo.WarpedMetric(g, 1.0, 1.0, None)


def test_slice_geometry_static_and_exponential():
    g = geo.build_grid(1, 2, 17, 0, 1, 17)
    W = geo.WarpedMetric(g, 1.0, 1.0, g.R**2)
    II, H = geo.slice_geometry(W, 4)
    assert np.all(II.p_rr == 0) and np.all(H == 0)
    e = np.exp(2 * g.T)
    W = geo.WarpedMetric(g, 1.0, e, e * g.R**2)
    errs = [np.max(np.abs(geo.slice_geometry(hyperbolic(N), N // 2)[1] - 2.0)) for N in LEVELS]
    assert max(errs) < 1e-2 and min(orders(errs)) > 1.9


def test_slice_mean_curvature_round_band():
    errs = []
    for N in LEVELS:
        W = round_s3(N)
        j = N // 2
        t = W.grid.t_nodes[j]
        errs.append(np.max(np.abs(geo.slice_geometry(W, j)[1] - 2 / math.tan(t))))
    assert min(orders(errs)) > 1.9


@pytest.mark.parametrize("scene,exact", [(round_s3, 6.0), (hyperbolic, -6.0)])
def test_scalar_curvature_orders(scene, exact):
    errs = [np.max(np.abs(geo.ambient_scalar_curvature(scene(N)) - exact)) for N in LEVELS]
    assert min(orders(errs)) >= 1.9


def test_flat_scalar_curvature_vanishes():
    for N in LEVELS:
        assert np.max(np.abs(geo.ambient_scalar_curvature(flat(N)))) < 1e-9


def test_scalar_curvature_parts_product():
    # product: R_g = R_h0 - 2 Lap u / u
    g = geo.build_grid(0.3, 1.4, 33, 0, 1, 17)
    u = 1 + 0.1 * g.R**2
    W = geo.WarpedMetric(g, u, 1.0, np.sin(g.R) ** 2)
    R, parts = geo.ambient_scalar_curvature(W, parts=True)
    assert np.max(np.abs(parts["tr_hdot"])) < 1e-12
    np.testing.assert_allclose(R, parts["R_h"] - 2 * parts["lap_u"] / W.u, atol=1e-13)


def test_boundary_mean_curvature_cases():
    N = 65
    g = geo.build_grid(0.5, 1.0, N, 0, 1, 17)
    # u = 1: H_g is the geodesic curvature of the unit circle in the flat plane
    W = geo.WarpedMetric(g, 1.0, 1.0, g.R**2)
    H = geo.boundary_mean_curvature(W, "r_max")
    np.testing.assert_array_equal(H, geo.slice_boundary_curvature(W, "r_max"))
    assert np.max(np.abs(H - 1)) < 1e-6
    # H_h = 1 with d_nu log u = +1 or -1
    for sgn, expect in ((1.0, 2.0), (-1.0, 0.0)):
        W = geo.WarpedMetric(g, np.exp(sgn * (g.R - 1)), 1.0, g.R**2)
        assert np.max(np.abs(geo.boundary_mean_curvature(W, "r_max") - expect)) < 1e-6


def test_equator_is_minimal():
    g = geo.build_grid(0.05, math.pi / 2, 129, 0, 1, 17)
    W = geo.WarpedMetric(g, 1.0, 1.0, np.sin(g.R) ** 2)
    assert np.max(np.abs(geo.boundary_mean_curvature(W, "r_max"))) < 1e-9


def test_cross_section_ops():
    e_lap, e_R = [], []
    for N in LEVELS:
        g = geo.build_grid(1, 2, N, 0, 1, 9)
        h = geo.CrossSectionMetric(g.r_nodes, np.ones(N), g.r_nodes**2)
        Rh, lap, tr, nm = geo.cross_section_ops(h, g.r_nodes**2, geo.RadialSymTensor(h.A, h.B))
        assert np.max(np.abs(Rh)) < 1e-9
        np.testing.assert_allclose(tr, 2.0)
        np.testing.assert_allclose(nm, math.sqrt(2))
        e_lap.append(np.max(np.abs(lap - 4)))
        r = np.linspace(0.3, 1.4, N)
        h = geo.CrossSectionMetric(r, np.ones(N), np.sin(r) ** 2)
        e_R.append(np.max(np.abs(geo.cross_section_ops(h, np.ones(N), geo.RadialSymTensor(h.A, h.B))[0] - 2)))
    assert max(e_lap) < 1e-9 or min(orders(e_lap)) > 1.9
    assert min(orders(e_R)) > 1.9


def test_trace_norm_inequality_random():
    rng = np.random.default_rng(1)
    r = np.linspace(1, 2, 50)
    h = geo.CrossSectionMetric(r, rng.uniform(0.5, 2, 50), rng.uniform(0.5, 2, 50))
    for _ in range(20):
        p = geo.RadialSymTensor(rng.normal(size=50), rng.normal(size=50))
        assert np.all(np.abs(geo.trace(h, p)) <= math.sqrt(2) * geo.norm(h, p) + 1e-14)


def test_slice_mean_curvature_is_trace_of_II():
    W = round_s3(33)
    for j in range(0, 33, 8):
        II, H = geo.slice_geometry(W, j)
        assert np.max(np.abs(H - geo.trace(W.slice(j), II))) < 1e-12


def test_laplacian_examples():
    W = flat(17)
    assert np.max(np.abs(geo.ambient_laplacian(W, np.ones(W.grid.shape)))) == 0.0
    errs = [np.max(np.abs(geo.ambient_laplacian(flat(N), flat(N).grid.T ** 2) - 2)) for N in LEVELS]
    assert max(errs) < 1e-9


def test_assembled_laplacian_self_adjoint():
    W = round_s3(17)
    K, m = geo.assemble_laplacian(W)
    assert abs(K - K.T).max() < 1e-12
    rng = np.random.default_rng(0)
    w, v = rng.normal(size=W.grid.shape), rng.normal(size=W.grid.shape)
    Lw, Lv = geo.ambient_laplacian(W, w, "fv"), geo.ambient_laplacian(W, v, "fv")
    assert abs(geo.volume_inner(W, Lw, v) - geo.volume_inner(W, w, Lv)) < 1e-12 * max(1.0, abs(geo.volume_inner(W, Lw, v)))


def test_conformal_constant():
    assert geo.c_of_n(2) == 8.0
    assert geo.c_of_n(3) == 6.0
    with pytest.raises(ParameterError):
        geo.c_of_n(1)
