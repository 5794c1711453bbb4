import json
import math

import numpy as np
import pytest

from cornerglue import geometry as geo
from cornerglue.errors import FormatError, ParameterError
from cornerglue.harness import cli
from cornerglue.harness.io import read_collar, read_f, read_k, read_metric, write_collar, write_metric
from cornerglue.harness.refine import rayleigh_trials, refinement_study
from cornerglue.harness.scenarios import list_scenarios, load_scenario, run_scenario
from cornerglue.normalform import ball_collar


def round_band(N=17):
    g = geo.build_grid(0.3, 1.4, N, 0.5, 1.5, N).relabel(r_min="Z")
    s2 = np.sin(g.T) ** 2
    return geo.WarpedMetric(g, 1.0, s2, s2 * np.sin(g.R) ** 2)


# ------------------------------------------------------------ file formats


def test_metric_round_trip(tmp_path):
    W = round_band()
    p = write_metric(W, tmp_path / "w.metric")
    V = read_metric(p)
    for k in ("u", "A", "B"):
        np.testing.assert_array_equal(getattr(V, k), getattr(W, k))
    assert V.grid.boundary_labels == W.grid.boundary_labels
    np.testing.assert_array_equal(V.grid.t_nodes, W.grid.t_nodes)


def test_metric_interval_round_trip(tmp_path):
    g = geo.build_grid(0.0, 1.0, 9, 0.0, 1.0, 9, geo.INTERVAL)
    W = geo.WarpedMetric(g, 1.0 + g.R, 1.0, None)
    V = read_metric(write_metric(W, tmp_path / "i.metric"))
    np.testing.assert_array_equal(V.u, W.u)
    assert V.B is None


def test_truncated_row_reports_line(tmp_path):
    p = write_metric(round_band(), tmp_path / "w.metric")
    lines = p.read_text().splitlines()
    lines[20] = " ".join(lines[20].split()[:-1])
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as exc:
        read_metric(p)
    assert exc.value.details.get("line") == 21 or ":21" in str(exc.value)


def test_backend_mismatch(tmp_path):
    p = write_metric(round_band(), tmp_path / "w.metric")
    p.write_text(p.read_text().replace("backend annulus", "backend interval", 1))
    with pytest.raises(FormatError):
        read_metric(p)


def test_collar_round_trip(tmp_path):
    g, f = ball_collar(9, 9)
    p = tmp_path / "b.collar"
    write_collar(g, p, f)
    g2, f2 = read_collar(p)
    np.testing.assert_array_equal(g2.E, g.E)
    np.testing.assert_array_equal(g2.F, g.F)
    np.testing.assert_array_equal(f2, f)
    assert g2.y_sides == g.y_sides


def test_read_f_and_k(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text("0.2\n")
    np.testing.assert_array_equal(read_f(p, 5), np.full(5, 0.2))
    p.write_text("0.1\n0.2\n")
    with pytest.raises(FormatError):
        read_f(p, 5)
    W = round_band()
    h0 = W.slice(0)
    p.write_text("0.5\n")
    k = read_k(p, h0)
    np.testing.assert_allclose(k.p_rr, 0.5 * h0.A)


# ------------------------------------------------------------ scenarios


def test_scenario_library():
    names = list_scenarios()
    assert {"double-round-band", "mismatched-meanconvex", "corollary-6.3", "jump-violation"} <= set(names)
    with pytest.raises(ParameterError):
        load_scenario("no-such-scene")


def test_jump_violation_expected_failure(tmp_path):
    rep = run_scenario("jump-violation", out_dir=tmp_path)
    assert rep.passed
    assert rep.get("expected_failure").passed
    data = json.loads((tmp_path / "jump-violation.report.json").read_text())
    assert data["data"]["error"]["stage"] == "prepare_side"


def test_concordance_product_ends_constant():
    rep = run_scenario("corollary-6.3")
    for end in ("end0.", "end1."):
        v = rep.get(f"{end}product_end_constant")
        assert v.passed and v.value <= 1e-9
        assert rep.get(f"{end}min_R").passed
        assert rep.get(f"{end}locality").value == 0.0


def test_scenario_from_json_path(tmp_path):
    spec = load_scenario("jump-violation")
    spec["name"] = "custom"
    p = tmp_path / "custom.json"
    p.write_text(json.dumps(spec))
    assert run_scenario(load_scenario(str(p))).passed


# ------------------------------------------------------------ refinement


@pytest.mark.parametrize("scene", ["round-s3", "hyperbolic", "flat"])
def test_curvature_refinement(scene):
    rep = refinement_study("curvature", scene)
    assert rep.passed


def test_robin_refinement():
    rep = refinement_study("robin", levels=3, N0=33)
    assert rep.passed


def test_rayleigh_trials():
    rep = rayleigh_trials(seed=3)
    assert rep.passed and rep.data["trials"] == 50


def test_refinement_rejects_bad_input():
    with pytest.raises(ParameterError):
        refinement_study("curvature", levels=2)
    with pytest.raises(ParameterError):
        refinement_study("nope")


# ------------------------------------------------------------ CLI


def test_cli_profile_and_determinism(tmp_path, capsys):
    out = tmp_path / "a" / "bump.csv"
    assert cli.main(["profile", "--kind", "bump", "--sigma", "0.2", "--samples", "2000", "--out", str(out)]) == 0
    first = out.read_bytes(), out.with_suffix(".json").read_bytes()
    assert cli.main(["profile", "--kind", "bump", "--sigma", "0.2", "--samples", "2000", "--out", str(out)]) == 0
    assert (out.read_bytes(), out.with_suffix(".json").read_bytes()) == first
    assert "PASS" in capsys.readouterr().out


def test_cli_curvature_exit_codes(tmp_path):
    p = write_metric(round_band(33), tmp_path / "s3.metric")
    assert cli.main(["--out", str(tmp_path), "--tol", "0.05", "curvature", "--metric", str(p), "--expect-R", "6"]) == 0
    assert cli.main(["--out", str(tmp_path), "--tol", "1e-9", "curvature", "--metric", str(p), "--expect-R", "6"]) == 1
    rep = json.loads((tmp_path / "s3.curvature.json").read_text())
    assert not rep["passed"]


def test_cli_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.metric"
    bad.write_text("backend annulus\n")
    assert cli.main(["--out", str(tmp_path), "curvature", "--metric", str(bad)]) == 2
    assert (tmp_path / "curvature.error.json").exists()
    assert "ERROR" in capsys.readouterr().err


def test_cli_normalform_ball(tmp_path):
    g, f = ball_collar(33, 33)
    p = tmp_path / "ball.collar"
    write_collar(g, p, f)
    assert cli.main(["--out", str(tmp_path), "normalform", "--collar", str(p)]) == 0
    rep = json.loads((tmp_path / "ball.normalform.json").read_text())
    assert abs(rep["data"]["dnu_log_u"]["r_max"] - 1) < 0.03


def test_cli_scenario_and_refine(tmp_path):
    assert cli.main(["--out", str(tmp_path), "scenario", "run", "jump-violation"]) == 0
    assert cli.main(["--out", str(tmp_path), "refine", "--op", "curvature", "--scene", "hyperbolic"]) == 0
    rep = json.loads((tmp_path / "refine_curvature.json").read_text())
    assert min(rep["data"]["orders"]) >= 1.9
    assert not math.isnan(rep["data"]["levels"][0]["error"])
