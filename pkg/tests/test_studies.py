import json

import numpy as np
import pytest

from vemfacet.calculus import PolyField
from vemfacet.mesh import FamilySpec
from vemfacet.oracle import gram_matrix
from vemfacet.studies import (
    StudyConfig,
    StudyError,
    builtin_field,
    fit_slope,
    in_space,
    resolve_name,
    run_study,
)
from vemfacet.studies.report import dumps, read_table, write_plot, write_table
from vemfacet.studies.runner import element_rng, unit_directions
from vemfacet.vem import DofVector, constant_dofs, extract_dofs, stabilization_matrix


def _cfg(kind, spaces, family, hs, **kw):
    jitter = kw.pop("jitter", 0.0)
    return StudyConfig(kind, spaces, FamilySpec(family, hs, jitter=jitter, seed=kw.pop("mesh_seed", 0)), **kw)


# --- configuration ---------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(StudyError):
        _cfg("convergence", ("edge2d",), "squares", (1 / 4, 1 / 2))
    with pytest.raises(StudyError):
        _cfg("convergence", ("edge2d",), "squares", (1 / 4, 1 / 4))
    with pytest.raises(StudyError):
        _cfg("stability", ("edge2d",), "squares", (1 / 4,), level=0)
    with pytest.raises(StudyError):
        _cfg("stability", ("edge3d",), "squares", (1 / 4,))
    with pytest.raises(StudyError):
        _cfg("convergence", ("edge2d",), "squares", (1 / 4,), fields=("vortex",))
    with pytest.raises(StudyError):
        _cfg("sweep", ("edge2d",), "squares", (1 / 4,))
    # exactness does not use the oracle, so level 0 is fine there
    assert _cfg("exactness", ("edge2d",), "squares", (1 / 4,), level=0).oracle_level == 0


def test_config_echo_is_complete():
    cfg = _cfg("apriori", ("face3d", "edge3d"), "distorted-hexes", (1 / 2, 1 / 3), jitter=0.2, mesh_seed=4, seed=9)
    echo = cfg.echo()
    assert echo["family"] == {"name": "distorted-hexes", "hs": [0.5, 1 / 3], "jitter": 0.2, "seed": 4}
    assert echo["level"] == 2 and echo["seed"] == 9 and echo["spaces"] == ["face3d", "edge3d"]


def test_field_names():
    assert resolve_name("poly", "edge3d") == "rotation"
    assert resolve_name("poly", "face2d") == "position"
    assert in_space("constant", "edge2d") and in_space("perp", "edge2d") and not in_space("trig", "edge2d")
    assert builtin_field("trig", "face3d").dim == 3


# --- slope fitting ---------------------------------------------------------------------


def test_fit_slope_exact_power_law():
    hs = np.array([1 / 4, 1 / 8, 1 / 16, 1 / 32])
    s = fit_slope("q", hs, 3 * hs**1.5, [None] * 4)
    assert s["slope"] == pytest.approx(1.5) and s["residual"] < 1e-12 and not s["inconclusive"]


def test_fit_slope_gate_and_inconclusive():
    hs = np.array([1 / 4, 1 / 8, 1 / 16, 1 / 32])
    vals = hs.copy()
    accs = [1e-4, 1e-4, 1e-2, 1e-2]  # the last two exceed 10% of the value
    s = fit_slope("q", hs, vals, accs)
    assert s["points"] == 2 and s["inconclusive"] and s["slope"] is None
    assert s["excluded_h"] == [1 / 16, 1 / 32]
    s = fit_slope("q", hs, [1e-15] * 4, [None] * 4)
    assert s["points"] == 0 and s["inconclusive"]


def test_rng_is_per_element():
    a = unit_directions(element_rng(3, 11), 6, 4)
    b = unit_directions(element_rng(3, 11), 6, 4)
    c = unit_directions(element_rng(3, 12), 6, 4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)


# --- closed-form quantities the studies measure --------------------------------------------


def test_stability_ratio_for_constant_edge2d(square):
    d = constant_dofs("edge2d", [1.0, 0.0], square).values
    S = stabilization_matrix("edge2d", square)
    assert d @ S @ d / 1.0 == pytest.approx(2 * np.sqrt(2))


def test_apriori_constant_of_position_field(cube):
    d = extract_dofs("face3d", PolyField.identity(cube.barycenter), cube).values
    G = gram_matrix("face3d", cube, 2).matrix
    S = stabilization_matrix("face3d", cube)
    assert d @ G @ d == pytest.approx(0.25, rel=1e-12)
    assert np.sqrt(d @ G @ d / (d @ S @ d)) == pytest.approx(0.5 / (3**0.25 * np.sqrt(1.5)), rel=1e-12)
    assert np.sqrt(d @ G @ d / (d @ S @ d)) == pytest.approx(0.31, abs=0.005)


def test_inverse_ratio_of_position_field(square):
    d = extract_dofs("face2d", PolyField.identity(square.barycenter), square).values
    G = gram_matrix("face2d", square, 3).matrix
    assert square.diameter * 2 / np.sqrt(d @ G @ d) == pytest.approx(4 * np.sqrt(3), rel=1e-10)


# --- study runs ------------------------------------------------------------------------------


def test_exactness_2d_and_3d():
    for spaces, family, hs in ((("edge2d", "face2d"), "hexagons", (1 / 4, 1 / 8)), (("edge3d", "face3d"), "cubes", (1 / 2,))):
        rep = run_study(_cfg("exactness", spaces, family, hs, fields=("trig", "poly", "constant"), samples=50))
        assert rep.passed, rep.verdicts
        assert {"div_curl", "rotation_duality"} & set(rep.quantities())


def test_convergence_constant_field_exact():
    rep = run_study(_cfg("convergence", ("edge2d", "face2d"), "hexagons", (1 / 4, 1 / 8), fields=("constant",)))
    # constants are in every space, so only roundoff remains
    assert max(r["value"] for r in rep.rows) <= 1e-10
    assert rep.passed


def test_convergence_reports_accuracy_and_gates():
    rep = run_study(_cfg("convergence", ("face2d",), "distorted-quads", (1 / 4, 1 / 8, 1 / 16), jitter=0.2, mesh_seed=1))
    for r in rep.rows:
        if r["quantity"].endswith("l2_error"):
            assert r["accuracy_estimate"] is not None and r["accuracy_estimate"] <= 0.1 * r["value"]
    s = rep.slope("face2d/trig/l2_error")
    assert s["points"] == 3 and 0.85 <= s["slope"] <= 1.15


def test_stability_and_inverse_probe_small():
    rep = run_study(_cfg("stability", ("edge2d",), "squares", (1 / 2, 1 / 4, 1 / 8), samples=8))
    assert rep.passed
    v = rep.verdict("edge2d/stab_lambda_min")
    assert v["variation"] <= 1.01
    rep = run_study(_cfg("inverse-probe", ("face2d",), "squares", (1 / 2, 1 / 4), samples=8))
    _, vals, _ = rep.series("face2d/inverse_div_ratio")
    assert np.allclose(vals, 4 * np.sqrt(3))


def test_divergence_free_dofs_give_zero_ratio(hexagon):
    from vemfacet.oracle import workspace

    ws = workspace("face2d", hexagon, 3)
    d = np.zeros(6)
    d[0] = 1.0 / hexagon.edge_lengths[0]
    d[3] = -1.0 / hexagon.edge_lengths[3]  # zero net flux
    assert abs(d @ ws.deriv_gram @ d) <= 1e-13 * (d @ d)


def test_reports_are_deterministic(tmp_path):
    kw = dict(fields=("trig",), samples=8)
    a = run_study(_cfg("apriori", ("face2d", "edge2d"), "distorted-quads", (1 / 2, 1 / 4), jitter=0.2, threads=1, **kw))
    b = run_study(_cfg("apriori", ("face2d", "edge2d"), "distorted-quads", (1 / 2, 1 / 4), jitter=0.2, threads=4, **kw))
    assert dumps(a.to_dict()) == dumps(b.to_dict())
    write_plot(a, tmp_path / "a.svg")
    write_plot(b, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_report_writers(tmp_path):
    rep = run_study(_cfg("convergence", ("edge2d",), "squares", (1 / 2, 1 / 4, 1 / 8)))
    p = write_table(rep, tmp_path / "t.csv")
    assert p.read_text().splitlines()[0] == "h,quantity,value,accuracy_estimate"
    rows = read_table(p)
    assert rows == rep.rows  # full round-trip precision
    data = json.loads(dumps(rep.to_dict()))
    assert data["config"]["kind"] == "convergence" and data["slopes"]
    assert write_plot(rep, tmp_path / "p.svg").read_text().startswith("<?xml")


def test_user_dofs_roundtrip_json(square):
    d = DofVector("edge2d", [0.5, 0.5, 0.5, 0.5], square)
    js = d.to_json()
    assert [e["value"] for e in js["dofs"]] == [0.5] * 4
