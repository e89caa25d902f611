import json

import numpy as np
import pytest

from conftest import UNIT_CUBE, UNIT_SQUARE
from vemfacet import cli
from vemfacet.oracle import OracleError

CONFIG = """\
[mesh]
family = squares
hs = 1/2, 1/4, 1/8

[field]
names = trig

[study conv]
kind = convergence
spaces = edge2d, face2d

[study stab]
kind = stability
spaces = face2d
samples = 4
"""


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for k in ("OUT", "THREADS", "SEED", "ORACLE_LEVEL"):
        monkeypatch.delenv(f"VEMFACET_{k}", raising=False)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_config_sections():
    studies = cli.parse_config(CONFIG)
    assert list(studies) == ["conv", "stab"]
    assert studies["conv"].family.hs == (0.5, 0.25, 0.125)
    assert studies["conv"].fields == ("trig",)
    assert studies["stab"].samples == 4 and studies["stab"].spaces[0].value == "face2d"


@pytest.mark.parametrize(
    "text",
    [
        "[study]\nkind = convergence\nspaces = edge2d\n",  # no family
        CONFIG.replace("samples = 4", "colour = red"),
        CONFIG.replace("hs = 1/2", "hs = 1/0"),
        CONFIG.replace("family = squares", "family = cubes"),
        "no sections here",
    ],
)
def test_parse_config_rejects(text):
    with pytest.raises((cli.ConfigError, ValueError)):
        cli.parse_config(text)


def test_study_writes_artifacts_and_replays(tmp_path, capsys):
    cfg = _write(tmp_path, "s.ini", CONFIG)
    out = tmp_path / "o1"
    assert cli.main(["study", str(cfg), "--out", str(out), "--threads", "2"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["artifacts"][0] == "report.json" and man["artifacts"][-1] == "manifest.json"
    for a in man["artifacts"][:-1]:
        assert (out / a).exists()
    rep = json.loads((out / "report.json").read_text())
    assert set(rep["studies"]) == {"conv", "stab"}
    assert not list(tmp_path.glob(".vemfacet-*"))
    # replay from the report, with a different thread count
    out2 = tmp_path / "o2"
    assert cli.main(["study", str(out / "report.json"), "--out", str(out2), "--threads", "1", "--no-plots"]) == 0
    assert (out / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out / "tables" / "conv.csv").read_bytes() == (out2 / "tables" / "conv.csv").read_bytes()
    # or one study's own report
    single = _write(tmp_path, "conv.json", json.dumps(rep["studies"]["conv"]))
    out3 = tmp_path / "o3"
    assert cli.main(["study", str(single), "--out", str(out3), "--threads", "1", "--no-plots"]) == 0
    assert json.loads((out3 / "report.json").read_text())["studies"]["conv"] == rep["studies"]["conv"]


def test_env_overrides(tmp_path, monkeypatch):
    cfg = _write(tmp_path, "s.ini", CONFIG)
    monkeypatch.setenv("VEMFACET_OUT", str(tmp_path / "env"))
    monkeypatch.setenv("VEMFACET_ORACLE_LEVEL", "2")
    monkeypatch.setenv("VEMFACET_SEED", "5")
    assert cli.main(["study", str(cfg), "--no-plots", "--threads", "1"]) == 0
    rep = json.loads((tmp_path / "env" / "report.json").read_text())
    assert rep["studies"]["stab"]["config"]["level"] == 2
    assert rep["studies"]["stab"]["config"]["seed"] == 5
    monkeypatch.setenv("VEMFACET_THREADS", "many")
    assert cli.main(["study", str(cfg), "--no-plots"]) == 2


def test_invalid_inputs_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, "s.ini", CONFIG)
    assert cli.main(["study", str(cfg), "--out", str(tmp_path / "o"), "--oracle-level", "0"]) == 2
    assert cli.main(["study", str(cfg), "--out", str(tmp_path / "o"), "--threads", "0"]) == 2
    assert cli.main(["study", str(tmp_path / "missing.ini")]) == 2
    err = capsys.readouterr().err
    assert err.count("vemfacet: error[invalid]") == 3
    assert not (tmp_path / "o").exists() and not list(tmp_path.glob(".vemfacet-*"))


def test_numerical_failure_exit_3(tmp_path, monkeypatch, capsys):
    cfg = _write(tmp_path, "s.ini", CONFIG)

    def boom(config):
        raise OracleError(3, "singular local system")

    monkeypatch.setattr(cli, "run_study", boom)
    assert cli.main(["study", str(cfg), "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "error[numerical]" in err and "element 3" in err
    assert not (tmp_path / "o").exists()


def test_mesh_gen_and_check(tmp_path, capsys):
    p = tmp_path / "q.msh"
    assert cli.main(["mesh", "gen", "distorted-quads", "--h", "1/4", "--jitter", "0.2", "--seed", "1", "-o", str(p)]) == 0
    capsys.readouterr()
    assert cli.main(["mesh", "check", str(p)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["gamma_min"] >= 0.3


def test_mesh_check_names_reversed_face(tmp_path, capsys):
    lines = UNIT_CUBE.splitlines()
    i = lines.index("faces 6") + 1
    n, *loop = lines[i].split()
    lines[i] = " ".join([n] + loop[::-1])
    p = _write(tmp_path, "bad.msh", "\n".join(lines) + "\n")
    assert cli.main(["mesh", "check", str(p)]) == 2
    assert "face 0" in capsys.readouterr().err


def test_reconstruct_dump(tmp_path, capsys):
    m = _write(tmp_path, "sq.msh", UNIT_SQUARE)
    d = _write(tmp_path, "d.json", json.dumps({"dofs": [0.5, 0.5, 0.5, 0.5]}))
    out = tmp_path / "r.json"
    assert cli.main(["reconstruct", str(m), "0", "edge2d", str(d), "-o", str(out)]) == 0
    dump = json.loads(out.read_text())
    assert dump["level"] == 3 and np.allclose(dump["redofs"], 0.5)
    assert np.allclose(dump["pi0"], 0.0, atol=1e-15) and np.allclose(dump["deriv"], 2.0)
    pts = np.array(dump["points"])
    # the field is x^perp about the barycenter on every simplex
    for s, a, M in zip(dump["simplices"], dump["a"], dump["M"]):
        c = pts[s].mean(axis=0)  # a is the value at the simplex centroid
        assert np.allclose(a, [-(c[1] - 0.5), c[0] - 0.5], atol=1e-12)
        assert np.allclose(M, [[0, -1], [1, 0]], atol=1e-10)
    bad = _write(tmp_path, "b.json", "[1, 2]")
    assert cli.main(["reconstruct", str(m), "0", "edge2d", str(bad)]) == 2
    assert cli.main(["reconstruct", str(m), "4", "edge2d", str(d)]) == 2
