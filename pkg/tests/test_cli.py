import json

import numpy as np
import pytest

from kext.cli import build_trace, build_variety, main, parse_point
from kext.errors import ConfigError
from kext.pipelines import ExampleVerdict, RunConfig, emit_report, parse_config, report_csv, run_example


def test_parse_config():
    cfg = parse_config("""
        example = dm3   # comment
        seed = 3
        q = 10
        alphas = [0, 1, 2]
        label = hello world
    """)
    assert cfg.example == "dm3" and cfg.seed == 3
    assert cfg.params == {"q": 10, "alphas": [0, 1, 2], "label": "hello world"}
    with pytest.raises(ConfigError):
        parse_config("no equals sign")


def test_unknown_example():
    with pytest.raises(ConfigError):
        run_example(RunConfig("nope"))


def test_empty_report_is_header_only(tmp_path):
    csv_path, json_path = emit_report([], tmp_path / "r")
    assert csv_path.read_text() == "example,seed,row,key,value\n"
    assert json.loads(json_path.read_text())["results"] == []


def test_report_round_trip(tmp_path):
    v = ExampleVerdict("x", 1.5, 1.0, 0.1, False, 7, {"a": np.float64(2.0), "z": 1 + 2j},
                       [{"layer": 0, "value": 0.25}])
    csv_path, json_path = emit_report([v], tmp_path / "sub" / "r", RunConfig("x", 7))
    data = json.loads(json_path.read_text())
    assert data["results"][0]["details"] == {"a": 2.0, "z": [1.0, 2.0]}
    assert data["config"]["seed"] == 7
    assert report_csv([v]).splitlines()[1:] == ["x,7,0,layer,0", "x,7,0,value,0.25"]


def test_spec_parsers():
    np.testing.assert_allclose(parse_point("1,-2j,0.5+1j"), [1, -2j, 0.5 + 1j])
    assert build_variety("cusp:3").total_degree == 3
    assert build_variety("planes:0,1").total_degree == 2
    assert build_trace("const:2")(np.zeros(2)) == 2
    with pytest.raises(ConfigError):
        build_variety("bogus:1")


def test_geometry_tau(capsys):
    assert main(["geometry", "tau", "--z", "0.04,0", "--v", "0,1", "--eps", "0.0784"]) == 0
    out = json.loads(capsys.readouterr().out)
    # the line is tangent to the level set through z, so tau = sqrt(eps)
    assert out["tau"] == pytest.approx(0.28, rel=1e-9)


def test_cover_generate_and_verify(tmp_path, capsys):
    atlas = tmp_path / "atlas.json"
    assert main(["cover", "generate", "--kappa", "0.1", "--c", "1", "--layers", "2", "--region", "0,0",
                 "--window", "0.05", "--anchor", "0,0", "--atlas", str(atlas)]) == 0
    capsys.readouterr()
    assert main(["cover", "verify", "--atlas", str(atlas), "--probes", "500"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["separation_ok"] and out["coverage_fraction"] >= 0.99


def test_example_dm3_deterministic(tmp_path, capsys):
    args = ["example", "dm3", "--set", "q=12", "--out"]
    assert main(args + [str(tmp_path / "a")]) == 0
    assert main(args + [str(tmp_path / "b")]) == 0
    capsys.readouterr()
    for ext in (".csv", ".json"):
        assert (tmp_path / ("a" + ext)).read_bytes() == (tmp_path / ("b" + ext)).read_bytes()


def test_error_exit_code(capsys):
    assert main(["variety", "roots", "--variety", "bogus:1", "--z", "0,0", "--v", "0,1"]) == 2
    assert "error" in capsys.readouterr().err
