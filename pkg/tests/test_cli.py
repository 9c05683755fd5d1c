import json
from pathlib import Path

import jsonschema
import pytest

from foliation_lab.cli import clean, dumps, main

SCHEMAS = Path(__file__).resolve().parents[1] / "docs" / "schemas"
BOX2 = ["--box", "-2,2,-2,2"]


def run(tmp_path, *args):
    code = main([*args, "--out", str(tmp_path), "--quiet"])
    return code


def load(tmp_path, name):
    doc = json.loads((tmp_path / f"{name}.json").read_text())
    schema = json.loads((SCHEMAS / f"{name}.schema.json").read_text())
    jsonschema.validate(doc, schema)
    return doc


def no_temp_files(tmp_path):
    return not [p for p in tmp_path.iterdir() if p.name.endswith(".tmp")]


def test_verify_identities(tmp_path):
    assert run(tmp_path, "verify-identities", "--map", "gallery:spiral3", "--samples", "100") == 0
    doc = load(tmp_path, "identities")
    assert doc["verdict"] == "PASS"
    assert no_temp_files(tmp_path)


def test_trace_writes_curve_and_svg(tmp_path):
    assert run(tmp_path, "trace", "--map", "gallery:spiral2", "--i", "1", "--x0", "0,pi/2") == 0
    doc = load(tmp_path, "trace")
    assert (tmp_path / "trace.csv").is_file() and (tmp_path / "trace.svg").is_file()
    assert doc["monotonicity"]["verdict"] == "PASS"


def test_fibers_modes(tmp_path):
    assert run(tmp_path, "fibers", "--f", "x1*(1 - x1*x2^2)", "--c", "0", *BOX2) == 0
    assert load(tmp_path, "fibers")["count"] == 3
    assert run(tmp_path, "fibers", "--map", "gallery:spiral3", "--i", "3", "--c", "1,0") == 0
    assert load(tmp_path, "fibers")["count"] == 3
    # a disconnected fiber is a negative verdict under --strict
    assert run(tmp_path, "fibers", "--f", "x1*(1 - x1*x2^2)", "--c", "0", *BOX2, "--strict") == 1


def test_solvable(tmp_path):
    assert run(tmp_path, "solvable", "--map", "gallery:spiral2", "--i", "1") == 0
    doc = load(tmp_path, "solvable")
    assert doc["verdict"] == "NOT_SOLVABLE"
    assert (tmp_path / doc["witness"]["curve_csv_path"]).is_file()
    assert run(tmp_path, "solvable", "--map", "gallery:spiral2", "--i", "1", "--strict") == 1
    assert run(tmp_path, "solvable", "--map", "gallery:identity2", "--i", "1", "--budget", "16") == 0
    assert load(tmp_path, "solvable")["verdict"] == "NO_OBSTRUCTION_FOUND"


def test_hrc(tmp_path):
    assert run(tmp_path, "hrc", "--f", "x1*(1 - x1*x2^2)", *BOX2) == 0
    doc = load(tmp_path, "hrc")
    assert doc["status"] == "FOUND" and doc["validity"]["verdict"] == "PASS"
    assert (tmp_path / "hrc.svg").is_file()
    assert run(tmp_path, "hrc", "--f", "x1", *BOX2, "--budget", "8") == 0
    assert load(tmp_path, "hrc")["status"] == "NONE"
    assert run(tmp_path, "hrc", "--f", "x1^2 + x2^2", *BOX2) == 2


def test_region(tmp_path):
    assert run(tmp_path, "region", "--region", "braun_strip", "--k", "16", "--map", "gallery:braun") == 0
    doc = load(tmp_path, "region")
    assert doc["obstruction"]["verdict"] == "DIVERGENT_TREND"
    assert doc["flux"]["verdict"] == "PASS"
    assert all(c["pass"] for c in doc["closure"])
    assert (tmp_path / "region.svg").is_file()
    assert run(tmp_path, "region", "--region", "braun_strip", "--h", "x2", "--k", "4") == 2
    bad = Path(__file__).parent / "data" / "bad_square.json"
    assert run(tmp_path, "region", "--region", str(bad), "--k", "4") == 2


def test_inject_notes(tmp_path):
    assert run(tmp_path, "inject", "--map", "gallery:spiral2", "--samples", "5000", "--c-samples", "20") == 0
    doc = load(tmp_path, "inject")
    assert doc["collision"]["verdict"] == "COLLISION_FOUND"
    assert doc["consistent"]
    for ev in doc["evidence"]:
        assert ev["verdict"] == "HYPOTHESIS_FAILS"
        assert "says nothing about whether the map is injective" in ev["note"]
    assert run(tmp_path, "inject", "--map", "gallery:identity2", "--mode", "evidence", "--c-samples", "10") == 0
    assert all(e["verdict"] == "EVIDENCE_PASS" for e in load(tmp_path, "inject")["evidence"])


def test_gallery_and_report(tmp_path):
    assert run(tmp_path, "gallery", "--list") == 0
    assert "braun" in [e["name"] for e in load(tmp_path, "gallery")["entries"]]
    assert run(tmp_path, "gallery", "spiral2", "--check") == 0
    assert all(r["observed"]["pass"] for r in load(tmp_path, "gallery")["results"])
    assert run(tmp_path, "report", "--map", "gallery:identity2") == 0
    assert load(tmp_path, "report")["verdict"] == "PASS"


def test_map_file_and_inline_maps(tmp_path):
    m = tmp_path / "toy.map"
    m.write_text("dim = 2\nf1 = x1 + x2^3  # a shear\nf2 = x2\nbox = -1,1,-1,1\n")
    assert run(tmp_path, "verify-identities", "--map", str(m), "--samples", "50") == 0
    assert load(tmp_path, "identities")["map"] == "toy"
    assert run(tmp_path, "verify-identities", "--map", "x1 + x2; x2", "--samples", "50") == 0
    assert run(tmp_path, "verify-identities", "--map", '["x1", "x2*exp(x1)"]', "--samples", "50") == 0


@pytest.mark.parametrize("args", [
    ["fibers", "--map", "gallery:nope", "--i", "1", "--c", "0"],
    ["trace", "--map", "gallery:spiral2", "--i", "3", "--x0", "0,0"],
    ["trace", "--map", "gallery:spiral2", "--i", "1", "--x0", "0"],
    ["trace", "--map", "x1 +; x2", "--i", "1", "--x0", "0,0"],
    ["verify-identities", "--map", "gallery:spiral2", "--box", "0,1"],
    ["region", "--region", "no_such_region"],
    ["gallery", "unknown_entry"],
    ["no-such-command"],
    ["trace", "--bogus-flag"],
])
def test_input_errors_exit_2(tmp_path, args):
    assert run(tmp_path, *args) == 2


def test_bad_thread_setting(tmp_path, monkeypatch):
    monkeypatch.setenv("FOLIATION_LAB_THREADS", "zero")
    assert run(tmp_path, "gallery", "--list") == 2


def test_json_cleaning():
    import numpy as np
    out = json.loads(dumps({"a": np.float64(1.5), "b": np.arange(3), "c": float("inf"), 2: np.bool_(True)}))
    assert out == {"a": 1.5, "b": [0, 1, 2], "c": "inf", "2": True}
    assert clean((np.int64(3),)) == [3]


def test_stdout_echo(tmp_path, capsys):
    assert main(["gallery", "--list", "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out) == json.loads((tmp_path / "gallery.json").read_text())
