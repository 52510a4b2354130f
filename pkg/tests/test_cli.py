import json
import subprocess
import sys

import pytest

from resnetlab.cli import main, parse_depths

MATRIX_CFG = {"spec": {"form": "matrix", "n": 120, "q": 1, "d_res": 6}, "decay": 2, "seed": 0}
CONV_CFG = {"spec": {"form": "conv", "n": 3, "q": 2, "channels": 2, "c_in": 1, "f": 1, "d": 4, "d_out": 3},
            "decay": 2, "seed": 1}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def weights(tmp_path):
    out = tmp_path / "w.json"
    assert main(["gen", write(tmp_path / "cfg.json", MATRIX_CFG), str(out)]) == 0
    return out


def test_gen_is_deterministic_and_has_manifest(tmp_path, weights):
    again = tmp_path / "again.json"
    assert main(["gen", str(tmp_path / "cfg.json"), str(again)]) == 0
    assert weights.read_bytes() == again.read_bytes()
    manifest = json.loads((tmp_path / "w.json.manifest.json").read_text())
    assert manifest["command"] == "gen" and manifest["seed"] == 0
    assert manifest["outputs"] == [str(weights.resolve())]
    assert manifest["config"].endswith("cfg.json")


def test_gen_rejects_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["gen", str(bad), str(tmp_path / "x.json")]) == 2
    assert "invalid config" in capsys.readouterr().err
    assert main(["gen", write(tmp_path / "neg.json", {**MATRIX_CFG, "decay": -1}), str(tmp_path / "x.json")]) == 2
    assert main(["gen", str(tmp_path / "missing.json"), str(tmp_path / "x.json")]) == 2
    assert not (tmp_path / "x.json").exists()


def test_diagnose_outputs(tmp_path, weights, capsys):
    csv_path, json_path = tmp_path / "r.csv", tmp_path / "r.json"
    argv = ["diagnose", str(weights), "--out-csv", str(csv_path), "--out-json", str(json_path), "--samples", "16"]
    assert main(argv) == 0
    assert "verdict: converged" in capsys.readouterr().out
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "depth,S1,S2,productBound,tail" and len(lines) == 122
    report = json.loads(json_path.read_text())
    assert report["verdict"] == "converged" and report["manifest"] == "r.json.manifest.json"
    assert (tmp_path / "r.csv.manifest.json").exists()
    first = csv_path.read_bytes()
    assert main(argv) == 0
    assert csv_path.read_bytes() == first


def test_diagnose_depth_and_p_flags(tmp_path, weights):
    out = tmp_path / "d.csv"
    assert main(["diagnose", str(weights), "--out-csv", str(out), "--depths", "0:120:10", "--p", "inf"]) == 0
    assert [line.split(",")[0] for line in out.read_text().splitlines()[1:]] == [str(t) for t in range(0, 121, 10)]
    assert main(["diagnose", str(weights), "--out-csv", str(out), "--p", "0.5"]) == 2
    assert main(["diagnose", str(weights), "--out-csv", str(out), "--depths", "5:1:x"]) == 2
    assert main(["diagnose", str(weights), "--out-csv", str(out), "--depths", "0,500"]) == 2


def test_parse_depths():
    assert parse_depths("0,3,9") == [0, 3, 9]
    assert parse_depths("2:8:3") == [2, 5, 8]
    assert parse_depths("1:3") == [1, 2, 3]


def test_verify_suites(tmp_path, weights, capsys):
    assert main(["verify", str(weights), "--trials", "50"]) == 0
    assert "PASS" in capsys.readouterr().out
    conv = tmp_path / "c.json"
    assert main(["gen", write(tmp_path / "cc.json", CONV_CFG), str(conv)]) == 0
    traces = tmp_path / "t.json"
    assert main(["verify", str(conv), "--trials", "10", "--dump-traces", str(traces)]) == 0
    out = capsys.readouterr().out
    for name in ("toeplitz", "features", "output", "explicit"):
        assert name + ": max deviation" in out
    dumped = json.loads(traces.read_text())
    assert len(dumped["traces"]) == 10 and (tmp_path / "t.json.manifest.json").exists()


def test_verify_identity_fixture_is_exact(tmp_path, capsys):
    cfg = {"spec": {"form": "matrix", "n": 4, "q": 1, "d_res": 3}, "scale": 1e-300, "bias_scale": 0, "seed": 0}
    w = tmp_path / "id.json"
    assert main(["gen", write(tmp_path / "id_cfg.json", cfg), str(w)]) == 0
    doc = json.loads(w.read_text())
    for block in [[doc["sampling"]]] + doc["blocks"]:
        for layer in block:
            layer["w"] = [[0.0] * 3 for _ in range(3)]
    w.write_text(json.dumps(doc))
    assert main(["verify", str(w), "--trials", "5"]) == 0
    assert "explicit: max deviation 0.000e+00" in capsys.readouterr().out


def test_invalid_weight_files(tmp_path, weights):
    doc = json.loads(weights.read_text())
    doc["blocks"][3][0]["w"] = [[1.0, 2.0]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["verify", str(bad)]) == 3
    assert main(["diagnose", str(bad), "--out-csv", str(tmp_path / "z.csv")]) == 3
    assert main(["verify", str(tmp_path / "nope.json")]) == 3
    bad.write_text("[1, 2")
    assert main(["verify", str(bad)]) == 3


def test_usage_errors():
    assert main([]) == 2
    assert main(["frobnicate"]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "resnetlab.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
