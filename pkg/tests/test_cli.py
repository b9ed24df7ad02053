import json

import numpy as np
import pytest

from wbpdn.cli import dispatch
from wbpdn.formats import write_matrix_text

GEN = ["gen", "--m", "20", "--n", "40", "--k", "4", "--rho", "1", "--alpha", "1", "--w", "0.5",
       "--lambda", "0.1", "--eps", "0.1", "--seed", "7"]


def test_gen_then_solve(tmp_path):
    inst = tmp_path / "inst.json"
    out = tmp_path / "out.json"
    assert dispatch(GEN + ["-o", str(inst)]) == 0
    assert dispatch(["solve", str(inst), "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["converged"] is True and doc["kkt_residual"] <= 1e-9
    assert doc["inputs"]["lambda"] == 0.1 and doc["inputs"]["seed"] == 7


def test_gen_is_reproducible(tmp_path, capsys):
    assert dispatch(GEN) == 0
    first = capsys.readouterr().out
    assert dispatch(GEN) == 0
    assert capsys.readouterr().out == first


def test_ric_orthonormal(tmp_path, capsys):
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 4)))
    path = tmp_path / "ortho.mat"
    path.write_text(write_matrix_text(q))
    assert dispatch(["ric", "--k", "2", str(path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert abs(doc["delta"]) <= 1e-12
    assert len(doc["extremal_subset"]) == 2 and min(doc["extremal_subset"]) >= 1
    assert doc["inputs"]["k"] == 2.0


def test_ric_cap_is_resource_error(tmp_path):
    path = tmp_path / "eye.mat"
    path.write_text(write_matrix_text(np.eye(12)))
    assert dispatch(["ric", "--k", "6", "--cap", "10", str(path)]) == 3


def test_certify_is_idempotent(tmp_path):
    inst = tmp_path / "inst.json"
    args = ["gen", "--m", "28", "--n", "32", "--k", "1", "--rho", "1", "--alpha", "1", "--w", "0.5",
            "--lambda", "0.1", "--eps", "0.1", "--seed", "3", "--matrix", "near_orthogonal", "-o", str(inst)]
    assert dispatch(args) == 0
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert dispatch(["certify", str(inst), "--t", "2", "-o", str(a)]) == 0
    assert dispatch(["certify", str(inst), "--t", "2", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["inputs"]["t"] == 2.0 and doc["inputs"]["w"] == 0.5
    if doc["condition"]["satisfied"]:
        assert doc["theorem"]["bound_value"] >= 0
        assert [c["case_id"] for c in doc["cases"]] == [1, 2]
    else:
        assert doc["theorem"] is None


def test_verify_theorem_rows(capsys):
    code = dispatch(["verify", "--m", "14", "--n", "16", "--k", "1", "--rho", "1", "--alpha", "1", "--w", "1",
                     "--lambda", "eps", "--eps", "0.1", "--t", "2", "--seed", "1", "--trials", "2", "-f", "rows"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("seed,matrix_seed,m,n,k")
    assert len(lines) == 3


def test_verify_lemma2(capsys):
    code = dispatch(["verify", "--kind", "lemma2", "--m", "10", "--n", "14", "--k", "2", "--t", "2",
                     "--seed", "1", "--trials", "100"])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["held"] and doc["inputs"]["matrix_kind"] == "tight_frame"


def test_verify_lemma2_degenerate_matrix_is_input_error():
    code = dispatch(["verify", "--kind", "lemma2", "--m", "10", "--n", "14", "--k", "2", "--t", "2",
                     "--seed", "5", "--trials", "10", "--matrix", "gaussian"])
    assert code == 2


def test_sweep_config_and_overrides(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"m": [12], "n": [14], "k": [1], "w": [1.0], "lam": ["eps"], "eps": [0.05],
                                "t": [2.0], "trials": 2, "base_seed": 9}))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert dispatch(["sweep", str(spec), "-f", "rows", "-o", str(a)]) == 0
    assert dispatch(["sweep", str(spec), "-f", "rows", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    assert dispatch(["sweep", str(spec), "-f", "rows", "--trials", "1", "--seed", "10", "-o", str(c)]) == 0
    assert len(c.read_text().splitlines()) == 2


def test_sweep_requires_seed(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"trials": 1}))
    assert dispatch(["sweep", str(spec)]) == 2


def test_config_file_values_and_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lambda": 0.2, "m": 8, "n": 12, "k": 2, "rho": 1, "alpha": 0.5, "w": 0.5,
                               "eps": 0.01, "seed": 4, "matrix": "tight_frame"}))
    assert dispatch(["gen", "--config", str(cfg)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["lambda"] == 0.2 and doc["generator"]["matrix_kind"] == "tight_frame"
    assert dispatch(["gen", "--config", str(cfg), "--lambda", "0.3"]) == 0
    assert json.loads(capsys.readouterr().out)["lambda"] == 0.3


@pytest.mark.parametrize("doc", ['{"nope": 1}', "[1, 2]", "{bad json"])
def test_bad_config_is_input_error(tmp_path, doc):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(doc)
    assert dispatch(["gen", "--config", str(cfg)] + GEN[1:]) == 2


def test_usage_errors(capsys):
    assert dispatch([]) == 2
    assert "usage" in capsys.readouterr().err
    assert dispatch(["frobnicate"]) == 2
    assert dispatch(["gen", "--m", "3"]) == 2
    assert "missing required flags" in capsys.readouterr().err
    assert dispatch(GEN + ["--bogus"]) == 2
    assert dispatch(["--version"]) == 0


def test_missing_input_file(tmp_path):
    assert dispatch(["solve", str(tmp_path / "absent.json")]) == 2


def test_uncertified_certify_reports_note(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    assert dispatch(GEN[:-2] + ["--seed", "1", "--matrix", "gaussian", "-o", str(inst)]) == 0
    assert dispatch(["certify", str(inst), "--t", "1.5"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["condition"]["satisfied"] is False
    assert "theorem_note" in doc
