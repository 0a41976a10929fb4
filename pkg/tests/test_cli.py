import csv
import hashlib
import itertools
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from multiarm.cli import main
from multiarm.ingest import bundled_path

GOLDEN = Path(__file__).parent / "golden"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- solve -----------------------------------------------------------------------------


def test_solve_single_detector(tmp_path, capsys):
    scores = write(tmp_path, "s.csv", "sample_id,source,valid,d0\ns1,natural,1,0.3\n")
    code, out, _ = run(["solve", "--scores", scores], capsys)
    assert code == 0
    (row,) = list(csv.DictReader(out.splitlines()))
    assert float(row["w_d0"]) == 1.0
    assert float(row["capacity_nats"]) == 0.0
    assert float(row["p_adversarial"]) == pytest.approx(0.3)
    assert row["converged"] == "1"


def test_solve_symmetric_pair(tmp_path, capsys):
    scores = write(tmp_path, "s.csv", "sample_id,source,a,b\ns1,natural,0.1,0.9\n")
    out_path = tmp_path / "w.csv"
    code, _, _ = run(["solve", "--scores", scores, "--out", out_path, "--gamma", "0.4"], capsys)
    assert code == 0
    (row,) = read_csv(out_path)
    assert list(row) == ["sample_id", "source", "w_a", "w_b", "capacity_nats", "p_adversarial", "converged", "verdict"]
    assert float(row["w_a"]) == pytest.approx(0.5, abs=1e-6)
    assert float(row["w_b"]) == pytest.approx(0.5, abs=1e-6)
    bsc = math.log(2) + 0.1 * math.log(0.1) + 0.9 * math.log(0.9)
    assert float(row["capacity_nats"]) == pytest.approx(bsc, abs=1e-9)
    assert row["verdict"] == "1"


def test_solve_malformed(tmp_path, capsys):
    scores = write(tmp_path, "bad.csv", "sample_id,source,a\ns1,natural,0.2\ns2,natural,oops\n")
    code, out, err = run(["solve", "--scores", scores], capsys)
    assert code != 0
    assert "line 3" in err and "bad.csv" in err
    assert out == ""


@pytest.mark.parametrize("flags", [["--tol", "0"], ["--max-iters", "-3"], ["--gamma", "1.5"]])
def test_solve_rejects_bad_flags(tmp_path, capsys, flags):
    scores = write(tmp_path, "s.csv", "sample_id,source,a\ns1,natural,0.2\n")
    code, _, err = run(["solve", "--scores", scores, *flags], capsys)
    assert code == 2
    assert "error" in err


def test_missing_file(tmp_path, capsys):
    code, _, err = run(["solve", "--scores", tmp_path / "nope.csv"], capsys)
    assert code == 2
    assert "nope.csv" in err


# -- evaluate ---------------------------------------------------------------------------


SEPARABLE = """sample_id,source,valid,d0,d1
s0,natural,1,0.1,0.2
s0,pgd,1,0.9,0.8
s0,fgsm,0,0.1,0.1
s1,natural,1,0.15,0.1
s1,pgd,1,0.95,0.7
s1,fgsm,0,0.2,0.1
"""

MANIFEST = {
    "groups": [
        {"name": "pgd-only", "attacks": ["pgd"], "algorithm": "PGD", "loss": "CE", "norm": "Linf", "epsilon": 0.03},
        {"name": "fgsm-only", "attacks": ["fgsm"], "algorithm": "FGSM", "loss": "CE", "norm": "Linf", "epsilon": 0.03},
    ]
}


def test_evaluate_separable_and_skip(tmp_path, capsys):
    scores = write(tmp_path, "s.csv", SEPARABLE)
    manifest = write(tmp_path, "m.json", json.dumps(MANIFEST))
    code, out, err = run(["evaluate", "--scores", scores, "--manifest", manifest], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["skipped"] == ["fgsm-only"]
    (group,) = report["groups"]
    assert group == {"auroc": 1.0, "fpr_at_95_tpr": 0.0, "n_natural": 2, "n_groups": 2, "group_id": "pgd-only"}
    assert "WARNING" in err and "fgsm-only" in err


def test_evaluate_percent(tmp_path, capsys):
    scores = write(tmp_path, "s.csv", SEPARABLE)
    manifest = write(tmp_path, "m.json", json.dumps(MANIFEST))
    code, out, _ = run(["evaluate", "--scores", scores, "--manifest", manifest, "--percent"], capsys)
    assert code == 0
    assert json.loads(out)["groups"][0]["auroc"] == 100.0


def test_evaluate_unknown_attack(tmp_path, capsys):
    scores = write(tmp_path, "s.csv", SEPARABLE)
    manifest = write(tmp_path, "m.json", json.dumps({"groups": [{"name": "g", "attacks": ["pgd", "deepfool"]}]}))
    code, out, err = run(["evaluate", "--scores", scores, "--manifest", manifest], capsys)
    assert code != 0
    assert "deepfool" in err


@pytest.mark.parametrize("agg", ["bogus", "detector:d9"])
def test_evaluate_bad_aggregator(tmp_path, capsys, agg):
    scores = write(tmp_path, "s.csv", SEPARABLE)
    manifest = write(tmp_path, "m.json", json.dumps(MANIFEST))
    code, _, _ = run(["evaluate", "--scores", scores, "--manifest", manifest, "--aggregator", agg], capsys)
    assert code == 2


@pytest.mark.parametrize("agg", ["minimax", "mean", "detector:ACE"])
def test_evaluate_table1_cell_golden(tmp_path, capsys, agg):
    golden = json.loads((GOLDEN / "scenario_reports.json").read_text())["table1_linf_0.125"]
    scores = tmp_path / "cell.csv"
    assert run(["simulate", "--spec", bundled_path("table1_linf_0.125_spec.json"), "--out", scores], capsys)[0] == 0
    manifest = bundled_path("table1_linf_0.125.json")
    code, out, _ = run(["evaluate", "--scores", scores, "--manifest", manifest, "--aggregator", agg], capsys)
    assert code == 0
    if agg.startswith("detector:"):
        expected = golden["detectors"][agg.split(":", 1)[1]]
    else:
        expected = golden[agg]
    groups = json.loads(out)["groups"]
    assert [g["group_id"] for g in groups] == sorted(expected)
    for g in groups:
        want = expected[g["group_id"]]
        assert g["auroc"] == want["auroc"]
        assert g["fpr_at_95_tpr"] == want["fpr_at_95_tpr"]
        assert (g["n_natural"], g["n_groups"]) == (want["n_natural"], want["n_groups"])


# -- simulate ------------------------------------------------------------------------------


def test_simulate_deterministic(tmp_path, capsys):
    spec = {"n_samples": 30, "seed": 5, "detector_ids": ["a", "b"], "attack_ids": ["x"], "skill": [[1.0], [0.2]]}
    path = write(tmp_path, "spec.json", json.dumps(spec))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["simulate", "--spec", path, "--out", a], capsys)[0] == 0
    assert run(["simulate", "--spec", path, "--out", b], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert run(["simulate", "--spec", path, "--out", b, "--seed", "6"], capsys)[0] == 0
    assert a.read_bytes() != b.read_bytes()


def test_simulate_invalid_spec(tmp_path, capsys):
    spec = {"n_samples": 0, "detector_ids": ["a"], "attack_ids": ["x"], "skill": [[1.0]]}
    path = write(tmp_path, "spec.json", json.dumps(spec))
    code, _, err = run(["simulate", "--spec", path], capsys)
    assert code == 2
    assert "n_samples" in err


def test_simulate_bundled_golden(tmp_path, capsys):
    golden = json.loads((GOLDEN / "scenario_reports.json").read_text())["specialist"]
    out = tmp_path / "spec.csv"
    assert run(["simulate", "--spec", bundled_path("specialist_spec.json"), "--out", out], capsys)[0] == 0
    assert hashlib.sha256(out.read_bytes()).hexdigest() == golden["csv_sha256"]


# -- shift-bound ------------------------------------------------------------------------------


def shift(tmp_path, capsys, inst):
    path = write(tmp_path, "inst.json", json.dumps(inst))
    code, out, err = run(["shift-bound", "--instance", path], capsys)
    return code, (json.loads(out) if code == 0 else None), err


def test_shift_identical_domains(tmp_path, capsys):
    inst = {
        "support": [0, 1, 2],
        "source_marginal": [0.2, 0.3, 0.5],
        "target_marginal": [0.2, 0.3, 0.5],
        "f_source": [0, 1, 1],
        "f_target": [0, 1, 1],
        "detector": [0, 0, 1],
    }
    code, rep, _ = shift(tmp_path, capsys, inst)
    assert code == 0
    assert rep["holds"] is True
    assert rep["bound"] == rep["source_error"] == rep["target_error"] == pytest.approx(0.3)
    assert list(rep) == sorted(rep)


def test_shift_disjoint_noise(tmp_path, capsys):
    inst = {
        "support": ["a", "b", "c", "d"],
        "natural": [0.25, 0.25, 0.25, 0.25],
        "rate": 0.3,
        "source_noise": [0.5, 0.5, 0, 0],
        "target_noise": [0, 0, 0.5, 0.5],
        "f_source": [0, 1, 0, 1],
        "f_target": [0, 1, 1, 1],
        "detector": [1, 1, 0, 0],
    }
    code, rep, _ = shift(tmp_path, capsys, inst)
    assert code == 0
    assert rep["distance"] == 2.0
    assert rep["holds"] is True


def test_shift_random_five_point(tmp_path, capsys):
    rng = np.random.default_rng(2024)
    nat, ns, nt = (rng.dirichlet(np.ones(5)) for _ in range(3))
    rate = 0.4
    fs, ft, d = (rng.integers(0, 2, 5) for _ in range(3))
    inst = {
        "support": list("vwxyz"),
        "natural": nat.tolist(),
        "rate": rate,
        "source_noise": ns.tolist(),
        "target_noise": nt.tolist(),
        "f_source": fs.tolist(),
        "f_target": ft.tolist(),
        "detector": d.tolist(),
    }
    code, rep, _ = shift(tmp_path, capsys, inst)
    assert code == 0
    ps = [(1 - rate) * a + rate * b for a, b in zip(nat, ns)]
    pt = [(1 - rate) * a + rate * b for a, b in zip(nat, nt)]
    err_s = sum(p for p, x, y in zip(ps, d, fs) if x != y)
    err_t = sum(p for p, x, y in zip(pt, d, ft) if x != y)
    # distance as 2 * sup over all 32 events
    dist = 2 * max(abs(sum(ns[i] - nt[i] for i in s)) for r in range(6) for s in itertools.combinations(range(5), r))
    dis = min(sum(p for p, x, y in zip(ps, fs, ft) if x != y), sum(p for p, x, y in zip(pt, fs, ft) if x != y))
    assert rep["source_error"] == pytest.approx(err_s, abs=1e-12)
    assert rep["target_error"] == pytest.approx(err_t, abs=1e-12)
    assert rep["distance"] == pytest.approx(dist, abs=1e-12)
    assert rep["disagreement"] == pytest.approx(dis, abs=1e-12)
    assert rep["bound"] == pytest.approx(err_s + dist + dis, abs=1e-12)
    assert rep["holds"] is bool(err_t <= err_s + dist + dis + 1e-12)


def test_shift_invalid_instance(tmp_path, capsys):
    code, _, err = shift(tmp_path, capsys, {"support": [0, 1], "source_marginal": [0.5, 0.7]})
    assert code == 2


def test_module_entry_point(tmp_path):
    scores = write(tmp_path, "s.csv", "sample_id,source,a,b\ns1,natural,0.1,0.9\n")
    proc = subprocess.run([sys.executable, "-m", "multiarm", "solve", "--scores", str(scores)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("sample_id,source,w_a,w_b,")


def test_log_env(tmp_path):
    scores = write(tmp_path, "s.csv", "sample_id,source,a,b\ns1,natural,0.1,0.9\n")
    proc = subprocess.run(
        [sys.executable, "-m", "multiarm", "solve", "--scores", str(scores), "--max-iters", "1"],
        capture_output=True,
        text=True,
        env={**__import__("os").environ, "MULTIARM_LOG": "error"},
    )
    assert proc.returncode == 0
    assert proc.stderr == ""
