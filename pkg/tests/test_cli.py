import json
import subprocess
import sys

import pytest

from pmpcheck import Marginal, Tolerances, certify_refine, check_admissibility
from pmpcheck import cli
from pmpcheck.cli import main

from conftest import PROBLEMS

E1 = str(PROBLEMS / "e1.prob")
E1_BAD = str(PROBLEMS / "e1_bad.prob")
DI = str(PROBLEMS / "double_integrator.prob")
DI_MISS = str(PROBLEMS / "di_miss.prob")


# ---------------------------------------------------------------------------
# exit codes

def test_certificate_exits_zero(capsys):
    assert main(["certify", E1, "--steps", "300"]) == 0
    out = capsys.readouterr().out
    assert "verdict: CERTIFICATE" in out
    assert "alpha0 = 0.5" in out


def test_violation_exits_two(capsys):
    assert main(["certify", E1_BAD, "--steps", "300"]) == 2
    out = capsys.readouterr().out
    assert "verdict: VIOLATION" in out
    assert "witness (certified)" in out
    assert "farkas certificate" in out and "(verified)" in out


def test_inadmissible_exits_one(capsys):
    assert main(["certify", DI_MISS, "--steps", "300"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "equality constraint" in err or "K" in err


def test_missing_file_exits_one(capsys):
    assert main(["certify", "no/such.prob"]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", E1])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_version_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("pmpcheck ")


@pytest.mark.parametrize("stages,fragment", [
    ("8,12", "must strictly increase and nest"),
    ("abc", "--stages must be integers"),
    ("", "--stages is empty"),
])
def test_bad_stage_lists(stages, fragment, capsys):
    assert main(["certify", E1, "--stages", stages]) == 1
    assert fragment in capsys.readouterr().err


# ---------------------------------------------------------------------------
# simulate / check / sensitivity

def test_simulate_csv(capsys):
    assert main(["simulate", E1, "--steps", "4"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines == [
        "t,x1,u1",
        "0,0,-1",
        "0.25,-0.25,-1",
        "0.5,-0.5,-1",
        "0.75,-0.75,-1",
        "1,-1,-1",
    ]


def test_check_admissible(capsys):
    assert main(["check", E1, "--steps", "200"]) == 0
    out = capsys.readouterr().out
    assert "admissible          yes" in out


def test_check_inadmissible(capsys):
    assert main(["check", DI_MISS, "--steps", "200"]) == 1
    out = capsys.readouterr().out
    assert "admissible          no" in out


def test_sensitivity_values(capsys):
    rc = main(["sensitivity", E1, "--theta", "0.5", "--v", "1",
               "--a", "1", "--steps", "200"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "dP/deps+ = 2" in out
    assert "dP/da . a = 1" in out


@pytest.mark.parametrize("argv,fragment", [
    (["sensitivity", E1, "--theta", "0.5", "--v", "a b"], "must be numbers"),
    (["sensitivity", E1, "--theta", "0.5", "--v", "1 2"], "--v has 2 components"),
    (["sensitivity", E1, "--theta", "0.5", "--v", "1", "--a", "1 2"],
     "--a has 2 components"),
])
def test_sensitivity_bad_args(argv, fragment, capsys):
    assert main(argv) == 1
    assert fragment in capsys.readouterr().err


# ---------------------------------------------------------------------------
# JSON reports

def test_json_report_is_deterministic(capsys):
    assert main(["certify", E1, "--steps", "300", "--report", "json"]) == 0
    first = capsys.readouterr().out
    assert main(["certify", E1, "--steps", "300", "--report", "json"]) == 0
    second = capsys.readouterr().out
    assert first == second

    report = json.loads(first)
    assert report["schema"] == 1
    assert report["verdict"] == "certificate"
    assert report["exit_code"] == 0
    assert report["multiplier"]["alpha0"] == pytest.approx(0.5, abs=1e-6)
    assert report["problem"]["time"] == {"mode": "fixed", "t0": 0.0, "t1": 1.0}
    assert report["admissibility"]["dynamics_residual"] <= 1e-9
    assert [s["status"] for s in report["stages"]] == ["feasible"] * 3
    # the encoder sees only plain python scalars, never numpy repr leakage
    assert "float64" not in first


def test_json_violation_fields(capsys):
    assert main(["certify", E1_BAD, "--steps", "300", "--report", "json"]) == 2
    report = json.loads(capsys.readouterr().out)
    assert report["verdict"] == "violation"
    assert report["exit_code"] == 2
    v = report["violation"]
    assert v["stage"] == 1
    assert v["farkas"]["verified"] is True
    assert all(w["v"] == [-1.0] for w in v["witnesses"])
    assert min(w["margin"] for w in v["witnesses"]) > 1e-3


def test_json_free_time_has_transform_and_psi_t(capsys):
    assert main(["certify", DI, "--steps", "300", "--report", "json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["problem"]["time"]["mode"] == "free"
    assert report["transform"] == {"delta_v": 0.5, "fixed_interval": [0.0, 2.0],
                                   "n": 3, "r": 2, "n_samples": 6}
    assert report["psi_t"]["h_constant"] == pytest.approx(0.2, abs=1e-5)
    assert report["psi_t"]["energy_residual"] <= 1e-6


# ---------------------------------------------------------------------------
# marginal verdicts map to exit code 3

def test_marginal_exit_code(capsys):
    from pmpcheck import load_problem
    prob, cand = load_problem(E1_BAD, steps_per_unit=300)
    verdict = certify_refine(prob, cand, tolerances=Tolerances(marginal_tol=10.0),
                             steps_per_unit=300)
    assert isinstance(verdict, Marginal)
    report = cli._verdict_report(None, prob, cand, verdict, None, None)
    assert report["verdict"] == "marginal"
    assert report["exit_code"] == 3
    rc = cli._print_text_report(report, check_admissibility(prob, cand, 1e-6))
    assert rc == 3
    assert "tolerance-sensitive" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# transform round trip and process-level smoke test

def test_transform_output_certifies(tmp_path, capsys):
    assert main(["transform", DI, "--steps", "300"]) == 0
    text = capsys.readouterr().out
    path = tmp_path / "di_fixed_image.prob"
    path.write_text(text)
    assert main(["certify", str(path), "--steps", "300"]) == 0
    out = capsys.readouterr().out
    assert "verdict: CERTIFICATE" in out


def test_transform_rejects_fixed_time(capsys):
    assert main(["transform", E1]) == 1
    assert "free-time" in capsys.readouterr().err


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "pmpcheck.cli", "certify", E1, "--steps", "300"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "verdict: CERTIFICATE" in proc.stdout
