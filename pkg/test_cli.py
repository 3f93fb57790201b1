"""
명령행 인터페이스 테스트
"""

import json

import pytest

from app import __version__
from app.cli import main
from app.dto.estimation import Estimand, EstimateResult
from app.utils.report_tables import render_table


@pytest.fixture
def td1_args(mock_data):
    return ["--data", str(mock_data / "td1.csv"), "--outcome", "y", "--treatment", "d", "--instruments", "z"]


def test_estimate_wald_text(td1_args, capsys):
    assert main(["estimate", *td1_args, "--method", "wald"]) == 0
    out = capsys.readouterr().out
    assert "wald" in out
    assert "2.000" in out


def test_estimate_json_envelope(td1_args, capsys):
    assert main(["estimate", *td1_args, "--method", "tsls", "--format", "json"]) == 0
    document = json.loads(capsys.readouterr().out)
    assert document["tool_version"] == __version__
    assert document["command"] == "estimate"
    assert document["result"]["estimate"] == pytest.approx(2.0)
    assert document["result"]["estimand"] == "LATE"


def test_estimate_all_skips_nothing_with_instruments(td1_args, capsys):
    assert main(["estimate", *td1_args, "--method", "all", "--format", "json"]) == 0
    rows = {row["method"]: row for row in json.loads(capsys.readouterr().out)["result"]}
    assert rows["diff"]["result"]["estimate"] == pytest.approx(2.0)
    assert rows["wald"]["result"]["estimate"] == pytest.approx(2.0)


def test_unknown_method_exits_with_usage_code(td1_args, capsys):
    assert main(["estimate", *td1_args, "--method", "magic"]) == 1
    assert "unknown method: magic" in capsys.readouterr().err


def test_bad_flag_exits_with_usage_code(capsys):
    assert main(["estimate", "--no-such-flag"]) == 1
    assert "error" in capsys.readouterr().err


def test_non_binary_treatment_is_input_error(tmp_path, capsys):
    data = tmp_path / "continuous.csv"
    data.write_text("d,y\n0,1\n0.5,2\n1,3\n", encoding="utf-8")
    assert main(["estimate", "--data", str(data), "--outcome", "y", "--treatment", "d", "--method", "diff"]) == 1
    assert "error:" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    data = tmp_path / "irrelevant.csv"
    data.write_text("z,d,y\n0,0,1\n0,1,2\n1,0,3\n1,1,4\n", encoding="utf-8")
    code = main(["estimate", "--data", str(data), "--outcome", "y", "--treatment", "d", "--instruments", "z",
                 "--method", "wald"])
    assert code == 2
    assert "irrelevant instrument" in capsys.readouterr().err


def test_simulate_writes_csv(mock_data, tmp_path):
    out = tmp_path / "sim.csv"
    code = main(["simulate", "--spec", str(mock_data / "spec_valid_iv.json"), "--n", "50", "--seed", "3",
                 "--out", str(out)])
    assert code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 51
    assert {"x1", "x2", "z1", "d", "y"} <= set(lines[0].split(","))


def test_simulate_twice_writes_identical_files(mock_data, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path in paths:
        assert main(["simulate", "--spec", str(mock_data / "spec_valid_iv.json"), "--n", "100", "--seed", "9",
                     "--out", str(path)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_simulate_report(mock_data, capsys):
    code = main(["simulate", "--spec", str(mock_data / "spec_valid_iv.json"), "--n", "200", "--report",
                 "--n-probe", "2000", "--instrument", "z1"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)["result"]
    assert report["oracle"]["ate"] == pytest.approx(1.5)
    assert "tsls_inconsistency" in report["theory"]


def test_diagnose_text(mock_data, td1_args, capsys):
    assert main(["diagnose", *td1_args]) == 0
    out = capsys.readouterr().out
    assert "First-stage F" in out
    assert "not applicable" in out


def test_diagnose_orthogonality_section(mock_data, tmp_path, capsys):
    data = tmp_path / "sim.csv"
    assert main(["simulate", "--spec", str(mock_data / "spec_valid_iv.json"), "--n", "500", "--seed", "2",
                 "--out", str(data)]) == 0
    assert main(["diagnose", "--data", str(data), "--outcome", "y", "--treatment", "d", "--covariates", "x1,x2",
                 "--orthogonality", "ols", "--k-folds", "5"]) == 0
    out = capsys.readouterr().out
    assert "Orthogonality" in out
    assert "naive" in out


def test_pool_two_result_files(tmp_path, capsys):
    paths = []
    for index, value in enumerate((1.0, 3.0)):
        path = tmp_path / f"result_{index}.json"
        result = EstimateResult.normal(Estimand.ATE, value, 1.0, 100, "ols")
        path.write_text(json.dumps(result.model_dump(mode="json")), encoding="utf-8")
        paths.append(str(path))
    assert main(["pool", "--results", *paths, "--format", "json"]) == 0
    pooled = json.loads(capsys.readouterr().out)["result"]
    assert pooled["estimate"] == pytest.approx(2.0)
    assert pooled["std_err"] == pytest.approx(2.0)


def test_pool_single_result_is_rejected(tmp_path, capsys):
    path = tmp_path / "one.json"
    path.write_text(json.dumps(EstimateResult.normal(Estimand.ATE, 1.0, 1.0, 10, "ols").model_dump(mode="json")),
                    encoding="utf-8")
    assert main(["pool", "--results", str(path)]) == 1
    assert "need ≥ 2 results" in capsys.readouterr().err


def test_advise_text(capsys):
    assert main(["advise", "--unobserved-confounding", "no"]) == 0
    assert "Recommendation: Confounder Approach" in capsys.readouterr().out


def test_advise_incomplete(capsys):
    assert main(["advise", "--unobserved-confounding", "yes"]) == 1
    assert "incomplete input" in capsys.readouterr().err


def test_mc_csv(mock_data, tmp_path, capsys):
    config = json.loads((mock_data / "scenario_valid_iv.json").read_text(encoding="utf-8"))
    config.update({"n": 100, "reps": 3, "n_probe": 1000})
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    assert main(["mc", "--config", str(path), "--format", "csv", "--max-concurrent", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("spec_fingerprint,label,method")
    assert len(lines) == 4


def test_mc_rejects_unknown_method(mock_data, tmp_path):
    config = json.loads((mock_data / "scenario_valid_iv.json").read_text(encoding="utf-8"))
    config["estimators"] = [{"method": "magic"}]
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    assert main(["mc", "--config", str(path)]) == 1


def test_text_table_alignment():
    lines = render_table(["Method", "Estimate"], [["diff", "2.000"], ["aiptw", "-0.125"]]).splitlines()
    assert len(lines) == 3
    # 첫 열은 왼쪽, 나머지는 오른쪽 정렬
    assert lines[0].index("Method") == lines[1].index("diff") == lines[2].index("aiptw")
    assert len(lines[0]) == len(lines[1]) == len(lines[2])
    assert lines[2].endswith("-0.125")


def test_text_table_without_rows_prints_header():
    assert render_table(["Method", "Estimate"], []) == "Method  Estimate\n"
