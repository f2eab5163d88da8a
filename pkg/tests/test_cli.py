import subprocess
import sys

import pytest

from kktinfer.cli import COVERAGE_COLUMNS, RESIDUAL_COLUMNS, build_parser, main, parse_seeds
from kktinfer.io import read_json, read_rows

FAST = ["--n", "3", "--nsamples", "2000", "--n-starts", "2"]


def run(tmp_path, *args):
    return main([args[0], "--out", str(tmp_path)] + list(args[1:]) + FAST)


def test_parse_seeds():
    assert parse_seeds("7") == [7]
    assert parse_seeds("0-3") == [0, 1, 2, 3]
    assert parse_seeds("1,3,5-6") == [1, 3, 5, 6]


def test_end_to_end(tmp_path):
    assert run(tmp_path, "generate", "--seed", "0-1") == 0
    assert (tmp_path / "nav2d/N3-clean/seed0/dataset.json").exists()
    assert (tmp_path / "nav2d/N3-clean/seed1/trajectories.csv").exists()
    assert run(tmp_path, "infer", "--seed", "0-1") == 0
    assert run(tmp_path, "evaluate", "--seed", "0-1") == 0
    rows = read_rows(tmp_path / "results.csv")
    assert [r["seed"] for r in rows] == ["0", "1"]
    assert all(0.0 <= float(r["coverage"]) <= 1.0 for r in rows)
    # re-evaluating replaces rows rather than duplicating them
    assert run(tmp_path, "evaluate", "--seed", "1") == 0
    assert len(read_rows(tmp_path / "results.csv")) == 2
    assert main(["report", "--out", str(tmp_path)]) == 0
    cov = read_rows(tmp_path / "report/coverage_by_N.csv")
    assert len(cov) == 1 and cov[0]["n_seeds"] == "2"
    residual = list((tmp_path / "report").glob("residual_*.csv"))
    assert len(residual) == 1 and list(read_rows(residual[0])[0]) == RESIDUAL_COLUMNS


def test_infer_generates_missing_data(tmp_path):
    assert run(tmp_path, "infer", "--seed", "3", "--noise", "0.005") == 0
    assert (tmp_path / "nav2d/N3-noise0.005/igci/seed3/result.json").exists()


def test_report_on_empty_input_writes_header(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "report/coverage_by_N.csv").read_text()
    assert text == ",".join(COVERAGE_COLUMNS) + "\n"


def test_report_help_lists_columns(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["report", "--help"])
    out = " ".join(capsys.readouterr().out.split())
    for col in COVERAGE_COLUMNS + RESIDUAL_COLUMNS:
        assert col in out


def test_exit_codes(tmp_path):
    assert main(["infer", "--scenario", "nowhere", "--out", str(tmp_path)]) == 2
    assert main(["infer", "--delta", "-1", "--out", str(tmp_path)]) == 2
    assert main(["infer", "--seed", "x", "--out", str(tmp_path)]) == 2
    assert main([]) == 2
    assert run(tmp_path, "evaluate", "--seed", "9") == 4
    # an infeasible start under a scenario file is a numerical failure
    bad = tmp_path / "bad.json"
    from kktinfer.scenarios import scenario_nav2d
    cfg = scenario_nav2d().replace(x0_mean=[-3.0, -5.5], x0_sigma=0.0)
    bad.write_text(cfg.to_json())
    assert main(["generate", "--scenario", str(bad), "--out", str(tmp_path)]) == 3


def test_jobs_do_not_change_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, jobs in ((a, "1"), (b, "3")):
        assert main(["infer", "--out", str(out), "--seed", "0-2", "--jobs", jobs] + FAST) == 0
    for s in range(3):
        rel = f"nav2d/N3-clean/igci/seed{s}/result.json"
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_manifest_replay(tmp_path):
    orig, rep = tmp_path / "orig", tmp_path / "rep"
    assert main(["infer", "--out", str(orig), "--seed", "4"] + FAST) == 0
    assert main(["evaluate", "--out", str(orig), "--seed", "4"] + FAST) == 0
    d = "nav2d/N3-clean/igci/seed4"
    man = read_json(orig / d / "manifest.json")
    assert man["config"]["n_demos"] == 3 and "evaluate_argv" in man
    assert main(["--manifest", str(orig / d / "manifest.json"), "--replay-out", str(rep)]) == 0
    for name in ("result.json", "scores.csv", "residuals.csv"):
        assert (orig / d / name).read_bytes() == (rep / d / name).read_bytes()


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "kktinfer", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
