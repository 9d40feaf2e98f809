import json

import numpy as np
import pytest

from delaygame import save_problem
from delaygame.cli import main
from conftest import golden_scalar_spec, wide_delay_spec, zero_cost_spec


@pytest.fixture()
def wide_problem(tmp_path):
    path = tmp_path / "wide.json"
    save_problem(wide_delay_spec(), path)
    return path


@pytest.fixture()
def zero_problem(tmp_path):
    path = tmp_path / "zero.json"
    save_problem(zero_cost_spec(), path)
    return path


class TestSolve:
    def test_writes_artifacts(self, wide_problem, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["solve", "--problem", str(wide_problem),
                     "--delta", "0.05", "--out", str(out)])
        assert code == 0
        for name in ("ladder.csv", "fields.csv", "gains.csv",
                     "metadata.json"):
            assert (out / name).is_file()
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["grid"] == {"N": 19, "delta": 0.05, "d1": 4, "d2": 2}
        assert meta["problem"]["hash"].startswith("sha256:")
        captured = capsys.readouterr()
        assert "rcond" in captured.out

    def test_invalid_problem_exit_2(self, tmp_path, capsys):
        bad = dict(A=[[0.1]], Abar=[[0.0]], B1=[[1.0]], B1bar=[[0.0]],
                   B2=[[1.0]], B2bar=[[0.0]], Q1=[[1.0]], Q2=[[1.0]],
                   R1=[[0.0]], R2=[[1.0]], H1=[[1.0]], H2=[[1.0]],
                   h1=0.2, h2=0.1, T=1.0, x0=[1.0])
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        code = main(["solve", "--problem", str(path),
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "R1 not positive definite" in capsys.readouterr().err

    def test_missing_file_exit_1(self, tmp_path):
        code = main(["solve", "--problem", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")])
        assert code == 1

    def test_bad_flag_values_exit_1(self, wide_problem, tmp_path):
        assert main(["solve", "--problem", str(wide_problem),
                     "--delta", "-1", "--out", str(tmp_path / "o")]) == 1
        assert main(["simulate", "--problem", str(wide_problem),
                     "--paths", "0", "--out", str(tmp_path / "o")]) == 1


class TestSimulate:
    def test_zero_cost_reports_zero(self, zero_problem, tmp_path):
        out = tmp_path / "out"
        code = main(["simulate", "--problem", str(zero_problem),
                     "--delta", "0.05", "--paths", "20", "--seed", "4",
                     "--out", str(out)])
        assert code == 0
        costs = json.loads((out / "costs.json").read_text())
        assert costs["J1_mean"] == 0.0
        assert costs["J2_mean"] == 0.0
        assert (out / "trajectories.csv").is_file()

    def test_byte_identical_reruns(self, wide_problem, tmp_path):
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            code = main(["simulate", "--problem", str(wide_problem),
                         "--delta", "0.05", "--paths", "50", "--seed", "7",
                         "--out", str(out)])
            assert code == 0
            outs.append((out / "costs.json").read_bytes()
                        + (out / "trajectories.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_single_path_se_not_applicable(self, wide_problem, tmp_path):
        out = tmp_path / "one"
        code = main(["simulate", "--problem", str(wide_problem),
                     "--delta", "0.05", "--paths", "1", "--out", str(out)])
        assert code == 0
        costs = json.loads((out / "costs.json").read_text())
        assert costs["J1_se"] is None
        assert costs["n_paths"] == 1

    def test_trajectory_csv_shape(self, wide_problem, tmp_path):
        out = tmp_path / "t"
        main(["simulate", "--problem", str(wide_problem), "--delta", "0.05",
              "--paths", "3", "--out", str(out)])
        lines = (out / "trajectories.csv").read_text().splitlines()
        assert lines[0] == "path_id,k,t,x0,u1_0,u2_0,dW"
        assert len(lines) == 1 + 3 * 21

    def test_problem_file_untouched(self, wide_problem, tmp_path):
        before = wide_problem.read_bytes()
        main(["simulate", "--problem", str(wide_problem), "--delta", "0.05",
              "--paths", "5", "--out", str(tmp_path / "o")])
        assert wide_problem.read_bytes() == before


class TestVerify:
    def test_zero_cost_all_pass(self, zero_problem, tmp_path):
        out = tmp_path / "v"
        code = main(["verify", "--problem", str(zero_problem),
                     "--delta", "0.05", "--paths", "200", "--halvings", "1",
                     "--out", str(out)])
        assert code == 0
        report = json.loads((out / "verify_report.json").read_text())
        assert report["passed"]

    def test_golden_all_pass(self, tmp_path):
        path = tmp_path / "golden.json"
        save_problem(golden_scalar_spec(), path)
        out = tmp_path / "v"
        code = main(["verify", "--problem", str(path), "--delta", "0.005",
                     "--paths", "1500", "--halvings", "1",
                     "--seed", "2", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "verify_report.json").read_text())
        assert report["passed"]
        names = {r["name"] for r in report["tests"]}
        assert "fbsde_martingale_projection" in names
        assert any(n.startswith("nash_deviation") for n in names)

    def test_mutated_ladder_exit_4(self, tmp_path):
        path = tmp_path / "golden.json"
        save_problem(golden_scalar_spec(), path)
        out = tmp_path / "v"
        code = main(["verify", "--problem", str(path), "--delta", "0.01",
                     "--paths", "300", "--halvings", "0",
                     "--debug-zero-layer", "50", "--out", str(out)])
        assert code == 4
        report = json.loads((out / "verify_report.json").read_text())
        assert not report["passed"]


class TestConvergence:
    def test_report_written(self, wide_problem, tmp_path):
        out = tmp_path / "c"
        code = main(["convergence", "--problem", str(wide_problem),
                     "--delta", "0.05", "--halvings", "1",
                     "--out", str(out)])
        assert code == 0
        rows = json.loads((out / "convergence.json").read_text())
        deltas = [r["delta"] for r in rows if "riccati_ode" in r]
        assert deltas == [0.05, 0.025]
        assert rows[1]["riccati_ode"] < rows[0]["riccati_ode"]

    def test_no_delay_trend_on_increment_free_problem(self, tmp_path):
        from dataclasses import replace
        spec = replace(wide_delay_spec(), Abar=np.zeros((1, 1)),
                       B1bar=np.zeros((1, 1)), B2bar=np.zeros((1, 1)))
        path = tmp_path / "det.json"
        save_problem(spec, path)
        out = tmp_path / "c"
        code = main(["convergence", "--problem", str(path),
                     "--delta", "0.05", "--halvings", "1",
                     "--out", str(out)])
        assert code == 0
        rows = json.loads((out / "convergence.json").read_text())
        gaps = [r["no_delay_gain_gap"] for r in rows
                if "no_delay_gain_gap" in r]
        assert len(gaps) == 2
        assert gaps[1] < gaps[0]
