import json

import numpy as np
import pytest

from ipsg import cli
from ipsg import stateest as se
from ipsg.output import read_trace


def run(argv):
    return cli.main([str(a) for a in argv])


def test_parse_helpers():
    assert cli.parse_seeds("0-4") == [0, 1, 2, 3, 4]
    assert cli.parse_seeds("1,3") == [1, 3]
    assert sorted(cli.parse_methods("all")) == ["adagrad", "adam", "amsgrad", "ipsg", "sgd"]
    assert cli.parse_t_values("0:10:5") == [0, 5, 10]
    assert cli.parse_t_values("1,4") == [1, 4]
    assert cli.parse_t_values(None) is None
    with pytest.raises(ValueError):
        cli.parse_methods("ipsg,lbfgs")


def test_t_max_zero_trace(tmp_path):
    assert run(["run", "--dataset", "random-20x5-s1", "--t-max", 0, "--out", tmp_path]) == 0
    assert (tmp_path / "trace_ipsg_seed0.csv").read_text() == "iter,error\n0,1.0\n"


def test_trace_byte_identical_and_schema(tmp_path):
    args = ["run", "--dataset", "random-20x5-s1", "--method", "ipsg,adam", "--t-max", 300,
            "--seeds", "0-1"]
    assert run(args + ["--out", tmp_path / "a"]) == 0
    assert run(args + ["--out", tmp_path / "b", "--jobs", 2]) == 0
    for name in ("trace_ipsg_seed0.csv", "trace_adam_seed1.csv"):
        ta, tb = (tmp_path / "a" / name).read_bytes(), (tmp_path / "b" / name).read_bytes()
        assert ta == tb
        lines = ta.decode().splitlines()
        assert lines[0] == "iter,error"
        assert [int(line.split(",")[0]) for line in lines[1:]] == list(range(len(lines) - 1))


def test_summary_and_metadata(tmp_path):
    assert run(["run", "--dataset", "consistent-20x5-s2", "--t-max", 2000, "--eps-tol", 1e-3,
                "--out", tmp_path]) == 0
    head, row = (tmp_path / "summary.csv").read_text().splitlines()[:2]
    assert head == "dataset,method,seed,stop_iter,final_error,kappa,wall_time"
    assert float(row.split(",")[5]) >= 1.0
    meta = json.loads((tmp_path / "run_metadata.json").read_text())
    for key in ("stopping_rule", "standardization", "params", "seeds", "message_accounting"):
        assert key in meta
    acct = meta["message_accounting"]["ipsg seed 0"]
    iters = len(read_trace(tmp_path / "trace_ipsg_seed0.csv")) - 1
    assert acct["up"] == acct["down"] == meta["agents"] * iters
    assert (tmp_path / "traces.dat").exists()


def test_svg_written(tmp_path):
    assert run(["run", "--dataset", "random-20x5-s1", "--t-max", 50, "--svg", "--out", tmp_path]) == 0
    assert (tmp_path / "traces.svg").read_text().startswith("<svg")


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[experiment]\ndataset = random-20x5-s1\nt_max = 40\nseeds = 2\n"
                   "[ipsg]\nalpha = 0.001\n")
    assert run(["run", "--config", cfg, "--out", tmp_path / "o"]) == 0
    meta = json.loads((tmp_path / "o" / "run_metadata.json").read_text())
    assert meta["t_max"] == 40 and meta["seeds"] == [2]
    assert float(meta["params"]["ipsg"]["alpha"]) == 0.001
    assert run(["run", "--config", cfg, "--alpha", 0.002, "--t-max", 10, "--out", tmp_path / "p"]) == 0
    meta = json.loads((tmp_path / "p" / "run_metadata.json").read_text())
    assert meta["t_max"] == 10 and float(meta["params"]["ipsg"]["alpha"]) == 0.002


def test_config_rejects_unknown(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[experiment]\ndataset = random-20x5-s1\n[sgd]\ngamma = 1\n")
    assert run(["run", "--config", cfg, "--out", tmp_path]) == 1
    cfg.write_text("[experiment]\ndataset = random-20x5-s1\nbogus = 1\n")
    assert run(["run", "--config", cfg, "--out", tmp_path]) == 1
    cfg.write_text("[experiment]\ndataset = random-20x5-s1\n[lbfgs]\nalpha = 1\n")
    assert run(["run", "--config", cfg, "--out", tmp_path]) == 1


def test_compare_ranking(tmp_path):
    assert run(["compare", "--dataset", "consistent-20x5-s2", "--t-max", 5000, "--eps-tol", 1e-3,
                "--seeds", "0-2", "--out", tmp_path]) == 0
    line = (tmp_path / "ranking.txt").read_text().strip()
    assert line.startswith("ranking: ") and line.count(" < ") == 4
    rows = (tmp_path / "summary.csv").read_text().splitlines()[1:]
    assert len(rows) == 15


def test_single_method_compare_equals_run(tmp_path):
    common = ["--dataset", "random-20x5-s1", "--method", "sgd", "--t-max", 500, "--seeds", "0-1"]
    assert run(["run", *common, "--out", tmp_path / "r"]) == 0
    assert run(["compare", *common, "--out", tmp_path / "c"]) == 0
    for s in (0, 1):
        name = f"trace_sgd_seed{s}.csv"
        assert (tmp_path / "r" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()


def test_exit_codes(tmp_path):
    assert run(["run", "--dataset", "random-20x5-s1", "--method", "nope", "--out", tmp_path]) == 1
    assert run(["run", "--dataset", "no-such-dataset", "--out", tmp_path]) == 1
    assert run(["run", "--dataset", "random-20x5-s1", "--method", "sgd", "--alpha", 50,
                "--t-max", 500, "--out", tmp_path]) == 2


def test_missing_benchmark_message(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("IPSG_DATA_DIR", str(tmp_path))
    assert run(["run", "--dataset", "ash608", "--out", tmp_path]) == 1
    assert "ash608.mtx" in capsys.readouterr().err


def test_constants_scalar(capsys):
    assert run(["constants", "--dataset", "scalar", "--alpha", 0.5, "--beta", 1, "--delta", 0.5]) == 0
    captured = capsys.readouterr()
    rep = json.loads(captured.out)
    assert rep["rho"] == 0.0 and rep["alpha_bar"] == 0.5
    assert "warning" in captured.err  # alpha = alpha_bar is not strictly below it


def test_constants_rank_deficient(tmp_path):
    M = np.ones((5, 2))
    path = tmp_path / "rd.mtx"
    from ipsg.datasets import write_matrix_market
    write_matrix_market(path, M)
    assert run(["constants", "--dataset", path]) == 1


def test_verify_pass_and_faults(tmp_path):
    assert run(["verify", "--checks", "unbiasedness,precond_bound", "--trials", 200,
                "--out", tmp_path / "v.json"]) == 0
    assert len(json.loads((tmp_path / "v.json").read_text())) == 2
    assert run(["verify", "--checks", "precond_bound", "--trials", 200, "--rho-offset", 0.5]) == 2
    assert run(["verify", "--checks", "step_recursion", "--alpha", 1.0]) == 2
    assert run(["verify", "--checks", "bogus"]) == 1


def test_stateest_outputs(tmp_path):
    assert run(["stateest", "--propagate", "0,3,7", "--out", tmp_path]) == 0
    rep = json.loads((tmp_path / "stateest.json").read_text())
    assert rep["jointly_observable"] and rep["permutation_exact"]
    assert rep["rel_error_vs_oracle"] <= 1e-3
    A = se.builtin_system().A_state
    z_hat = np.array(rep["z0_hat"])
    for t in (0, 3, 7):
        np.testing.assert_array_equal(rep["propagated"][str(t)], se.propagate(A, z_hat, t))
    assert read_trace(tmp_path / "trace.csv")[0] == 1.0


def test_stateest_unobservable_warns(tmp_path, capsys):
    assert run(["stateest", "--system", "builtin-unobservable", "--out", tmp_path]) == 0
    assert "not jointly observable" in capsys.readouterr().err
    assert "caveat" in json.loads((tmp_path / "stateest.json").read_text())


def test_stateest_bad_z0(tmp_path):
    assert run(["stateest", "--z0", "1,2", "--out", tmp_path]) == 1


def test_datagen_round_trip(tmp_path):
    assert run(["datagen", "--out", tmp_path]) == 0
    sys_, z0 = se.load_system(tmp_path / "lti_builtin.txt")
    assert np.array_equal(sys_.A_state, se.builtin_system().A_state)
    assert run(["stateest", "--system", tmp_path / "lti_builtin.txt", "--out", tmp_path / "s"]) == 0
    from ipsg.datasets import load_matrix_market
    from ipsg.presets import resolve_dataset
    M = load_matrix_market(tmp_path / "random-20x5-s1.mtx")
    assert np.array_equal(np.asarray(M.todense() if hasattr(M, "todense") else M),
                          resolve_dataset("random-20x5-s1").A)
