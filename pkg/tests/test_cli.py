import csv
import json

import numpy as np
import pytest

from quasitrust import ivanov
from quasitrust.cli import main
from quasitrust.errors import ConfigError, StagnationError
from quasitrust.experiment import (
    EXIT_CONFIG, EXIT_MISMATCH, EXIT_NONCONVERGENCE, EXIT_OK, ExperimentConfig, format_value,
    read_history, run_experiment, run_trs_bench, worker_count,
)
from quasitrust.ivanov import CSV_COLUMNS


def write_config(tmp_path, text):
    path = tmp_path / "cfg.toml"
    path.write_text(text)
    return path


# -- config ----------------------------------------------------------------------------


def test_defaults_validate():
    cfg = ExperimentConfig().validate()
    assert cfg.delta_rel == [3.0, 1.0, 0.1] and cfg.n == 100


def test_load_toml(tmp_path):
    path = write_config(tmp_path, 'n = 40\ndelta_rel = [2]\nseeds = [3, 4]\n[problem]\ncubic = 5.0\n[emit]\ntrs_trace = true\n')
    cfg = ExperimentConfig.load(path)
    assert cfg.n == 40 and cfg.delta_rel == [2.0] and cfg.seeds == [3, 4]
    assert cfg.problem.cubic == 5.0 and cfg.emit.trs_trace
    assert cfg.solver_options().trs_debug


@pytest.mark.parametrize("text", [
    "delta_rel = []\n",
    "delta_rel = [-1.0]\n",
    "delta_rel = [0.0]\n",
    "tau = 1.0\n",
    "n = 2\n",
    "rho1 = 0.0\n",
    "seeds = []\n",
    "bogus = 1\n",
    "[problem]\nname = 'heat'\n",
    "[problem]\nwidth = 3\n",
    "eta_lower = 1.0\n",
    "n = [\n",
])
def test_invalid_configs(tmp_path, text):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(write_config(tmp_path, text)).validate()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "nope.toml")


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(None) == ""
    assert format_value(True) == "1"
    assert format_value(3) == "3"


def test_worker_count(monkeypatch):
    monkeypatch.setenv("QUASITRUST_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("QUASITRUST_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("QUASITRUST_THREADS", "many")
    with pytest.raises(ConfigError):
        worker_count()


# -- runs ----------------------------------------------------------------------------------


def test_run_experiment_artifacts(tmp_path):
    cfg = ExperimentConfig(output_dir=str(tmp_path))
    code, results = run_experiment(cfg)
    assert code == EXIT_OK and all(r.ok for r in results)
    for d in ("3", "1", "0.1"):
        tag = f"d{d}_s0"
        rows = read_history(tmp_path / f"history_{tag}.csv")
        assert rows and list(rows[0]) == list(CSV_COLUMNS)
        with open(tmp_path / f"reconstruction_{tag}.csv") as fh:
            recon = list(csv.reader(fh))
        assert recon[0] == ["s", "x"] and len(recon) == 101
        meta = json.loads((tmp_path / f"run_{tag}.json").read_text())
        assert meta["termination"] == "discrepancy satisfied"
        assert meta["config"]["delta_rel"] == [3.0, 1.0, 0.1]
        lo, hi = meta["discrepancy_interval"]
        assert lo < meta["residual"] <= hi
    assert len(list(tmp_path.glob("history_*.csv"))) == 3
    assert len(list(tmp_path.glob("reconstruction_*.csv"))) == 3
    errs = [r.error for r in results]
    assert errs[0] > errs[1] > errs[2]


def test_history_serialization_digits(tmp_path):
    cfg = ExperimentConfig(output_dir=str(tmp_path), delta_rel=[3.0], record_wall_time=False)
    run_experiment(cfg)
    with open(tmp_path / "history_d3_s0.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(CSV_COLUMNS)
    rho = rows[1][2]
    assert float(rho) == float(repr(float(rho)))
    assert len(rho.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 17
    assert all(r[-1] == "0" for r in rows[1:])


def test_trs_trace_emitted(tmp_path):
    cfg = ExperimentConfig(output_dir=str(tmp_path), delta_rel=[3.0])
    cfg.emit.trs_trace = True
    run_experiment(cfg)
    lines = (tmp_path / "trs_trace_d3_s0.jsonl").read_text().splitlines()
    entry = json.loads(lines[0])
    assert entry["l"] == 1 and entry["trace"]


def test_emit_flags_off(tmp_path):
    cfg = ExperimentConfig(output_dir=str(tmp_path), delta_rel=[3.0])
    cfg.emit.histories = cfg.emit.reconstructions = False
    run_experiment(cfg)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["run_d3_s0.json"]


def test_nonconvergence_keeps_partial_artifacts(tmp_path, monkeypatch):
    real = ivanov.inner_solve
    calls = {"n": 0}

    def flaky(rf, rho, x0, opts=None, on_iterate=None):
        calls["n"] += 1
        if calls["n"] > 1:
            raise StagnationError("forced", rho=rho)
        return real(rf, rho, x0, opts, on_iterate)

    monkeypatch.setattr(ivanov, "inner_solve", flaky)
    cfg = ExperimentConfig(output_dir=str(tmp_path), delta_rel=[1.0])
    code, results = run_experiment(cfg)
    assert code == EXIT_NONCONVERGENCE and not results[0].ok
    manifest = json.loads((tmp_path / "error_d1_s0.json").read_text())
    assert manifest["error"] == "OuterConvergenceError"
    assert manifest["n_records"] > 0
    assert read_history(tmp_path / "history_d1_s0.csv")


def test_parallel_matches_serial(tmp_path, monkeypatch):
    base = dict(delta_rel=[3.0, 1.0], record_wall_time=False)
    run_experiment(ExperimentConfig(output_dir=str(tmp_path / "serial"), **base))
    monkeypatch.setenv("QUASITRUST_THREADS", "2")
    run_experiment(ExperimentConfig(output_dir=str(tmp_path / "pool"), **base))
    for f in sorted((tmp_path / "serial").glob("*.csv")):
        assert f.read_bytes() == (tmp_path / "pool" / f.name).read_bytes()


# -- TRS bench ----------------------------------------------------------------------------------


def test_bench_empty():
    assert run_trs_bench([2], 0, 0) == (EXIT_OK, [])


def test_bench_dim50_sweep():
    code, rows = run_trs_bench([50], 200, 17)
    assert code == EXIT_OK and len(rows) == 200
    assert max(r.gap for r in rows) <= 1e-8


def test_bench_rejects_dims():
    with pytest.raises(ConfigError):
        run_trs_bench([501], 1, 0)


def test_bench_mismatch_exit(monkeypatch, capsys):
    from quasitrust import experiment

    def bad_solve(prob, **kw):
        sol = experiment.solve_trs_oracle(prob)
        sol.objective += 1.0
        return sol

    monkeypatch.setattr(experiment, "solve_trs", bad_solve)
    assert main(["bench-trs", "--dims", "5", "--count", "3", "--seed", "1"]) == EXIT_MISMATCH
    assert "instances [0, 1, 2]" in capsys.readouterr().out


# -- CLI ----------------------------------------------------------------------------------------


def test_cli_solve_with_overrides(tmp_path, capsys):
    path = write_config(tmp_path, "n = 100\n")
    out = tmp_path / "out"
    code = main(["solve", "--config", str(path), "--delta-rel", "3", "--seed", "2", "--out", str(out),
                 "--tau", "2.5", "--problem-peak", "0.12", "--no-emit-reconstructions"])
    assert code == EXIT_OK
    meta = json.loads((out / "run_d3_s2.json").read_text())
    assert meta["config"]["tau"] == 2.5 and meta["config"]["problem"]["peak"] == 0.12
    assert meta["config"]["seeds"] == [2]
    assert not list(out.glob("reconstruction_*"))
    assert "residual/delta" in capsys.readouterr().out


def test_cli_config_error_exit(tmp_path, capsys):
    path = write_config(tmp_path, "delta_rel = []\n")
    assert main(["solve", "--config", str(path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["check", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG


def test_cli_check(tmp_path, capsys):
    path = write_config(tmp_path, "n = 60\n")
    assert main(["check", "--config", str(path)]) == EXIT_OK
    assert "gradient probe" in capsys.readouterr().out


def test_cli_bench(capsys):
    assert main(["bench-trs", "--dims", "2,10", "--count", "6", "--seed", "0"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "max_gap" in out


def test_cli_bench_count_zero(capsys):
    assert main(["bench-trs", "--dims", "2", "--count", "0", "--seed", "0"]) == EXIT_OK
    assert "no instances" in capsys.readouterr().out


def test_cli_bad_arguments():
    with pytest.raises(SystemExit) as info:
        main(["bench-trs", "--dims", "a,b", "--count", "1", "--seed", "0"])
    assert info.value.code == 2
