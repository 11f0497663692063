import csv
from dataclasses import replace

import numpy as np
import pytest

from tvsbl import ConfigError, relative_error
from tvsbl.harness import ExperimentConfig, load_config, make_truth, preset, run_experiment, runner
from tvsbl.harness.cli import main
from tvsbl.harness.config import LambdaGrid, NoiseSpec, PhantomSpec, config_from_dict, parse_seeds
from tvsbl.harness.output import RESULT_COLUMNS, read_signal, write_signal


def small_config(**changes) -> ExperimentConfig:
    base = ExperimentConfig(
        experiment_id="small",
        solvers=["analysis", "synthesis", "sbl-em", "sbl-fast"],
        phantom=PhantomSpec(name="piecewise-constant", size=32, edges=3, seed=5),
        noise=NoiseSpec(snr_db=10.0, seeds=[1, 0]),
        lambda_grid=LambdaGrid(per_decade=4, lo=1e-3, hi=1.0),
    )
    return replace(base, **changes).validate()


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_seeds():
    assert parse_seeds("0-3,7") == [0, 1, 2, 3, 7]
    assert parse_seeds("5") == [5]
    for bad in ("", "a-b", "3-x"):
        with pytest.raises(ConfigError):
            parse_seeds(bad)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        config_from_dict({"solver": ["analysis"]})
    with pytest.raises(ConfigError):
        config_from_dict({"noise": {"snr": 3.0}})
    with pytest.raises(ConfigError):
        config_from_dict({"solvers": ["ridge"]})


def test_config_overlay_keeps_preset_defaults():
    c = config_from_dict({"noise": {"snr_db": 3.0}, "sbl": {"tol": 1e-5}}, preset("denoise2d"))
    assert c.noise.snr_db == 3.0 and c.noise.seeds == [0]
    assert c.sbl.tol == 1e-5 and c.sbl.algorithm == "fast"
    assert c.phantom.name == "shepp-logan"


def test_load_config_toml(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text('experiment_id = "t"\nsolvers = ["analysis"]\n[phantom]\nsize = 32\n'
                    '[noise]\nseeds = [3]\nsnr_db = 2.5\n')
    c = load_config(path)
    assert (c.experiment_id, c.solvers, c.phantom.size, c.noise.seeds, c.noise.snr_db) == \
        ("t", ["analysis"], 32, [3], 2.5)
    path.write_text("solvers = [")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_results_table_and_recomputed_error(tmp_path):
    config = small_config()
    out = run_experiment(config, tmp_path)
    rows = read_rows(tmp_path / "results.csv")
    assert list(rows[0]) == list(RESULT_COLUMNS)
    assert [(r["seed"], r["solver"]) for r in rows] == \
        [(str(s), v) for s in (0, 1) for v in ("analysis", "sbl-em", "sbl-fast", "synthesis")]
    assert [(r.meta["seed"], r.solver) for r in out] == [(int(r["seed"]), r["solver"]) for r in rows]
    assert not (tmp_path / "results.csv.partial").exists()
    truth = read_signal(tmp_path / "truth.csv")
    np.testing.assert_array_equal(truth, make_truth(config))
    for row in rows:
        x = read_signal(tmp_path / "signals" / f"{row['solver']}_seed{row['seed']}.csv")
        assert relative_error(x, truth) == pytest.approx(float(row["relative_error"]), abs=1e-12)
        assert row["wall_ms"] == ""
        assert (row["lambda"] == "") == row["solver"].startswith("sbl")
        assert (row["shift"] == "") == (row["solver"] == "analysis")
        assert float(row["relative_error"]) < relative_error(
            read_signal(tmp_path / "signals" / f"noisy_seed{row['seed']}.csv"), truth)


def test_constant_signal_is_recovered(tmp_path):
    config = small_config(phantom=PhantomSpec(name="piecewise-constant", size=32, edges=0, seed=2),
                          noise=NoiseSpec(noiseless=True, seeds=[0]))
    truth = make_truth(config)
    assert np.ptp(truth) == 0 and truth[0] != 0
    for r in run_experiment(config, tmp_path):
        assert r.relative_error < 1e-3, r.solver


def test_noiseless_run_is_nearly_exact(tmp_path):
    config = small_config(offset="project", solvers=["sbl-em", "sbl-fast"],
                          noise=NoiseSpec(noiseless=True, seeds=[0]))
    out = run_experiment(config, tmp_path)
    assert all(r.relative_error < 1e-3 for r in out)
    rows = read_rows(tmp_path / "results.csv")
    assert all(r["snr_achieved_db"] == "inf" and r["snr_target_db"] == "" for r in rows)


def test_wall_time_is_opt_in(tmp_path):
    config = small_config(solvers=["sbl-fast"], noise=NoiseSpec(seeds=[0]))
    config = replace(config, output=replace(config.output, record_wall_time=True))
    run_experiment(config, tmp_path)
    assert float(read_rows(tmp_path / "results.csv")[0]["wall_ms"]) > 0


def test_failed_trial_is_recorded(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise FloatingPointError("injected")

    monkeypatch.setattr(runner, "sbl_em", boom)
    out = run_experiment(small_config(solvers=["analysis", "sbl-em"]), tmp_path)
    rows = {(r["seed"], r["solver"]): r for r in read_rows(tmp_path / "results.csv")}
    assert len(rows) == 4
    assert rows[("0", "sbl-em")]["relative_error"] == "nan"
    assert rows[("0", "sbl-em")]["converged"] == "false"
    assert np.isfinite(float(rows[("0", "analysis")]["relative_error"]))
    assert any("injected" in r.meta.get("error", "") for r in out)


def test_signal_round_trip(tmp_path):
    v = np.array([0.1, 1 / 3, -2e-17])
    img = np.arange(6.0).reshape(2, 3) / 7
    np.testing.assert_array_equal(read_signal(write_signal(tmp_path / "v.csv", v)), v)
    np.testing.assert_array_equal(read_signal(write_signal(tmp_path / "m.csv", img)), img)


def test_cli_denoise_and_phantom(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["denoise1d", "--size", "32", "--seeds", "0-1", "--snr", "12",
                 "--solver", "analysis,sbl-fast", "--out", str(out)]) == 0
    rows = read_rows(out / "results.csv")
    assert {r["solver"] for r in rows} == {"analysis", "sbl-fast"} and len(rows) == 4
    assert "median RE" in capsys.readouterr().out

    assert main(["phantom", "--kind", "image", "--size", "16", "--svg", "--out", str(tmp_path)]) == 0
    assert read_signal(tmp_path / "shepp-logan-16.csv").shape == (16, 16)
    assert (tmp_path / "shepp-logan-16.svg").read_text().startswith("<svg")


def test_cli_sweep_writes_curves(tmp_path):
    assert main(["sweep", "--size", "32", "--seeds", "0", "--out", str(tmp_path)]) == 0
    assert {r["solver"] for r in read_rows(tmp_path / "results.csv")} == {"analysis"}
    assert list((tmp_path / "curves").glob("*.csv"))


def test_cli_errors(tmp_path, capsys):
    assert main(["denoise1d", "--solver", "ridge", "--out", str(tmp_path)]) == 2
    assert "unknown solver" in capsys.readouterr().err
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[noise]\nsnr = 1\n")
    assert main(["denoise1d", "--config", str(cfg)]) == 2


def test_cli_selftest(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert main(["selftest", "--corrupt-pseudoinverse"]) == 1
    assert "FAIL" in capsys.readouterr().out
