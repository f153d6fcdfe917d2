"""CLI: configuration handling, artifacts, exit codes, determinism."""

import filecmp
import os
import subprocess
import sys

import numpy as np
import pytest

from sigmor.bilinear import load_system, read_trajectory_csv
from sigmor.cli import (ExperimentConfig, cmd_evaluate, cmd_learn,
                        cmd_pipeline, cmd_reduce, cmd_simulate, load_config,
                        main, parse_config_text)
from sigmor.errors import ConfigError
from sigmor.learning import read_c_matrix_csv

TINY = """
# smoke-scale configuration
d = 6
N = 2
grid_points = 101
n_train = 12
n_test = 5
r_list = 1,2,3,4,6,10
k_values = 1,3
seed = 11
"""


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return path


def tiny_cfg():
    return load_config(None, env={}).validate() if False else ExperimentConfig(
        d=6, N=2, grid_points=101, n_train=12, n_test=5,
        r_list=[1, 2, 3, 4, 6, 10], k_values=[1, 3], seed=11)


class TestConfig:
    def test_defaults_are_desk_scale(self):
        cfg = ExperimentConfig()
        assert (cfg.d, cfg.N, cfg.n_train, cfg.n_test) == (100, 4, 200, 100)
        assert cfg.grid_points == 1001

    def test_parse_file_and_comments(self, tiny_config):
        cfg = load_config(tiny_config, env={})
        assert cfg.d == 6 and cfg.N == 2
        assert cfg.r_list == [1, 2, 3, 4, 6, 10]
        assert cfg.k_values == [1, 3]

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("nope = 3")

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigError, match="key d"):
            parse_config_text("d = banana")

    def test_invalid_dimension_names_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("d = 1\n")
        with pytest.raises(ConfigError, match="key d"):
            load_config(path, env={})

    def test_env_overrides(self, tiny_config):
        cfg = load_config(tiny_config, env={"SIGMOR_N": "3",
                                            "SIGMOR_R_LIST": "2,4"})
        assert cfg.N == 3
        assert cfg.r_list == [2, 4]

    def test_full_scale_preset(self):
        cfg = load_config(None, env={}, full_scale=True)
        assert (cfg.d, cfg.N, cfg.n_train, cfg.n_test) == (1000, 5, 1000, 1000)
        assert cfg.sig_dim == 364

    def test_r_list_bounds_checked(self):
        with pytest.raises(ConfigError, match="r_list"):
            ExperimentConfig(d=6, N=1, r_list=[5]).validate()


class TestCommands:
    def test_simulate_writes_one_file_per_k(self, tmp_path):
        cfg = tiny_cfg()
        paths = cmd_simulate(cfg, tmp_path / "out")
        assert [p.name for p in paths] == ["output_k0001.csv", "output_k0003.csv"]
        traj = read_trajectory_csv(paths[0])
        assert traj.values.shape == (101, 1)
        assert traj.grid[0] == 0.0 and traj.grid[-1] == 1.0

    def test_simulate_empty_k_list_is_success(self, tmp_path):
        cfg = tiny_cfg()
        cfg.k_values = []
        assert cmd_simulate(cfg, tmp_path / "out") == []

    def test_learn_reduce_evaluate_chain(self, tmp_path):
        out = tmp_path / "out"
        cfg = tiny_cfg()
        fit = cmd_learn(cfg, out)
        C, N, m = read_c_matrix_csv(out / "C_matrix.csv")
        np.testing.assert_array_equal(C, fit.C)
        assert (N, m) == (cfg.N, cfg.m)
        report = (out / "learn_report.csv").read_text()
        assert report.startswith("key,value")

        with pytest.warns(UserWarning):
            written = cmd_reduce(cfg, out)
        assert (out / "hankel.csv").exists()
        assert all(p.name.startswith("reduced_r") for p in written)
        # orders beyond the effective rank are skipped, the rest exist
        loaded = load_system(written[0])
        assert loaded.dim == 1

        rows = cmd_evaluate(cfg, out)
        assert [row[0] for row in rows] == sorted(row[0] for row in rows)
        errors = (out / "errors.csv").read_text().splitlines()
        assert errors[0] == "r,E_sig,E_MOR,E_red_sig"
        assert len(errors) == len(written) + 1
        # full-order row reproduces the signature error
        last = rows[-1]
        if last[0] == cfg.sig_dim:
            assert last[1] == pytest.approx(last[3], rel=1e-6)

    def test_reduce_mismatched_c_file(self, tmp_path):
        out = tmp_path / "out"
        cfg = tiny_cfg()
        cmd_learn(cfg, out)
        cfg_other = tiny_cfg()
        cfg_other.N = 1
        with pytest.raises(ConfigError, match="N"):
            cmd_reduce(cfg_other, out)

    def test_pipeline_runs_everything(self, tmp_path):
        out = tmp_path / "out"
        cfg = tiny_cfg()
        with pytest.warns(UserWarning):
            rows = cmd_pipeline(cfg, out)
        assert (out / "errors.csv").exists()
        assert (out / "C_matrix.csv").exists()
        assert (out / "hankel.csv").exists()
        assert len(rows) >= 1


class TestMainEntry:
    def test_exit_codes(self, tmp_path, tiny_config):
        bad_cfg = tmp_path / "bad.cfg"
        bad_cfg.write_text("d = 1\n")
        assert main(["simulate", "--config", str(bad_cfg)]) == 2
        missing = tmp_path / "nope.cfg"
        assert main(["simulate", "--config", str(missing)]) == 2
        # evaluate without artifacts is a numerical/usage failure
        out = tmp_path / "empty"
        out.mkdir()
        (out / "C_matrix.csv").write_text("3,1,2,2\n0,0,0\n")
        assert main(["evaluate", "--config", str(tiny_config),
                     "--out", str(out)]) == 3

    def test_main_simulate_smoke(self, tmp_path, tiny_config):
        out = tmp_path / "run"
        code = main(["simulate", "--config", str(tiny_config),
                     "--out", str(out)])
        assert code == 0
        assert (out / "output_k0001.csv").exists()

    def test_console_script_help(self):
        proc = subprocess.run([sys.executable, "-m", "sigmor.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "pipeline" in proc.stdout


class TestDeterminism:
    def test_pipeline_byte_identical_across_runs(self, tmp_path, tiny_config):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        env = dict(os.environ)
        env.pop("SIGMOR_BACKEND", None)
        for out in (out_a, out_b):
            proc = subprocess.run(
                [sys.executable, "-m", "sigmor.cli", "pipeline",
                 "--config", str(tiny_config), "--out", str(out),
                 "--threads", "1"],
                capture_output=True, text=True, env=env)
            assert proc.returncode == 0, proc.stderr
        names = sorted(p.name for p in out_a.iterdir())
        assert names == sorted(p.name for p in out_b.iterdir())
        match, mismatch, errors = filecmp.cmpfiles(out_a, out_b, names,
                                                   shallow=False)
        assert mismatch == [] and errors == []
        assert set(match) == set(names)

    def test_threads_do_not_change_results(self, tmp_path, tiny_config):
        out_a = tmp_path / "t1"
        out_b = tmp_path / "t4"
        cfg = load_config(tiny_config, env={})
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cmd_pipeline(cfg, out_a, threads=1)
            cmd_pipeline(cfg, out_b, threads=4)
        for name in ("errors.csv", "C_matrix.csv", "hankel.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
