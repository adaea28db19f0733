import json

import numpy as np
import pytest

from bayescircuit.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, main
from bayescircuit.harness import ExperimentConfig, run_training, save_checkpoint
from bayescircuit.mlp import MlpParams


def small_config_file(tmp_path, **overrides):
    data = {"experiment": "colour", "n_t": 300, "n_v": 800, "epochs": 1, "seed": 5}
    data.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


class TestTrain:
    def test_train_writes_report(self, tmp_path, capsys):
        cfg = small_config_file(tmp_path)
        out = tmp_path / "out"
        code = main(["train", "--config", str(cfg), "--out", str(out)])
        assert code == EXIT_OK
        assert (out / "metrics.csv").exists()
        assert (out / "checkpoint.npz").exists()
        assert "r=" in capsys.readouterr().out

    def test_flags_override_config(self, tmp_path):
        cfg = small_config_file(tmp_path, code="orthogonal")
        out = tmp_path / "out"
        assert main(["train", "--config", str(cfg), "--code", "naive",
                     "--out", str(out)]) == EXIT_OK
        written = json.loads((out / "config.json").read_text())
        assert written["code"] == "naive"

    def test_missing_experiment_is_config_error(self, tmp_path, capsys):
        assert main(["train", "--out", str(tmp_path)]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_bad_config_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["train", "--config", str(bad)]) == EXIT_CONFIG

    def test_unknown_key_rejected(self, tmp_path):
        cfg = small_config_file(tmp_path)
        data = json.loads(cfg.read_text())
        data["momentum"] = 0.9
        cfg.write_text(json.dumps(data))
        assert main(["train", "--config", str(cfg)]) == EXIT_CONFIG


class TestValidate:
    def test_validate_checkpoint(self, tmp_path, capsys):
        config = ExperimentConfig("colour", n_t=300, n_v=500, epochs=1, seed=5)
        report = run_training(config)
        ckpt = tmp_path / "checkpoint.npz"
        save_checkpoint(ckpt, config, report.params)
        assert main(["validate", "--checkpoint", str(ckpt),
                     "--steps", "500"]) == EXIT_OK
        assert "E_Opt=" in capsys.readouterr().out

    def test_missing_checkpoint(self, tmp_path, capsys):
        missing = tmp_path / "nope.npz"
        assert main(["validate", "--checkpoint", str(missing)]) == EXIT_CONFIG

    def test_divergent_checkpoint(self, tmp_path, capsys):
        config = ExperimentConfig("colour", n_t=300, n_v=400, epochs=0, seed=5)
        params = MlpParams(
            np.zeros((config.d_h, config.d_n)),
            np.zeros(config.d_h),
            np.full((config.d_n, config.d_h), np.nan),
            np.zeros(config.d_n),
        )
        ckpt = tmp_path / "checkpoint.npz"
        save_checkpoint(ckpt, config, params)
        assert main(["validate", "--checkpoint", str(ckpt),
                     "--steps", "300"]) == EXIT_DIVERGED


class TestOracle:
    def test_emits_csv(self, capsys):
        assert main(["oracle", "--experiment", "track", "--steps", "20"]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("time,x_0,theta_0")
        assert len(lines) == 21

    def test_deterministic(self, capsys):
        main(["oracle", "--experiment", "colour", "--steps", "10", "--seed", "2"])
        first = capsys.readouterr().out
        main(["oracle", "--experiment", "colour", "--steps", "10", "--seed", "2"])
        assert capsys.readouterr().out == first


class TestTuning:
    @pytest.fixture
    def checkpoint(self, tmp_path):
        config = ExperimentConfig("colour", n_t=300, n_v=400, epochs=1, seed=5)
        report = run_training(config)
        ckpt = tmp_path / "checkpoint.npz"
        save_checkpoint(ckpt, config, report.params)
        return ckpt

    def test_default_bins(self, checkpoint, capsys):
        assert main(["tuning", "--checkpoint", str(checkpoint),
                     "--steps", "400"]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "unit,red,green,blue"
        assert len(lines) == 101

    def test_bad_bin_spec(self, checkpoint, capsys):
        assert main(["tuning", "--checkpoint", str(checkpoint),
                     "--bins", "3x", "--steps", "400"]) == EXIT_CONFIG


class TestSweep:
    def test_runs_all_four_variants(self, tmp_path, capsys):
        cfg = small_config_file(tmp_path, n_t=150, n_v=300)
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        dirs = sorted(p.name for p in out.iterdir())
        assert dirs == [
            "colour_naive_cd",
            "colour_naive_ef",
            "colour_orthogonal_cd",
            "colour_orthogonal_ef",
        ]
        for d in dirs:
            assert (out / d / "metrics.csv").exists()
