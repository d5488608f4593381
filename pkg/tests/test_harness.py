import json

import numpy as np
import pytest

from percdiff.contribution import uniform_profile
from percdiff.harness import (ConfigError, ExperimentConfig, build_datasets,
                              estimate_profile, main, run_ablation, run_trace,
                              run_training, standard_ablation_grid)

TINY = {
    "schedule": {"T": 50},
    "task": {"train_scenes": 32, "val_scenes": 8, "data_seed": 3},
    "model": {"hidden": [16], "time_emb_dim": 8},
    "train": {"epochs": 1, "batch_size": 16, "target_kind": "x0"},
    "eval": {"steps": 10, "samples": 8},
}


@pytest.fixture(scope="module")
def tiny_config():
    return ExperimentConfig.from_dict(TINY)


class TestConfig:
    def test_defaults_complete(self):
        c = ExperimentConfig.from_dict()
        assert c.data["schedule"]["T"] == 1000
        assert c.data["train"]["strategy"] == "uniform"

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"scheduler": {}})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"train": {"learning_rte": 0.1}})

    def test_json_round_trip(self, tiny_config):
        back = ExperimentConfig.from_json(tiny_config.to_json())
        assert back.data == tiny_config.data
        assert back.config_hash == tiny_config.config_hash

    def test_hash_changes_with_content(self, tiny_config):
        other = tiny_config.with_overrides({"train.seed": 5})
        assert other.config_hash != tiny_config.config_hash

    def test_dot_path_overrides(self, tiny_config):
        c = tiny_config.with_overrides({"train.strategy": "prob_scaling",
                                        "eval.steps": 25})
        assert c.data["train"]["strategy"] == "prob_scaling"
        assert c.data["eval"]["steps"] == 25
        # original untouched
        assert tiny_config.data["eval"]["steps"] == 10

    def test_unknown_dot_path(self, tiny_config):
        with pytest.raises(ConfigError):
            tiny_config.with_overrides({"train.gamma": 1})
        with pytest.raises(ConfigError):
            tiny_config.with_overrides({"optimizer.lr": 1})

    def test_typed_views(self, tiny_config):
        assert tiny_config.schedule().T == 50
        assert tiny_config.model_config().hidden == (16,)
        assert tiny_config.train_config().epochs == 1
        assert tiny_config.guidance_weights().w_cond == 3.0


class TestDatasets:
    def test_deterministic(self, tiny_config):
        a_train, a_val = build_datasets(tiny_config)
        b_train, b_val = build_datasets(tiny_config)
        assert len(a_train) == 32 and len(a_val) == 8
        assert np.array_equal(a_train.scenes[0].grid, b_train.scenes[0].grid)
        # train and val draw from different seeds
        assert not np.array_equal(a_train.scenes[0].grid, a_val.scenes[0].grid)


class TestRunTraining:
    def test_artifacts(self, tiny_config, tmp_path):
        rec = run_training(tiny_config, tmp_path, run_id="t1")
        d = tmp_path / "t1"
        assert (d / "config.json").exists()
        assert (d / "checkpoint.bin").exists()
        assert (d / "train_log.csv").exists()
        report = json.loads((d / "report.json").read_text())
        assert report["run_id"] == "t1"
        assert "eval" in report
        assert rec.final_oiou == report["eval"]["final_oiou"]
        assert "best_checkpoint_t" in report["eval"]
        # saved config reproduces the hash
        back = ExperimentConfig.from_json((d / "config.json").read_text())
        assert back.config_hash == tiny_config.config_hash

    def test_trace_and_profile(self, tiny_config, tmp_path):
        rec = run_training(tiny_config, tmp_path, run_id="t2", evaluate=False)
        train_ds, _ = build_datasets(tiny_config)  # profile fit needs >= 3B rows
        trace = run_trace(tiny_config, rec.checkpoint_path,
                          out_path=tmp_path / "trace.csv", dataset=train_ds)
        assert trace.checkpoints.shape == (32, 10)
        assert (tmp_path / "trace.csv").exists()
        prof = estimate_profile(tiny_config, trace)
        assert prof.source == "statistics"
        assert abs(prof.weights.sum() - 1.0) < 1e-9
        sched_prof = estimate_profile(tiny_config, None)
        assert sched_prof.source == "schedule"


class TestAblation:
    def test_standard_grid_runs(self, tiny_config, tmp_path):
        prof_path = tmp_path / "profile.json"
        prof_path.write_text(uniform_profile(50, 10).to_json())
        grid = standard_ablation_grid(tiny_config, str(prof_path))
        assert [name for name, _ in grid] == ["uniform", "prob_stats", "full"]
        report = run_ablation(grid, seeds=[0], runs_dir=tmp_path / "runs")
        assert len(report["cells"]) == 3
        for cell in report["cells"]:
            assert cell["failed"] == []
            assert cell["oiou_mean"] is not None
        assert (tmp_path / "runs" / "ablation_report.json").exists()
        csv_text = (tmp_path / "runs" / "ablation_report.csv").read_text()
        assert csv_text.splitlines()[0] == "name,oiou_mean,oiou_std,n_ok,n_failed"


class TestCli:
    def _flags(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(TINY))
        return ["--config", str(cfg_path)]

    def test_gen_data(self, tmp_path, capsys):
        assert main(self._flags(tmp_path) + ["gen-data", "--out",
                                             str(tmp_path / "data")]) == 0
        assert (tmp_path / "data" / "train").exists()
        assert "32 train / 8 val" in capsys.readouterr().out

    def test_estimate_schedule_derived(self, tmp_path, capsys):
        out = tmp_path / "prof.json"
        assert main(self._flags(tmp_path) + ["estimate", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["source"] == "schedule"
        assert len(doc["weights"]) == 10

    def test_train_eval_trace_workflow(self, tmp_path, capsys):
        flags = self._flags(tmp_path)
        assert main(flags + ["train", "--runs", str(tmp_path / "runs"),
                             "--run-id", "cli"]) == 0
        ck = tmp_path / "runs" / "cli" / "checkpoint.bin"
        assert ck.exists()
        capsys.readouterr()

        assert main(flags + ["eval", "--checkpoint", str(ck)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert "final_oiou" in doc and "best_checkpoint_t" in doc

        trace_out = tmp_path / "trace.csv"
        assert main(flags + ["trace", "--checkpoint", str(ck),
                             "--out", str(trace_out)]) == 0
        assert trace_out.exists()
        capsys.readouterr()

        assert main(flags + ["--set", "workflow.steps=10",
                             "workflow", "--checkpoint", str(ck), "--k", "2"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert "iou" in doc and "provenance" in doc

    def test_set_override_applies(self, tmp_path, capsys):
        out = tmp_path / "prof.json"
        assert main(self._flags(tmp_path)
                    + ["--set", "train.groups=5",
                       "estimate", "--out", str(out)]) == 0
        assert len(json.loads(out.read_text())["weights"]) == 5

    def test_bad_override_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            main(self._flags(tmp_path) + ["--set", "train.nope=1",
                                          "estimate", "--out", "x.json"])
