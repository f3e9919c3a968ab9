import json
import os

import numpy as np
import pytest

from autofuse.cli import main
from autofuse.experiment import (
    ExperimentConfig,
    load_run,
    read_metrics_csv,
    recompute_metrics,
    run_experiment,
)
from autofuse.synthetic import make_synthetic


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """One small experiment shared by the read-only assertions below."""
    tmp = tmp_path_factory.mktemp("tiny")
    info = make_synthetic("cross_modal_xor", 120, 0, str(tmp / "data"))
    config = ExperimentConfig(
        manifest=info["manifest_path"],
        k=2,
        valid_fraction=0.2,
        seeds=(0,),
        budgets={"tabular": 1, "imaging": 1, "late": 1, "early": 1, "joint": 1},
        ensemble_k=1,
        space="fast",
        output=str(tmp / "run"),
    )
    report = run_experiment(config)
    return config, report


def _config_file(tmp_path, n=120, seed=0, out="run", budgets=1):
    info = make_synthetic("cross_modal_xor", n, seed, str(tmp_path / "data"))
    payload = {
        "manifest": info["manifest_path"],
        "k": 2,
        "valid_fraction": 0.2,
        "seeds": [0],
        "budgets": {s: budgets for s in ("tabular", "imaging", "late", "early", "joint")},
        "ensemble_k": 1,
        "space": "fast",
        "output": str(tmp_path / out),
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return path, payload


class TestRunExperiment:
    def test_all_strategy_rows_present(self, tiny_run):
        config, _ = tiny_run
        rows = read_metrics_csv(os.path.join(config.output, "metrics.csv"))
        models = {row[0] for row in rows}
        assert models == {"tabular", "imaging", "late", "early", "joint", "ensemble"}

    def test_output_files_exist(self, tiny_run):
        config, _ = tiny_run
        for name in ("report.json", "metrics.csv", "trials.csv", "curves.csv", "folds.json", "schema.json"):
            assert os.path.isfile(os.path.join(config.output, name))
        assert os.path.isfile(os.path.join(config.output, "models", "seed0.json"))

    def test_metrics_recomputable_from_serialized_models(self, tiny_run):
        config, _ = tiny_run
        run = load_run(config.output)
        recomputed = recompute_metrics(run)
        stored = read_metrics_csv(os.path.join(config.output, "metrics.csv"))
        assert recomputed == stored

    def test_vertex_recovery_audits_all_pass(self, tiny_run):
        _, report = tiny_run
        audits = report.per_seed["0"]["weight_audits"]
        assert audits
        assert all(a["vertex_recovery_ok"] for a in audits)

    def test_conformal_and_curves_recorded(self, tiny_run):
        _, report = tiny_run
        seed_payload = report.per_seed["0"]
        assert len(seed_payload["conformal"]["per_fold"]) == 2
        assert seed_payload["acquisition"] is not None
        for policy, data in seed_payload["acquisition"].items():
            assert data["fractions"][0] == 0.0
            assert data["fractions"][-1] == 1.0


class TestCli:
    def test_search_and_post_hoc_commands(self, tmp_path):
        cfg_path, payload = _config_file(tmp_path)
        assert main(["search", "--config", str(cfg_path)]) == 0
        run_dir = payload["output"]

        assert main(["evaluate", "--run", run_dir]) == 0
        assert os.path.isfile(os.path.join(run_dir, "metrics_recomputed.csv"))

        assert main(["conformal", "--run", run_dir, "--alpha", "0.2"]) == 0
        assert os.path.isfile(os.path.join(run_dir, "conformal.csv"))

        assert main(["acquire", "--run", run_dir, "--fractions", "0,0.5,1"]) == 0
        assert os.path.isfile(os.path.join(run_dir, "curves_recomputed.csv"))

        assert main(["explain", "--run", run_dir, "--samples", "1", "--steps", "16", "--repeats", "2"]) == 0
        assert os.path.isfile(os.path.join(run_dir, "attributions.csv"))
        assert os.path.isfile(os.path.join(run_dir, "importance.csv"))

    def test_synth_command(self, tmp_path):
        out = tmp_path / "synth"
        assert main(["synth", "--kind", "exchangeable", "--n", "50", "--seed", "1", "--output", str(out)]) == 0
        assert (out / "manifest.json").is_file()

    def test_mismatched_embedding_ids_exit_code_and_message(self, tmp_path, capsys):
        info = make_synthetic("cross_modal_xor", 60, 0, str(tmp_path / "data"))
        emb = tmp_path / "data" / "image.csv"
        lines = emb.read_text().splitlines()
        lines[1] = "BROKEN" + lines[1][lines[1].index(",") :]
        emb.write_text("\n".join(lines) + "\n")
        payload = {
            "manifest": info["manifest_path"],
            "k": 2,
            "budgets": {s: 1 for s in ("tabular", "imaging", "late", "early", "joint")},
            "output": str(tmp_path / "run"),
        }
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(payload))
        assert main(["search", "--config", str(cfg)]) == 1
        err = capsys.readouterr().err
        assert "BROKEN" in err

    def test_bad_config_exit_code(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"not_manifest": True}))
        assert main(["search", "--config", str(cfg)]) == 1

    def test_aborted_run_is_flagged(self, tiny_run, tmp_path):
        config, _ = tiny_run
        import shutil

        broken = tmp_path / "broken_run"
        shutil.copytree(config.output, broken)
        (broken / "_INCOMPLETE").write_text("aborted\n")
        assert main(["evaluate", "--run", str(broken)]) == 1

    def test_seed_filter_on_post_hoc_commands(self, tiny_run):
        config, _ = tiny_run
        assert main(["evaluate", "--run", config.output, "--seed", "0"]) == 0
        assert main(["evaluate", "--run", config.output, "--seed", "99"]) == 1

    def test_seed_override(self, tmp_path):
        cfg_path, payload = _config_file(tmp_path, out="run_seed")
        assert main(["search", "--config", str(cfg_path), "--seed", "3", "--output", str(tmp_path / "run_seed")]) == 0
        report = json.loads((tmp_path / "run_seed" / "report.json").read_text())
        assert list(report["seeds"].keys()) == ["3"]


class TestDeterminism:
    def test_byte_identical_metrics(self, tmp_path):
        cfg_path, payload = _config_file(tmp_path, out="run_a")
        assert main(["search", "--config", str(cfg_path)]) == 0
        assert main(["search", "--config", str(cfg_path), "--output", str(tmp_path / "run_b")]) == 0
        a = (tmp_path / "run_a" / "metrics.csv").read_bytes()
        b = (tmp_path / "run_b" / "metrics.csv").read_bytes()
        assert a == b
        ta = (tmp_path / "run_a" / "trials.csv").read_bytes()
        tb = (tmp_path / "run_b" / "trials.csv").read_bytes()
        assert ta == tb
