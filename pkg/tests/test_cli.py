"""End-to-end command-line flows and exit-code partitioning."""

import json

import pytest
import yaml
from click.testing import CliRunner

from signtune.cli import main
from signtune.schedule import AdaptiveFactorConfig, FactorTrace
from signtune.weights import load_checkpoint


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, runner):
    """Small synthetic dataset + prompts + zero-shot checkpoint."""
    ws = tmp_path_factory.mktemp("cli")
    r = runner.invoke(main, [
        "synth-data", "--classes", "4", "--regions", "2", "--per-class", "6",
        "--shift", "0.5", "--seed", "0", "--out", str(ws / "data"),
    ])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, [
        "gen-prompts", "--n-classes", "4", "--n-per-class", "2", "--seed", "0",
        "--out", str(ws / "prompts.jsonl"),
    ])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, [
        "zero-shot", "--prompts", str(ws / "prompts.jsonl"), "--seed", "0",
        "--out", str(ws / "zs"),
    ])
    assert r.exit_code == 0, r.output
    return ws


class TestGenPrompts:
    def test_default_cardinality(self, runner, tmp_path):
        r = runner.invoke(main, ["gen-prompts", "--out", str(tmp_path / "p.jsonl")])
        assert r.exit_code == 0
        assert "wrote 368 templates" in r.output

    def test_repeat_run_same_digest(self, runner, tmp_path):
        outputs = []
        for name in ("a", "b"):
            r = runner.invoke(main, [
                "gen-prompts", "--seed", "5", "--out", str(tmp_path / f"{name}.jsonl"),
            ])
            assert r.exit_code == 0
            outputs.append(r.output.rsplit("digest ", 1)[1])
        assert outputs[0] == outputs[1]

    def test_missing_pools_file_is_config_error(self, runner, tmp_path):
        r = runner.invoke(main, [
            "gen-prompts", "--pools", str(tmp_path / "nope.yaml"),
            "--out", str(tmp_path / "p.jsonl"),
        ])
        assert r.exit_code == 3

    def test_echoes_resolved_config_with_seed(self, runner, tmp_path):
        r = runner.invoke(main, [
            "gen-prompts", "--seed", "9", "--out", str(tmp_path / "p.jsonl"),
        ])
        line = r.output.splitlines()[0]
        assert line.startswith("[gen-prompts] resolved config:")
        assert json.loads(line.split("resolved config: ", 1)[1])["seed"] == 9


class TestSynthData:
    def test_writes_manifest_and_images(self, workspace):
        assert (workspace / "data" / "manifest" / "manifest.jsonl").exists()
        pngs = list((workspace / "data").rglob("*.png"))
        assert len(pngs) == 4 * 2 * 6

    def test_degenerate_sizes_exit_numeric(self, runner, tmp_path):
        r = runner.invoke(main, [
            "synth-data", "--classes", "1", "--out", str(tmp_path / "d"),
        ])
        assert r.exit_code == 5


class TestBuildManifest:
    def test_mapping_flow(self, runner, tmp_path):
        from PIL import Image

        src = tmp_path / "raw" / "stop"
        src.mkdir(parents=True)
        Image.new("RGB", (8, 8), (200, 0, 0)).save(src / "0.png")
        mapping = tmp_path / "map.yaml"
        mapping.write_text(yaml.safe_dump(
            {"sources": {"A": {"region": "Germany", "labels": {"stop": 0}}}}
        ))
        r = runner.invoke(main, [
            "build-manifest", "--mapping", str(mapping),
            "--source", f"A={tmp_path / 'raw'}", "--out", str(tmp_path / "m"),
        ])
        assert r.exit_code == 0, r.output
        assert "manifest: 1 records" in r.output

    def test_missing_source_flag_is_config_error(self, runner, tmp_path):
        mapping = tmp_path / "map.yaml"
        mapping.write_text(yaml.safe_dump({"sources": {}}))
        r = runner.invoke(main, ["build-manifest", "--mapping", str(mapping),
                                 "--out", str(tmp_path / "m")])
        assert r.exit_code == 3


class TestTrain:
    def test_adaptive_run_writes_artifacts(self, runner, workspace, tmp_path):
        out = tmp_path / "run"
        r = runner.invoke(main, [
            "train", "--strategy", "adwe",
            "--manifest", str(workspace / "data" / "manifest"),
            "--prompts", str(workspace / "prompts.jsonl"),
            "--train-regions", "R0", "--epochs", "3", "--batch-size", "8",
            "--init-from", str(workspace / "zs"), "--out", str(out),
        ])
        assert r.exit_code == 0, r.output
        trace = FactorTrace.from_csv(
            out / "trace.csv", AdaptiveFactorConfig(total_epochs=3)
        )
        assert [row.epoch for row in trace.rows] == [0, 1, 2]
        assert (out / "epochs.jsonl").read_text().count("\n") == 3
        assert json.loads((out / "config.json").read_text())["strategy"] == "adwe"
        ckpt = load_checkpoint(out / "checkpoint")
        assert ckpt.meta["strategy"] == "adwe"

    def test_wise_ft_without_inputs_is_config_error(self, runner, workspace, tmp_path):
        r = runner.invoke(main, [
            "train", "--strategy", "wise_ft",
            "--manifest", str(workspace / "data" / "manifest"),
            "--prompts", str(workspace / "prompts.jsonl"),
            "--train-regions", "R0", "--out", str(tmp_path / "run"),
        ])
        assert r.exit_code == 3

    def test_unknown_strategy_is_usage_error(self, runner, workspace):
        r = runner.invoke(main, [
            "train", "--strategy", "bogus",
            "--manifest", str(workspace / "data" / "manifest"),
            "--prompts", str(workspace / "prompts.jsonl"),
            "--train-regions", "R0",
        ])
        assert r.exit_code == 2

    def test_unknown_region_is_data_error(self, runner, workspace, tmp_path):
        r = runner.invoke(main, [
            "train", "--strategy", "full_ft",
            "--manifest", str(workspace / "data" / "manifest"),
            "--prompts", str(workspace / "prompts.jsonl"),
            "--train-regions", "Atlantis", "--out", str(tmp_path / "run"),
        ])
        assert r.exit_code == 4


class TestEnsembleAndEvaluate:
    def test_alpha_one_returns_zero_shot_weights(self, runner, workspace, tmp_path):
        r = runner.invoke(main, [
            "ensemble", "--zero-shot", str(workspace / "zs"),
            "--fine-tuned", str(workspace / "zs"), "--alpha", "1.0",
            "--out", str(tmp_path / "ens"),
        ])
        assert r.exit_code == 0, r.output
        assert (
            load_checkpoint(tmp_path / "ens").params.digest()
            == load_checkpoint(workspace / "zs").params.digest()
        )

    def test_evaluate_and_report(self, runner, workspace, tmp_path):
        for name in ("cand", "base"):
            r = runner.invoke(main, [
                "evaluate", "--checkpoint", str(workspace / "zs"),
                "--manifest", str(workspace / "data" / "manifest"),
                "--prompts", str(workspace / "prompts.jsonl"),
                "--train-regions", "R0", "--out", str(tmp_path / f"{name}.json"),
            ])
            assert r.exit_code == 0, r.output
            assert "Avg." in r.output
        r = runner.invoke(main, [
            "report", "--candidate", str(tmp_path / "cand.json"),
            "--baseline", str(tmp_path / "base.json"),
        ])
        assert r.exit_code == 0, r.output
        assert "delta: +0.00 percentage points" in r.output

    def test_evaluate_with_embedding_export(self, runner, workspace, tmp_path):
        r = runner.invoke(main, [
            "evaluate", "--checkpoint", str(workspace / "zs"),
            "--manifest", str(workspace / "data" / "manifest"),
            "--prompts", str(workspace / "prompts.jsonl"),
            "--train-regions", "R0", "--out", str(tmp_path / "rep.json"),
            "--export-embeddings", str(tmp_path / "emb"),
        ])
        assert r.exit_code == 0, r.output
        assert (tmp_path / "emb" / "embeddings.npy").exists()
        assert (tmp_path / "emb" / "samples.csv").exists()
