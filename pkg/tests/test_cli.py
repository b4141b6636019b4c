import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from softseg.cli import main, parse_thresholds
from softseg.dataio import load_manifest, read_raster


def run_cli(*argv) -> int:
    return main(list(argv))


def tree_digest(root: Path) -> dict:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    """A small but trainable dataset shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli_data")
    code = run_cli(
        "gen-data", "--out", str(root), "--cases", "10", "--size", "16",
        "--annotators", "3", "--seed", "21",
    )
    assert code == 0
    return root / "manifest.json"


@pytest.fixture(scope="module")
def small_checkpoint(small_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_ckpt") / "model.sswt"
    code = run_cli(
        "train", "--manifest", str(small_dataset), "--loss", "ce",
        "--epochs", "2", "--batch", "4", "--seed", "21", "--out", str(out),
        "--base-channels", "4",
    )
    assert code == 0
    return out


class TestThresholdFlag:
    def test_default_flag_expands_to_nine(self):
        assert parse_thresholds("0.1:0.9:0.1") == [
            0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9,
        ]

    def test_single_value_range(self):
        assert parse_thresholds("0.5:0.5:0.1") == [0.5]

    def test_bad_specs_rejected(self):
        for spec in ("0.1:0.9", "a:b:c", "0.9:0.1:0.1", "0.1:0.9:0", "0:0.9:0.1"):
            with pytest.raises(ValueError):
                parse_thresholds(spec)


class TestGenData:
    def test_writes_manifest_and_defaults(self, small_dataset):
        manifest = load_manifest(small_dataset)
        assert len(manifest.cases) == 10
        assert len(manifest.cases[0].annotations) == 3
        assert manifest.meta["seed"] == 21

    def test_single_annotator_degenerate(self, tmp_path):
        code = run_cli(
            "gen-data", "--out", str(tmp_path), "--cases", "2", "--size", "16",
            "--annotators", "1", "--seed", "1",
        )
        assert code == 0
        manifest = load_manifest(tmp_path / "manifest.json")
        assert len(manifest.cases[0].annotations) == 1

    def test_repeat_run_identical_sha256(self, tmp_path):
        argv = ["gen-data", "--cases", "3", "--size", "16", "--seed", "77"]
        assert run_cli(*argv, "--out", str(tmp_path / "a")) == 0
        assert run_cli(*argv, "--out", str(tmp_path / "b")) == 0
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")

    def test_unknown_flag_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            run_cli("gen-data", "--out", str(tmp_path), "--bogus", "1")
        assert info.value.code == 2

    def test_invalid_value_exits_1(self, tmp_path, capsys):
        assert run_cli("gen-data", "--out", str(tmp_path), "--cases", "0") == 1
        assert "error" in capsys.readouterr().err


class TestFuse:
    def test_outputs_respect_granularity(self, small_dataset, tmp_path):
        out = tmp_path / "fused"
        assert run_cli("fuse", "--manifest", str(small_dataset), "--out", str(out)) == 0
        fused = read_raster(out / "case_000_fused.sseg")
        levels = (np.arange(4) / 3.0).astype(np.float32)
        assert np.isin(fused, levels).all()
        variance = read_raster(out / "case_000_variance.sseg")
        assert variance.min() >= 0.0 and variance.max() <= 0.25 + 1e-6

    def test_unanimous_annotations_stay_binary(self, tmp_path):
        run_cli(
            "gen-data", "--out", str(tmp_path / "d"), "--cases", "1", "--size", "16",
            "--annotators", "3", "--seed", "2", "--boundary-noise", "0",
            "--annotator-bias", "0",
        )
        out = tmp_path / "f"
        assert run_cli(
            "fuse", "--manifest", str(tmp_path / "d" / "manifest.json"),
            "--out", str(out),
        ) == 0
        fused = read_raster(out / "case_000_fused.sseg")
        assert np.isin(fused, (0.0, 1.0)).all()

    def test_rerun_idempotent(self, small_dataset, tmp_path):
        out = tmp_path / "fused"
        run_cli("fuse", "--manifest", str(small_dataset), "--out", str(out))
        first = tree_digest(out)
        run_cli("fuse", "--manifest", str(small_dataset), "--out", str(out))
        assert tree_digest(out) == first

    def test_missing_annotation_exits_1_naming_case(self, tmp_path, capsys):
        run_cli(
            "gen-data", "--out", str(tmp_path / "d"), "--cases", "2", "--size", "16",
            "--seed", "3",
        )
        (tmp_path / "d" / "case_001" / "annotator_2.pgm").unlink()
        code = run_cli(
            "fuse", "--manifest", str(tmp_path / "d" / "manifest.json"),
            "--out", str(tmp_path / "f"),
        )
        assert code == 1
        assert "case_001" in capsys.readouterr().err


class TestTrain:
    def test_smoke_run_writes_artifacts(self, small_checkpoint):
        assert small_checkpoint.exists()
        sidecar = json.loads(Path(str(small_checkpoint) + ".json").read_text())
        assert sidecar["model"]["base_channels"] == 4
        assert sidecar["train"]["loss"] == "ce"
        assert sidecar["seed"] == 21
        history = Path(str(small_checkpoint) + ".history.csv").read_text().splitlines()
        assert history[0] == "epoch,lr,train_loss,val_dsc_mean,val_dsc_std"
        assert len(history) == 1 + 2  # header + one row per epoch
        assert Path(str(small_checkpoint) + ".history.png").exists()

    def test_zero_epochs_rejected(self, small_dataset, tmp_path, capsys):
        code = run_cli(
            "train", "--manifest", str(small_dataset), "--epochs", "0",
            "--out", str(tmp_path / "m.sswt"),
        )
        assert code == 1
        assert "epochs" in capsys.readouterr().err


class TestEval:
    def test_eval_writes_reports_and_figures(self, small_dataset, small_checkpoint, tmp_path):
        out = tmp_path / "report"
        code = run_cli(
            "eval", "--manifest", str(small_dataset), "--checkpoint",
            str(small_checkpoint), "--out", str(out), "--seed", "21",
        )
        assert code == 0
        doc = json.loads((out / "report.json").read_text())
        assert doc["metadata"]["thresholds"] == [
            0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9,
        ]
        assert doc["metadata"]["seed"] == 21
        # identity audit on the emitted ged rows, full precision
        for entry in doc["ged"]:
            assert entry["d2_ged"] == pytest.approx(
                2 * entry["expected_distance"] - entry["diversity"], abs=1e-12
            )
        assert (out / "metrics.csv").exists()
        assert (out / "summary.csv").exists()
        assert (out / "ged.csv").exists()
        assert (out / "sweep_metrics.png").exists()
        assert (out / "ged_decomposition.png").exists()

    def test_no_figures_flag(self, small_dataset, small_checkpoint, tmp_path):
        out = tmp_path / "nofigs"
        code = run_cli(
            "eval", "--manifest", str(small_dataset), "--checkpoint",
            str(small_checkpoint), "--out", str(out), "--no-figures",
        )
        assert code == 0
        assert not (out / "sweep_metrics.png").exists()
        assert (out / "report.json").exists()

    def test_row_count_and_order(self, small_dataset, small_checkpoint, tmp_path):
        out = tmp_path / "rows"
        run_cli(
            "eval", "--manifest", str(small_dataset), "--checkpoint",
            str(small_checkpoint), "--out", str(out), "--split", "all",
        )
        lines = (out / "metrics.csv").read_text().splitlines()
        assert len(lines) == 1 + 10 * 9  # header + cases x thresholds
        assert lines[1].startswith("case_000,0.1000")
        assert lines[10].startswith("case_001,0.1000")

    def test_missing_checkpoint_exits_1_with_path(self, small_dataset, tmp_path, capsys):
        code = run_cli(
            "eval", "--manifest", str(small_dataset), "--checkpoint",
            str(tmp_path / "ghost.sswt"), "--out", str(tmp_path / "r"),
        )
        assert code == 1
        assert "ghost.sswt" in capsys.readouterr().err

    def test_custom_threshold_range(self, small_dataset, small_checkpoint, tmp_path):
        out = tmp_path / "custom"
        code = run_cli(
            "eval", "--manifest", str(small_dataset), "--checkpoint",
            str(small_checkpoint), "--out", str(out), "--thresholds", "0.25:0.75:0.25",
        )
        assert code == 0
        doc = json.loads((out / "report.json").read_text())
        assert doc["metadata"]["thresholds"] == [0.25, 0.5, 0.75]

    def test_threads_env_respected(self, small_dataset, small_checkpoint, tmp_path, monkeypatch):
        monkeypatch.setenv("SOFTSEG_THREADS", "1")
        out_serial = tmp_path / "serial"
        assert run_cli(
            "eval", "--manifest", str(small_dataset), "--checkpoint",
            str(small_checkpoint), "--out", str(out_serial),
        ) == 0
        monkeypatch.setenv("SOFTSEG_THREADS", "4")
        out_parallel = tmp_path / "parallel"
        assert run_cli(
            "eval", "--manifest", str(small_dataset), "--checkpoint",
            str(small_checkpoint), "--out", str(out_parallel),
        ) == 0
        assert tree_digest(out_serial) == tree_digest(out_parallel)
