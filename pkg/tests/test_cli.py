"""Command-line interface: argument wiring, outputs on disk, exit codes."""

from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import small_run_config
from posereid import cli
from posereid.config import save_config
from posereid.data import load_manifest
from posereid.pose import save_keypoint_file


@pytest.fixture()
def quick_config_file(tmp_path):
    """A one-epoch run config on disk for CLI commands that train."""
    cfg = small_run_config()
    cfg.train.epochs = 1
    path = tmp_path / "config.yaml"
    save_config(cfg, path)
    return path


def test_parser_wires_every_subcommand():
    parser = cli.build_parser()
    samples = {
        "gen-data": ["gen-data", "--out-dir", "d"],
        "train": ["train", "--data", "d", "--out-dir", "o"],
        "eval": ["eval", "--data", "d", "--checkpoint", "c", "--out-dir", "o"],
        "ablate": ["ablate", "--data", "d", "--out-dir", "o", "--param", "num_views"],
        "export-attention": [
            "export-attention", "--data", "d", "--checkpoint", "c", "--out-dir", "o",
        ],
        "run-recipe": ["run-recipe", "module-toggles", "--out-dir", "o"],
    }
    for command, argv in samples.items():
        args = parser.parse_args(argv)
        assert args.command == command
        assert callable(args.func)


def test_no_arguments_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as excinfo:
        cli.main([])
    assert excinfo.value.code == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_recipe_name_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["run-recipe", "no-such-recipe", "--out-dir", str(tmp_path)])
    assert excinfo.value.code == 2


def test_parse_values_converts_per_parameter():
    assert cli._parse_values("num_views", "1, 5,17") == [1, 5, 17]
    assert cli._parse_values("decoder_layers", "0,2") == [0, 2]
    assert cli._parse_values("conf_threshold", "0.1,0.5") == [0.1, 0.5]
    assert cli._parse_values("pose_noise_sigma", "0.0, 8.5") == [0.0, 8.5]
    assert cli._parse_values("modules", "none, full,") == ["none", "full"]


def test_gen_data_writes_loadable_dataset(tmp_path, quick_config_file, capsys):
    out = tmp_path / "ds"
    rc = cli.main(
        [
            "gen-data",
            "--out-dir", str(out),
            "--config", str(quick_config_file),
            "--seed", "7",
        ]
    )
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "wrote 32 records" in stdout
    for split in ("train", "query", "gallery"):
        assert split in stdout

    manifest = load_manifest(out)
    assert len(manifest.records) == 32
    # The --seed flag must override the seed stored in the config file.
    assert manifest.config.seed == 7


def test_train_cli_writes_checkpoint(tmp_path, tiny_data_dir, quick_config_file, capsys):
    out = tmp_path / "run"
    rc = cli.main(
        [
            "train",
            "--data", str(tiny_data_dir),
            "--out-dir", str(out),
            "--config", str(quick_config_file),
        ]
    )
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "trained" in stdout and "final loss" in stdout
    assert (out / "checkpoint_final.pt").is_file()
    assert (out / "metrics.jsonl").is_file()
    assert (out / "loss_curves.png").is_file()


def test_eval_cli_writes_report_files(tmp_path, tiny_data_dir, tiny_run, capsys):
    out = tmp_path / "eval"
    rc = cli.main(
        [
            "eval",
            "--data", str(tiny_data_dir),
            "--checkpoint", str(tiny_run.checkpoint_path),
            "--out-dir", str(out),
            "--max-rank", "5",
        ]
    )
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "Rank-1" in stdout and "report:" in stdout
    for name in ("eval_cmc.csv", "eval_cmc.png", "eval_summary.json", "eval_summary.txt"):
        assert (out / name).is_file(), name
    summary = json.loads((out / "eval_summary.json").read_text())
    assert len(summary["cmc"]) == 5


def test_eval_cli_accepts_external_keypoint_file(
    tmp_path, tiny_data_dir, tiny_manifest, tiny_run, capsys
):
    triplets = {
        r.image_id: np.column_stack([r.keypoints, r.visible.astype(np.float64)])
        for r in tiny_manifest.records
    }
    pose_file = tmp_path / "poses.jsonl"
    save_keypoint_file(pose_file, triplets)

    out = tmp_path / "eval"
    rc = cli.main(
        [
            "eval",
            "--data", str(tiny_data_dir),
            "--checkpoint", str(tiny_run.checkpoint_path),
            "--out-dir", str(out),
            "--pose-file", str(pose_file),
        ]
    )
    assert rc == 0
    assert (out / "eval_summary.json").is_file()
    capsys.readouterr()


def test_export_attention_cli_writes_one_map_per_view(
    tmp_path, tiny_data_dir, tiny_config, tiny_run, capsys
):
    out = tmp_path / "maps"
    rc = cli.main(
        [
            "export-attention",
            "--data", str(tiny_data_dir),
            "--checkpoint", str(tiny_run.checkpoint_path),
            "--out-dir", str(out),
        ]
    )
    assert rc == 0
    expected = tiny_config.model.num_views + 1  # per-view maps plus the fused one
    assert f"wrote {expected} maps" in capsys.readouterr().out
    pngs = sorted(out.glob("*.png"))
    assert len(pngs) == expected
    assert sum(1 for p in pngs if p.stem.endswith("_fused")) == 1


def test_export_attention_cli_respects_image_ids(
    tmp_path, tiny_data_dir, tiny_manifest, tiny_run, capsys
):
    wanted = [r.image_id for r in tiny_manifest.split("gallery")[:2]]
    out = tmp_path / "maps"
    rc = cli.main(
        [
            "export-attention",
            "--data", str(tiny_data_dir),
            "--checkpoint", str(tiny_run.checkpoint_path),
            "--out-dir", str(out),
            "--image-ids", ",".join(wanted),
        ]
    )
    assert rc == 0
    capsys.readouterr()
    for image_id in wanted:
        assert (out / f"{image_id}_fused.png").is_file()


def test_ablate_cli_eval_only_sweep(tmp_path, tiny_data_dir, quick_config_file, capsys):
    out = tmp_path / "ablation"
    rc = cli.main(
        [
            "ablate",
            "--data", str(tiny_data_dir),
            "--out-dir", str(out),
            "--config", str(quick_config_file),
            "--param", "pose_noise_sigma",
            "--values", "0.0,8.0",
        ]
    )
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "value" in stdout and "report:" in stdout
    assert (out / "table.csv").is_file()
    assert (out / "sweep.png").is_file()


def test_run_recipe_cli_prints_summary(tmp_path, monkeypatch, capsys):
    """The recipe command itself is glue; drive it with a stub recipe runner."""
    summary_text = "recipe: stub\nall properties passed\n"

    class StubResult:
        out_dir = tmp_path

    def stub_run_recipe(name, out_dir, seed=0, parallel=False):
        assert name == "module-toggles"
        assert seed == 3
        (tmp_path / "summary.txt").write_text(summary_text)
        return StubResult()

    monkeypatch.setattr(cli, "run_recipe", stub_run_recipe)
    rc = cli.main(["run-recipe", "module-toggles", "--out-dir", str(tmp_path), "--seed", "3"])
    assert rc == 0
    assert summary_text in capsys.readouterr().out


def test_errors_exit_one_with_message(tmp_path, tiny_data_dir, capsys):
    rc = cli.main(
        [
            "eval",
            "--data", str(tiny_data_dir),
            "--checkpoint", str(tmp_path / "missing.pt"),
            "--out-dir", str(tmp_path / "o"),
        ]
    )
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")

    rc = cli.main(
        [
            "ablate",
            "--data", str(tiny_data_dir),
            "--out-dir", str(tmp_path / "a"),
            "--param", "num_views",
        ]
    )
    assert rc == 1
    assert "--values is required" in capsys.readouterr().err


def test_module_and_console_entry_points():
    for argv in ([sys.executable, "-m", "posereid", "--help"], ["posereid", "--help"]):
        proc = subprocess.run(argv, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "gen-data" in proc.stdout
