"""Training pipeline: sampler, determinism, checkpoints, evaluation, ablation."""

import copy
import json

import numpy as np
import pytest
import torch

from posereid.config import RunConfig
from posereid.pipeline import (
    MODULE_TOGGLE_ROWS,
    IdentityBatchSampler,
    TrainingDiverged,
    _learning_rate,
    ablate,
    apply_module_toggles,
    evaluate,
    extract_descriptor,
    extract_descriptors,
    load_checkpoint,
    oracle_heatmaps,
    prepare_split_arrays,
    train,
    truth_from_record,
)
from posereid.pose import synth_heatmaps

from conftest import small_run_config


def test_sampler_batch_composition():
    targets = np.repeat(np.arange(6), 5)
    rng = np.random.default_rng(0)
    sampler = IdentityBatchSampler(targets, ids_per_batch=3, instances_per_id=2, rng=rng)
    assert sampler.batches_per_epoch == 2
    for _ in range(5):
        batches = sampler.epoch_batches()
        assert len(batches) == 2
        seen_ids = []
        for batch in batches:
            assert len(batch) == 6
            ids = targets[batch]
            unique, counts = np.unique(ids, return_counts=True)
            assert len(unique) == 3
            assert (counts == 2).all()
            seen_ids.extend(unique.tolist())
        # Identities never repeat across batches within one epoch.
        assert len(set(seen_ids)) == len(seen_ids)


def test_sampler_samples_without_replacement_when_possible():
    targets = np.repeat(np.arange(2), 4)
    sampler = IdentityBatchSampler(targets, 2, 3, np.random.default_rng(1))
    for batch in sampler.epoch_batches():
        for ident in np.unique(targets[batch]):
            chosen = batch[targets[batch] == ident]
            assert len(np.unique(chosen)) == len(chosen)


def test_sampler_replacement_when_short():
    targets = np.array([0, 0, 1, 1, 1])
    sampler = IdentityBatchSampler(targets, 2, 4, np.random.default_rng(2))
    batches = sampler.epoch_batches()
    assert all(len(b) == 8 for b in batches)


def test_sampler_rejects_too_few_identities():
    with pytest.raises(ValueError):
        IdentityBatchSampler(np.zeros(10), 2, 2, np.random.default_rng(0))


def test_learning_rate_schedule():
    cfg = RunConfig()
    cfg.train.base_lr = 0.008
    cfg.train.batch_identities = 4
    cfg.train.batch_instances = 4
    base = 0.008 * 16 / 64
    assert _learning_rate(cfg, 0, 100) == pytest.approx(base)
    assert _learning_rate(cfg, 50, 100) == pytest.approx(base * 0.5)
    assert _learning_rate(cfg, 100, 100) == pytest.approx(0.0, abs=1e-15)
    cfg.train.schedule = "constant"
    assert _learning_rate(cfg, 99, 100) == pytest.approx(base)


def test_oracle_heatmaps_match_pose_module(tiny_manifest):
    record = tiny_manifest.records[0]
    hs = oracle_heatmaps(record, (64, 32), blob_sigma=1.5, threshold=0.2)
    direct = synth_heatmaps(truth_from_record(record), (64, 32), 1.5, 0.2)
    np.testing.assert_array_equal(hs.maps, direct.maps)
    np.testing.assert_array_equal(hs.labels, direct.labels)


def test_prepare_split_arrays_shapes(tiny_manifest):
    arrays = prepare_split_arrays(tiny_manifest, "train", blob_sigma=1.5, threshold=0.2)
    n = len(tiny_manifest.split("train"))
    assert arrays.images.shape == (n, 64, 32, 3)
    assert arrays.heatmaps.shape == (n, 17, 16, 8)
    assert arrays.labels.shape == (n, 17)
    assert arrays.identity_ids.shape == (n,)
    assert len(arrays.image_ids) == n
    assert arrays.images.dtype == np.float32


def test_prepare_split_arrays_pose_noise(tiny_manifest):
    base = prepare_split_arrays(tiny_manifest, "query", 1.5, 0.2)
    noisy = prepare_split_arrays(
        tiny_manifest, "query", 1.5, 0.2,
        pose_noise_sigma=0.5, noise_rng=np.random.default_rng(0),
    )
    assert not np.array_equal(base.heatmaps, noisy.heatmaps)
    assert (noisy.heatmaps >= 0).all()


def test_train_produces_artifacts(tiny_run):
    assert tiny_run.checkpoint_path.name == "checkpoint_final.pt"
    assert tiny_run.checkpoint_path.exists()
    assert (tiny_run.out_dir / "checkpoint_last.pt").exists()
    assert (tiny_run.out_dir / "loss_curves.png").exists()
    lines = tiny_run.metrics_path.read_text().strip().splitlines()
    assert len(lines) == tiny_run.total_steps
    record = json.loads(lines[-1])
    for key in ("step", "epoch", "lr", "loss", "encoder_loss", "decoder_loss", "push_loss"):
        assert key in record
    assert record["loss"] == pytest.approx(tiny_run.final_loss)


def test_training_is_deterministic(tiny_config, tiny_manifest, tmp_path):
    cfg_a = copy.deepcopy(tiny_config)
    cfg_b = copy.deepcopy(tiny_config)
    res_a = train(cfg_a, tiny_manifest, tmp_path / "a")
    res_b = train(cfg_b, tiny_manifest, tmp_path / "b")
    assert res_a.metrics_path.read_bytes() == res_b.metrics_path.read_bytes()


def test_checkpoint_round_trip_descriptor_bitwise(tiny_run, tiny_manifest):
    loaded_a = load_checkpoint(tiny_run.checkpoint_path)
    loaded_b = load_checkpoint(tiny_run.checkpoint_path)
    record = tiny_manifest.split("query")[0]
    hs = oracle_heatmaps(record, (64, 32), 1.5, 0.2)
    desc_a = extract_descriptor(loaded_a, record.image, record.camera_id, hs)
    desc_b = extract_descriptor(loaded_b, record.image, record.camera_id, hs)
    assert np.array_equal(desc_a.vector, desc_b.vector)
    assert np.array_equal(desc_a.valid_mask, desc_b.valid_mask)
    assert desc_a.vector.shape == (loaded_a.net.descriptor_length,)


def test_loaded_model_metadata(tiny_run, tiny_config):
    loaded = load_checkpoint(tiny_run.checkpoint_path)
    assert loaded.num_keypoints == 17
    assert loaded.num_cameras == tiny_config.data.num_cameras
    assert loaded.image_hw == (64, 32)
    assert loaded.class_ids == list(range(tiny_config.data.num_identities))
    assert not loaded.net.training  # eval mode


def test_extract_descriptors_matches_single(tiny_run, tiny_manifest):
    loaded = load_checkpoint(tiny_run.checkpoint_path)
    dset = extract_descriptors(loaded, tiny_manifest, "query", batch_size=3)
    records = tiny_manifest.split("query")
    assert dset.vectors.shape == (len(records), loaded.net.descriptor_length)
    one = extract_descriptor(
        loaded,
        records[2].image,
        records[2].camera_id,
        oracle_heatmaps(records[2], (64, 32), 1.5, 0.2),
    )
    np.testing.assert_allclose(dset.vectors[2], one.vector, atol=1e-5)
    assert dset.identity_ids[2] == records[2].identity_id
    assert dset.image_ids[2] == records[2].image_id


def test_evaluate_runs(tiny_run, tiny_manifest):
    loaded = load_checkpoint(tiny_run.checkpoint_path)
    result, qset, gset = evaluate(loaded, tiny_manifest, max_rank=5)
    assert len(result.cmc) == 5
    assert 0.0 <= result.mean_ap <= 1.0
    assert result.num_valid_queries + result.num_skipped_queries == len(qset.vectors)
    assert np.all(np.diff(result.cmc) >= 0)  # CMC is non-decreasing


def test_training_diverged_raises(tiny_config, tiny_manifest, tmp_path, monkeypatch):
    import posereid.pipeline as pipeline_module

    def poisoned(out, heads, targets_t, loss_cfg):
        nan = torch.tensor(float("nan"), requires_grad=True)
        return nan, nan, nan, nan

    monkeypatch.setattr(pipeline_module, "_compute_losses", poisoned)
    cfg = copy.deepcopy(tiny_config)
    with pytest.raises(TrainingDiverged) as exc_info:
        train(cfg, tiny_manifest, tmp_path / "diverge")
    assert exc_info.value.checkpoint_path is None or exc_info.value.checkpoint_path.exists()


def test_module_toggle_rows_cover_expected_grid():
    names = [name for name, _ in MODULE_TOGGLE_ROWS]
    assert names[0] == "none" and names[-1] == "full"
    assert len(names) == len(set(names)) == 6
    rows = dict(MODULE_TOGGLE_ROWS)
    assert rows["full"] == {"gating": True, "matching": True, "push": True, "memory": True}
    assert not any(rows["none"].values())
    # Single-module-removed variants all exist among the rows.
    assert rows["gating+matching"]["push"] is False
    assert rows["matching+push"]["gating"] is False
    assert rows["gating"]["matching"] is False


def test_apply_module_toggles_copies_config(tiny_config):
    toggled = apply_module_toggles(tiny_config, dict(MODULE_TOGGLE_ROWS)["none"])
    assert toggled is not tiny_config
    assert toggled.model.use_pose_gating is False
    assert toggled.model.use_view_matching is False
    assert toggled.model.use_pose_memory is False
    assert toggled.loss.use_push is False
    assert tiny_config.model.use_pose_gating is True  # original untouched


def test_ablate_modules_smoke(tiny_data_dir, tmp_path):
    cfg = small_run_config()
    cfg.train.epochs = 1
    report = ablate(
        cfg, tiny_data_dir, "modules", ["none", "full"], tmp_path / "abl", seeds=[1]
    )
    assert {row["value"] for row in report.rows} == {"none", "full"}
    assert all(0.0 <= row["map"] <= 1.0 for row in report.rows)
    assert (tmp_path / "abl" / "table.csv").exists()
    assert (tmp_path / "abl" / "summary.csv").exists()
    assert (tmp_path / "abl" / "sweep.png").exists()
    assert (tmp_path / "abl" / "report.json").exists()
    assert (tmp_path / "abl" / "config.yaml").exists()


def test_ablate_pose_noise_reuses_base_checkpoint(tiny_data_dir, tmp_path):
    cfg = small_run_config()
    cfg.train.epochs = 1
    report = ablate(
        cfg, tiny_data_dir, "pose_noise_sigma", [0.0, 0.5], tmp_path / "abl", seeds=[1]
    )
    checkpoints = {row["checkpoint"] for row in report.rows}
    assert len(checkpoints) == 1  # trained once, evaluated twice
    sig0 = [r for r in report.rows if r["value"] == 0.0][0]
    sig5 = [r for r in report.rows if r["value"] == 0.5][0]
    assert sig0["map"] != sig5["map"] or sig0["rank1"] != sig5["rank1"]


def test_ablate_rejects_unknown_param(tiny_data_dir, tmp_path):
    with pytest.raises(ValueError):
        ablate(small_run_config(), tiny_data_dir, "nonsense", [1], tmp_path / "x")
