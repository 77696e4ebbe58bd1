"""Configuration dataclasses: defaults, validation, round trips."""

import pytest

from posereid.config import (
    AugmentConfig,
    DatasetConfig,
    ModelConfig,
    OcclusionConfig,
    RunConfig,
    TrainConfig,
    config_from_dict,
    dataset_config_from_dict,
    load_config,
    save_config,
)


def test_default_config_is_valid():
    cfg = RunConfig()
    cfg.validate()
    assert cfg.model.num_groups == cfg.data.num_keypoints == 17
    assert cfg.train.batch_size == cfg.train.batch_identities * cfg.train.batch_instances


def test_to_dict_from_dict_round_trip():
    cfg = RunConfig()
    cfg.seed = 9
    cfg.model.embed_dim = 48
    cfg.data.occlusion.probability = 0.25
    cfg.train.augment.flip_probability = 0.75
    restored = config_from_dict(cfg.to_dict())
    assert restored.to_dict() == cfg.to_dict()


def test_from_dict_accepts_partial_overrides():
    cfg = config_from_dict({"seed": 3, "model": {"embed_dim": 16, "num_heads": 2}})
    assert cfg.seed == 3
    assert cfg.model.embed_dim == 16
    assert cfg.model.encoder_layers == ModelConfig().encoder_layers


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown"):
        config_from_dict({"model": {"embed_dims": 16}})
    with pytest.raises(ValueError, match="unknown"):
        config_from_dict({"optimizer": "sgd"})


def test_yaml_and_json_round_trip(tmp_path):
    cfg = RunConfig()
    cfg.model.num_views = 5
    for name in ("cfg.yaml", "cfg.json"):
        path = tmp_path / name
        save_config(cfg, path)
        loaded = load_config(path)
        assert loaded.to_dict() == cfg.to_dict()


def test_occlusion_validation():
    with pytest.raises(ValueError):
        OcclusionConfig(probability=1.5).validate()
    with pytest.raises(ValueError):
        OcclusionConfig(max_boxes=0).validate()
    with pytest.raises(ValueError):
        OcclusionConfig(min_area=0.5, max_area=0.2).validate()


def test_dataset_validation():
    with pytest.raises(ValueError):
        DatasetConfig(num_identities=0).validate()
    with pytest.raises(ValueError):
        DatasetConfig(train_fraction=1.5).validate()
    with pytest.raises(ValueError):
        DatasetConfig(num_cameras=0).validate()


def test_split_occlusion_overrides():
    cfg = DatasetConfig(
        occlusion=OcclusionConfig(probability=0.2),
        query_occlusion=OcclusionConfig(probability=0.9),
    )
    assert cfg.occlusion_for_split("train").probability == 0.2
    assert cfg.occlusion_for_split("query").probability == 0.9
    assert cfg.occlusion_for_split("gallery").probability == 0.2


def test_model_validation_gating_needs_group_per_keypoint():
    cfg = ModelConfig(num_groups=4, use_pose_gating=True)
    with pytest.raises(ValueError, match="group"):
        cfg.validate(num_keypoints=17)
    cfg = ModelConfig(num_groups=4, use_pose_gating=False)
    cfg.validate(num_keypoints=17)  # fine without gating


def test_model_validation_ranges():
    with pytest.raises(ValueError):
        ModelConfig(conf_threshold=1.5).validate(num_keypoints=17)
    with pytest.raises(ValueError):
        ModelConfig(num_views=0).validate(num_keypoints=17)
    with pytest.raises(ValueError):
        ModelConfig(decoder_layers=-1).validate(num_keypoints=17)


def test_train_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_identities=1).validate()
    with pytest.raises(ValueError):
        TrainConfig(batch_instances=1).validate()
    with pytest.raises(ValueError):
        TrainConfig(schedule="exotic").validate()
    with pytest.raises(ValueError):
        AugmentConfig(flip_probability=2.0).validate()


def test_dataset_config_from_dict():
    cfg = dataset_config_from_dict(
        {"num_identities": 5, "occlusion": {"probability": 0.1, "distractor": True}}
    )
    assert cfg.num_identities == 5
    assert cfg.occlusion.distractor is True
    with pytest.raises(ValueError, match="unknown"):
        dataset_config_from_dict({"identities": 5})
