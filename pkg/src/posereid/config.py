"""Run configuration: nested dataclasses with YAML/JSON (de)serialization.

A ``RunConfig`` fully determines a run: dataset synthesis, model shape,
loss weighting, optimization schedule, and evaluation protocol. Configs
round-trip through plain dicts so they can be embedded in checkpoints
and report directories.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


@dataclass
class OcclusionConfig:
    """Rectangle occluders painted over a rendered figure."""

    probability: float = 0.5
    max_boxes: int = 2
    min_area: float = 0.15
    max_area: float = 0.35
    # When true, occluders use body-like part colors instead of flat gray,
    # so they cannot be separated from the person by color alone.
    distractor: bool = False

    def validate(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"occlusion probability must be in [0, 1], got {self.probability}")
        if self.max_boxes < 1:
            raise ValueError("max_boxes must be >= 1")
        if not 0.0 <= self.min_area <= self.max_area:
            raise ValueError("need 0 <= min_area <= max_area")
        if not self.max_area < 1.0:
            raise ValueError(f"occlusion area fraction must lie in [0, 1), got {self.max_area}")


@dataclass
class DatasetConfig:
    """Synthetic person dataset: stick figures, cameras, occluders, splits."""

    num_identities: int = 8
    samples_per_identity: int = 16
    num_cameras: int = 4
    image_height: int = 64
    image_width: int = 32
    num_keypoints: int = 17
    pose_jitter: float = 0.02
    background_noise: float = 0.02
    train_fraction: float = 0.5
    seed: int = 0
    occlusion: OcclusionConfig = field(default_factory=OcclusionConfig)
    # Optional per-split overrides; None falls back to `occlusion`.
    query_occlusion: OcclusionConfig | None = None
    gallery_occlusion: OcclusionConfig | None = None

    def validate(self) -> None:
        if self.num_identities < 2:
            raise ValueError("need at least 2 identities")
        if self.num_cameras < 2:
            raise ValueError("need at least 2 cameras so queries can match cross-camera")
        if self.samples_per_identity < 4:
            raise ValueError("need >= 4 samples per identity to populate train/query/gallery")
        if self.image_height % 4 or self.image_width % 4:
            raise ValueError("image height and width must be divisible by 4 (heatmap grid)")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.num_keypoints < 1:
            raise ValueError("num_keypoints must be >= 1")
        for occ in (self.occlusion, self.query_occlusion, self.gallery_occlusion):
            if occ is not None:
                occ.validate()

    def occlusion_for_split(self, split: str) -> OcclusionConfig:
        if split == "query" and self.query_occlusion is not None:
            return self.query_occlusion
        if split == "gallery" and self.gallery_occlusion is not None:
            return self.gallery_occlusion
        return self.occlusion


@dataclass
class AugmentConfig:
    """Training-time image augmentation. Pose truth is never recomputed."""

    enabled: bool = True
    flip_probability: float = 0.5
    pad_pixels: int = 4
    erase_probability: float = 0.25
    erase_min_area: float = 0.05
    erase_max_area: float = 0.20

    def validate(self) -> None:
        for name in ("flip_probability", "erase_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.pad_pixels < 0:
            raise ValueError("pad_pixels must be >= 0")
        if not 0.0 <= self.erase_min_area <= self.erase_max_area < 1.0:
            raise ValueError("need 0 <= erase_min_area <= erase_max_area < 1")


@dataclass
class ModelConfig:
    """Shape and switches of the pose-guided re-identification network."""

    embed_dim: int = 64
    num_heads: int = 4
    encoder_layers: int = 4
    decoder_layers: int = 2
    patch_size: int = 8
    patch_stride: int = 8
    num_groups: int = 17
    num_views: int = 17
    camera_weight: float = 1.0
    conf_threshold: float = 0.2
    blob_sigma: float = 1.5
    # Module switches (ablations): pose-gated aggregation of group features,
    # view-to-aggregate matching with the confidence split, and heatmap
    # weighting of the decoder memory.
    use_pose_gating: bool = True
    use_view_matching: bool = True
    use_pose_memory: bool = True

    def validate(self, num_keypoints: int) -> None:
        if self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must be divisible by num_heads")
        if self.patch_stride > self.patch_size:
            raise ValueError("patch_stride must not exceed patch_size")
        if self.encoder_layers < 0 or self.decoder_layers < 0:
            raise ValueError("layer counts must be >= 0")
        if self.num_views < 1:
            raise ValueError("num_views must be >= 1")
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise ValueError("conf_threshold must be in [0, 1]")
        if self.use_pose_gating and self.num_groups != num_keypoints:
            raise ValueError(
                "pose gating requires num_groups == num_keypoints "
                f"(got {self.num_groups} groups, {num_keypoints} keypoints)"
            )


@dataclass
class LossConfig:
    encoder_weight: float = 0.5
    decoder_weight: float = 0.5
    triplet_margin: float = 0.3
    label_smoothing: float = 0.0
    use_push: bool = True


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_identities: int = 4
    batch_instances: int = 4
    base_lr: float = 0.008
    # The base learning rate is scaled by batch_size / lr_reference_batch.
    lr_reference_batch: int = 64
    momentum: float = 0.9
    weight_decay: float = 1e-4
    schedule: str = "cosine"  # "cosine" | "constant"
    deterministic: bool = True
    keep_all_checkpoints: bool = False
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_identities < 2:
            raise ValueError("batch_identities must be >= 2 (triplet loss needs negatives)")
        if self.batch_instances < 2:
            raise ValueError("batch_instances must be >= 2 (triplet loss needs positives)")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        self.augment.validate()

    @property
    def batch_size(self) -> int:
        return self.batch_identities * self.batch_instances


@dataclass
class EvalConfig:
    max_rank: int = 10


@dataclass
class RunConfig:
    seed: int = 0
    data: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        self.data.validate()
        self.model.validate(self.data.num_keypoints)
        self.train.validate()

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _build(cls: type, data: dict[str, Any], path: str) -> Any:
    """Hydrate a dataclass tree, rejecting unknown keys."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key not in fields:
            raise ValueError(f"unknown config key {path + key!r}")
        ftype = fields[key].type
        nested = _NESTED.get((cls.__name__, key))
        if nested is not None and value is not None:
            if not isinstance(value, dict):
                raise ValueError(f"config key {path + key!r} must be a mapping")
            kwargs[key] = _build(nested, value, path + key + ".")
        else:
            kwargs[key] = value
        del ftype
    return cls(**kwargs)


_NESTED: dict[tuple[str, str], type] = {
    ("RunConfig", "data"): DatasetConfig,
    ("RunConfig", "model"): ModelConfig,
    ("RunConfig", "loss"): LossConfig,
    ("RunConfig", "train"): TrainConfig,
    ("RunConfig", "eval"): EvalConfig,
    ("DatasetConfig", "occlusion"): OcclusionConfig,
    ("DatasetConfig", "query_occlusion"): OcclusionConfig,
    ("DatasetConfig", "gallery_occlusion"): OcclusionConfig,
    ("TrainConfig", "augment"): AugmentConfig,
}


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    cfg = _build(RunConfig, data, "")
    cfg.validate()
    return cfg


def dataset_config_from_dict(data: dict[str, Any]) -> DatasetConfig:
    cfg = _build(DatasetConfig, data, "data.")
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    """Load a RunConfig from a YAML or JSON file (by suffix)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
    else:
        data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must contain a mapping")
    return config_from_dict(data)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    path = Path(path)
    data = cfg.to_dict()
    if path.suffix == ".json":
        path.write_text(json.dumps(data, indent=2) + "\n")
    else:
        path.write_text(yaml.safe_dump(data, sort_keys=False))
