"""Pose-guided transformer for occluded person re-identification.

Library layout:

- ``data``: synthetic dataset generator (stick figures, cameras, occluders)
- ``pose``: heatmap oracle, keypoint files, confidence labels, noise
- ``encoder``: patch embedding + camera-aware transformer encoder
- ``aggregation``: heatmap projection, pose gating, cosine match-and-sum
- ``decoder``: pose-weighted memory + learnable-view decoder + attention export
- ``matching``: view-to-aggregate matching and the confidence split
- ``losses``: identity / batch-hard triplet / push and branch combinations
- ``model``: the assembled network and its fixed-length retrieval descriptor
- ``pipeline``: training, checkpoints, descriptor extraction, ablations
- ``evaluation``: cosine-distance CMC / mAP retrieval metrics
- ``recipes``: scripted experiments with directional property checks
- ``cli``: the ``posereid`` command
"""

from .config import (
    AugmentConfig,
    DatasetConfig,
    EvalConfig,
    LossConfig,
    ModelConfig,
    OcclusionConfig,
    RunConfig,
    TrainConfig,
    config_from_dict,
    load_config,
    save_config,
)
from .data import (
    DatasetManifest,
    IdentitySpec,
    SampleRecord,
    augment_image,
    build_dataset,
    generate_identity,
    load_manifest,
    render_sample,
    save_manifest,
)
from .encoder import VisualEncoder, patch_count, patch_grid_shape
from .evaluation import EvalResult, cmc_map, cosine_distance_matrix
from .model import FeatureClassifiers, ModelOutput, ReidNet
from .pipeline import (
    DescriptorSet,
    IdentityBatchSampler,
    LoadedModel,
    RetrievalDescriptor,
    TrainingDiverged,
    TrainResult,
    ablate,
    evaluate,
    extract_descriptor,
    extract_descriptors,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .pose import (
    HeatmapSet,
    KeypointTruth,
    add_pose_noise,
    heatmaps_from_triplets,
    label_confidences,
    load_external_keypoints,
    load_keypoint_file,
    save_keypoint_file,
    synth_heatmaps,
)
from .recipes import RECIPES, run_recipe

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "DatasetConfig",
    "EvalConfig",
    "LossConfig",
    "ModelConfig",
    "OcclusionConfig",
    "RunConfig",
    "TrainConfig",
    "config_from_dict",
    "load_config",
    "save_config",
    "DatasetManifest",
    "IdentitySpec",
    "SampleRecord",
    "augment_image",
    "build_dataset",
    "generate_identity",
    "load_manifest",
    "render_sample",
    "save_manifest",
    "VisualEncoder",
    "patch_count",
    "patch_grid_shape",
    "EvalResult",
    "cmc_map",
    "cosine_distance_matrix",
    "FeatureClassifiers",
    "ModelOutput",
    "ReidNet",
    "DescriptorSet",
    "IdentityBatchSampler",
    "LoadedModel",
    "RetrievalDescriptor",
    "TrainingDiverged",
    "TrainResult",
    "ablate",
    "evaluate",
    "extract_descriptor",
    "extract_descriptors",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "HeatmapSet",
    "KeypointTruth",
    "add_pose_noise",
    "heatmaps_from_triplets",
    "label_confidences",
    "load_external_keypoints",
    "load_keypoint_file",
    "save_keypoint_file",
    "synth_heatmaps",
    "RECIPES",
    "run_recipe",
    "__version__",
]
