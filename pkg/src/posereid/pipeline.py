"""Training, checkpointing, descriptor extraction, evaluation, ablation.

Training is plain SGD with momentum and a cosine-decayed learning rate whose
base value scales with batch size. Batches are identity-balanced (P
identities x K instances). Runs write a JSONL metrics log, a rolling
per-epoch checkpoint, a final checkpoint with the full config embedded, and
a loss-curve figure. Deterministic mode makes same-seed runs byte-identical.
"""

from __future__ import annotations

import copy
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .config import RunConfig, config_from_dict, save_config
from .data import DatasetManifest, SampleRecord, augment_image, load_manifest
from .evaluation import EvalResult, cmc_map, cosine_distance_matrix
from .losses import decoder_loss, encoder_loss, identity_loss, push_loss, total_loss, triplet_loss
from .model import FeatureClassifiers, ModelOutput, ReidNet
from .pose import HeatmapSet, KeypointTruth, add_pose_noise, heatmaps_from_triplets, synth_heatmaps
from .reporting import metrics_line, plot_sweep, plot_training_curves, write_csv

__all__ = [
    "IdentityBatchSampler",
    "TrainingDiverged",
    "TrainResult",
    "LoadedModel",
    "DescriptorSet",
    "set_determinism",
    "truth_from_record",
    "oracle_heatmaps",
    "prepare_split_arrays",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "extract_descriptor",
    "extract_descriptors",
    "evaluate",
    "ablate",
    "MODULE_TOGGLE_ROWS",
    "apply_module_toggles",
]


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; carries the last good checkpoint."""

    def __init__(self, message: str, checkpoint_path: Path | None) -> None:
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


def set_determinism(seed: int, deterministic: bool = True) -> None:
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)


class IdentityBatchSampler:
    """Yields index batches of `ids_per_batch` identities x `instances` each.

    Identities are shuffled every epoch; instances sample without
    replacement when an identity has enough records, with replacement
    otherwise.
    """

    def __init__(
        self,
        targets: np.ndarray,
        ids_per_batch: int,
        instances_per_id: int,
        rng: np.random.Generator,
    ) -> None:
        self.targets = np.asarray(targets)
        self.ids_per_batch = ids_per_batch
        self.instances = instances_per_id
        self.rng = rng
        self.unique_ids = np.unique(self.targets)
        if len(self.unique_ids) < ids_per_batch:
            raise ValueError(
                f"batch needs {ids_per_batch} distinct identities, dataset has "
                f"{len(self.unique_ids)}"
            )
        self.indices_by_id = {t: np.flatnonzero(self.targets == t) for t in self.unique_ids}

    @property
    def batches_per_epoch(self) -> int:
        return max(1, len(self.unique_ids) // self.ids_per_batch)

    def epoch_batches(self) -> list[np.ndarray]:
        order = self.rng.permutation(self.unique_ids)
        batches = []
        for b in range(self.batches_per_epoch):
            chosen = order[b * self.ids_per_batch : (b + 1) * self.ids_per_batch]
            parts = []
            for ident in chosen:
                pool = self.indices_by_id[ident]
                replace = len(pool) < self.instances
                parts.append(self.rng.choice(pool, size=self.instances, replace=replace))
            batches.append(np.concatenate(parts))
        return batches


def truth_from_record(record: SampleRecord) -> KeypointTruth:
    return KeypointTruth(
        points=record.keypoints,
        visible=record.visible,
        occluder_boxes=list(record.occluder_boxes),
    )


def oracle_heatmaps(record: SampleRecord, image_hw: tuple[int, int], blob_sigma: float, threshold: float) -> HeatmapSet:
    return synth_heatmaps(truth_from_record(record), image_hw, blob_sigma, threshold)


@dataclass
class SplitArrays:
    """Tensors-in-waiting for one split, heatmaps precomputed."""

    images: np.ndarray  # (n, H, W, 3) float32
    identity_ids: np.ndarray  # (n,) raw identity ids
    camera_ids: np.ndarray  # (n,)
    heatmaps: np.ndarray  # (n, M, H/4, W/4) float32
    labels: np.ndarray  # (n, M) int64
    image_ids: list[str]


def prepare_split_arrays(
    manifest: DatasetManifest,
    split: str,
    blob_sigma: float,
    threshold: float,
    pose_records: dict[str, np.ndarray] | None = None,
    pose_noise_sigma: float = 0.0,
    noise_rng: np.random.Generator | None = None,
) -> SplitArrays:
    """Stack a split into arrays; pose comes from the oracle unless
    `pose_records` supplies external (x, y, confidence) triplets per image."""
    records = manifest.split(split)
    cfg = manifest.config
    image_hw = (cfg.image_height, cfg.image_width)
    images, maps, labels = [], [], []
    for r in records:
        if r.image is None:
            raise ValueError(f"record {r.image_id} has no image loaded")
        images.append(r.image)
        if pose_records is not None:
            if r.image_id not in pose_records:
                raise ValueError(f"keypoint file has no record for image {r.image_id!r}")
            hs = heatmaps_from_triplets(pose_records[r.image_id], image_hw, blob_sigma, threshold)
        else:
            hs = oracle_heatmaps(r, image_hw, blob_sigma, threshold)
        if pose_noise_sigma > 0:
            if noise_rng is None:
                raise ValueError("pose_noise_sigma > 0 requires a noise rng")
            hs = add_pose_noise(hs, pose_noise_sigma, noise_rng, threshold)
        maps.append(hs.maps.astype(np.float32))
        labels.append(hs.labels.astype(np.int64))
    return SplitArrays(
        images=np.stack(images),
        identity_ids=np.array([r.identity_id for r in records], dtype=np.int64),
        camera_ids=np.array([r.camera_id for r in records], dtype=np.int64),
        heatmaps=np.stack(maps),
        labels=np.stack(labels),
        image_ids=[r.image_id for r in records],
    )


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    out_dir: Path
    total_steps: int
    final_loss: float


def _batch_tensors(
    arrays: SplitArrays,
    batch_idx: np.ndarray,
    targets: np.ndarray,
    aug_rng: np.random.Generator | None,
    aug_cfg,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    imgs = arrays.images[batch_idx]
    if aug_rng is not None:
        imgs = np.stack([augment_image(img, aug_rng, aug_cfg) for img in imgs])
    images_t = torch.from_numpy(np.ascontiguousarray(imgs.transpose(0, 3, 1, 2)))
    cams_t = torch.from_numpy(arrays.camera_ids[batch_idx])
    maps_t = torch.from_numpy(arrays.heatmaps[batch_idx])
    labels_t = torch.from_numpy(arrays.labels[batch_idx])
    targets_t = torch.from_numpy(targets[batch_idx])
    return images_t, cams_t, maps_t, labels_t, targets_t


def _compute_losses(
    out: ModelOutput,
    heads: FeatureClassifiers,
    targets_t: torch.Tensor,
    loss_cfg,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    enc_term = encoder_loss(
        out.global_feat,
        out.group_feats,
        heads.global_head(out.global_feat),
        heads.group_head(out.group_feats),
        targets_t,
        margin=loss_cfg.triplet_margin,
        label_smoothing=loss_cfg.label_smoothing,
    )
    dec_term = decoder_loss(
        out.pooled_high,
        out.matched_views,
        heads.view_head(out.matched_views),
        out.eff_mask,
        heads.pooled_head(out.pooled_high),
        targets_t,
        margin=loss_cfg.triplet_margin,
        label_smoothing=loss_cfg.label_smoothing,
    )
    if loss_cfg.use_push:
        push_term = push_loss(out.pooled_high_raw, out.pooled_low_raw, out.push_valid)
    else:
        push_term = torch.zeros((), dtype=enc_term.dtype)
    loss = total_loss(
        enc_term, dec_term, push_term, loss_cfg.encoder_weight, loss_cfg.decoder_weight
    )
    return loss, enc_term, dec_term, push_term


def _learning_rate(cfg: RunConfig, step: int, total_steps: int) -> float:
    base = cfg.train.base_lr * cfg.train.batch_size / cfg.train.lr_reference_batch
    if cfg.train.schedule == "constant":
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * step / max(1, total_steps)))


def train(cfg: RunConfig, manifest: DatasetManifest, out_dir: str | Path) -> TrainResult:
    """Train on the manifest's train split; returns paths to the artifacts."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    set_determinism(cfg.seed, cfg.train.deterministic)

    data_cfg = manifest.config
    image_hw = (data_cfg.image_height, data_cfg.image_width)
    arrays = prepare_split_arrays(
        manifest, "train", cfg.model.blob_sigma, cfg.model.conf_threshold
    )
    class_ids = sorted(int(i) for i in set(arrays.identity_ids))
    class_index = {ident: i for i, ident in enumerate(class_ids)}
    targets = np.array([class_index[int(i)] for i in arrays.identity_ids], dtype=np.int64)

    net = ReidNet(
        cfg.model,
        image_hw=image_hw,
        num_keypoints=data_cfg.num_keypoints,
        num_cameras=data_cfg.num_cameras,
    )
    heads = FeatureClassifiers(cfg.model.embed_dim, num_classes=len(class_ids))
    modules = nn.ModuleDict({"net": net, "heads": heads})
    optimizer = torch.optim.SGD(
        modules.parameters(),
        lr=_learning_rate(cfg, 0, 1),
        momentum=cfg.train.momentum,
        weight_decay=cfg.train.weight_decay,
    )

    sampler = IdentityBatchSampler(
        targets,
        cfg.train.batch_identities,
        cfg.train.batch_instances,
        np.random.default_rng((cfg.seed, 0x5A9)),
    )
    aug_rng = np.random.default_rng((cfg.seed, 0xA6)) if cfg.train.augment.enabled else None
    total_steps = cfg.train.epochs * sampler.batches_per_epoch

    checkpoint_meta = {
        "class_ids": class_ids,
        "num_cameras": data_cfg.num_cameras,
        "num_keypoints": data_cfg.num_keypoints,
        "image_hw": list(image_hw),
    }
    last_checkpoint: Path | None = None
    metrics_path = out_dir / "metrics.jsonl"
    step = 0
    final_loss = float("nan")
    with metrics_path.open("w") as metrics_fh:
        for epoch in range(cfg.train.epochs):
            modules.train()
            for batch_idx in sampler.epoch_batches():
                lr = _learning_rate(cfg, step, total_steps)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                images_t, cams_t, maps_t, labels_t, targets_t = _batch_tensors(
                    arrays, batch_idx, targets, aug_rng, cfg.train.augment
                )
                out = net(images_t, cams_t, maps_t, labels_t)
                loss, enc_term, dec_term, push_term = _compute_losses(
                    out, heads, targets_t, cfg.loss
                )
                if not torch.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at step {step}; last good checkpoint: "
                        f"{last_checkpoint}",
                        last_checkpoint,
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                final_loss = float(loss.item())
                metrics_fh.write(
                    metrics_line(
                        {
                            "step": step,
                            "epoch": epoch,
                            "lr": lr,
                            "loss": final_loss,
                            "encoder_loss": float(enc_term.item()),
                            "decoder_loss": float(dec_term.item()),
                            "push_loss": float(push_term.item()),
                        }
                    )
                    + "\n"
                )
                step += 1
            last_checkpoint = out_dir / "checkpoint_last.pt"
            save_checkpoint(last_checkpoint, modules, cfg, checkpoint_meta)
            if cfg.train.keep_all_checkpoints:
                save_checkpoint(
                    out_dir / f"checkpoint_epoch{epoch:04d}.pt", modules, cfg, checkpoint_meta
                )

    final_path = out_dir / "checkpoint_final.pt"
    save_checkpoint(final_path, modules, cfg, checkpoint_meta)
    plot_training_curves(metrics_path, out_dir / "loss_curves.png")
    return TrainResult(
        checkpoint_path=final_path,
        metrics_path=metrics_path,
        out_dir=out_dir,
        total_steps=total_steps,
        final_loss=final_loss,
    )


def save_checkpoint(
    path: str | Path, modules: nn.ModuleDict, cfg: RunConfig, meta: dict
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": "posereid-checkpoint/1",
            "state_dict": modules.state_dict(),
            "config": cfg.to_dict(),
            "meta": meta,
        },
        path,
    )
    return path


@dataclass
class LoadedModel:
    net: ReidNet
    heads: FeatureClassifiers
    cfg: RunConfig
    class_ids: list[int]
    num_cameras: int
    num_keypoints: int
    image_hw: tuple[int, int]


def load_checkpoint(path: str | Path) -> LoadedModel:
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    if payload.get("format") != "posereid-checkpoint/1":
        raise ValueError(f"{path} is not a recognized checkpoint")
    cfg = config_from_dict(payload["config"])
    meta = payload["meta"]
    image_hw = tuple(meta["image_hw"])
    net = ReidNet(
        cfg.model,
        image_hw=image_hw,
        num_keypoints=meta["num_keypoints"],
        num_cameras=meta["num_cameras"],
    )
    heads = FeatureClassifiers(cfg.model.embed_dim, num_classes=len(meta["class_ids"]))
    modules = nn.ModuleDict({"net": net, "heads": heads})
    modules.load_state_dict(payload["state_dict"], strict=True)
    modules.eval()
    return LoadedModel(
        net=net,
        heads=heads,
        cfg=cfg,
        class_ids=list(meta["class_ids"]),
        num_cameras=meta["num_cameras"],
        num_keypoints=meta["num_keypoints"],
        image_hw=image_hw,
    )


@dataclass
class RetrievalDescriptor:
    vector: np.ndarray  # (D * (2 + K + N_v),)
    valid_mask: np.ndarray  # (N_v,) bool


def extract_descriptor(
    loaded: LoadedModel,
    image: np.ndarray,
    camera_id: int,
    heatmaps: HeatmapSet,
) -> RetrievalDescriptor:
    """Descriptor for one image given its pose heatmaps."""
    loaded.net.eval()
    with torch.no_grad():
        images_t = torch.from_numpy(
            np.ascontiguousarray(image.astype(np.float32).transpose(2, 0, 1))
        ).unsqueeze(0)
        cams_t = torch.tensor([camera_id], dtype=torch.long)
        maps_t = torch.from_numpy(heatmaps.maps.astype(np.float32)).unsqueeze(0)
        labels_t = torch.from_numpy(heatmaps.labels.astype(np.int64)).unsqueeze(0)
        out = loaded.net(images_t, cams_t, maps_t, labels_t)
        desc, valid = loaded.net.descriptor(out)
    return RetrievalDescriptor(
        vector=desc[0].numpy().astype(np.float32), valid_mask=valid[0].numpy().astype(bool)
    )


@dataclass
class DescriptorSet:
    vectors: np.ndarray  # (n, F) float32
    valid: np.ndarray  # (n, N_v) bool
    identity_ids: np.ndarray
    camera_ids: np.ndarray
    image_ids: list[str]


def extract_descriptors(
    loaded: LoadedModel,
    manifest: DatasetManifest,
    split: str,
    batch_size: int = 64,
    pose_records: dict[str, np.ndarray] | None = None,
    pose_noise_sigma: float = 0.0,
    noise_seed: int = 0,
) -> DescriptorSet:
    noise_rng = (
        np.random.default_rng((noise_seed, 0x9015E)) if pose_noise_sigma > 0 else None
    )
    arrays = prepare_split_arrays(
        manifest,
        split,
        loaded.cfg.model.blob_sigma,
        loaded.cfg.model.conf_threshold,
        pose_records=pose_records,
        pose_noise_sigma=pose_noise_sigma,
        noise_rng=noise_rng,
    )
    loaded.net.eval()
    vectors, valids = [], []
    with torch.no_grad():
        for start in range(0, len(arrays.image_ids), batch_size):
            sl = slice(start, start + batch_size)
            images_t = torch.from_numpy(
                np.ascontiguousarray(arrays.images[sl].transpose(0, 3, 1, 2))
            )
            cams_t = torch.from_numpy(arrays.camera_ids[sl])
            maps_t = torch.from_numpy(arrays.heatmaps[sl])
            labels_t = torch.from_numpy(arrays.labels[sl])
            out = loaded.net(images_t, cams_t, maps_t, labels_t)
            desc, valid = loaded.net.descriptor(out)
            vectors.append(desc.numpy().astype(np.float32))
            valids.append(valid.numpy().astype(bool))
    return DescriptorSet(
        vectors=np.concatenate(vectors),
        valid=np.concatenate(valids),
        identity_ids=arrays.identity_ids,
        camera_ids=arrays.camera_ids,
        image_ids=arrays.image_ids,
    )


def evaluate(
    loaded: LoadedModel,
    manifest: DatasetManifest,
    query_split: str = "query",
    gallery_split: str = "gallery",
    max_rank: int = 10,
    pose_records: dict[str, np.ndarray] | None = None,
    pose_noise_sigma: float = 0.0,
    noise_seed: int = 0,
) -> tuple[EvalResult, DescriptorSet, DescriptorSet]:
    query = extract_descriptors(
        loaded,
        manifest,
        query_split,
        pose_records=pose_records,
        pose_noise_sigma=pose_noise_sigma,
        noise_seed=noise_seed,
    )
    gallery = extract_descriptors(
        loaded,
        manifest,
        gallery_split,
        pose_records=pose_records,
        pose_noise_sigma=pose_noise_sigma,
        noise_seed=noise_seed + 1,
    )
    dist = cosine_distance_matrix(query.vectors, gallery.vectors)
    result = cmc_map(
        dist,
        query.identity_ids,
        gallery.identity_ids,
        query.camera_ids,
        gallery.camera_ids,
        max_rank=max_rank,
    )
    return result, query, gallery


# ---------------------------------------------------------------------------
# Ablation sweeps

MODULE_TOGGLE_ROWS: list[tuple[str, dict[str, bool]]] = [
    ("none", dict(gating=False, matching=False, push=False, memory=False)),
    ("gating", dict(gating=True, matching=False, push=False, memory=True)),
    ("matching", dict(gating=False, matching=True, push=False, memory=True)),
    ("matching+push", dict(gating=False, matching=True, push=True, memory=True)),
    ("gating+matching", dict(gating=True, matching=True, push=False, memory=True)),
    ("full", dict(gating=True, matching=True, push=True, memory=True)),
]


def apply_module_toggles(cfg: RunConfig, toggles: dict[str, bool]) -> RunConfig:
    out = copy.deepcopy(cfg)
    out.model.use_pose_gating = toggles["gating"]
    out.model.use_view_matching = toggles["matching"]
    out.model.use_pose_memory = toggles["memory"]
    out.loss.use_push = toggles["push"]
    return out


_ABLATE_PARAMS = ("num_views", "decoder_layers", "conf_threshold", "pose_noise_sigma", "modules")


def _point_config(cfg: RunConfig, param: str, value) -> RunConfig:
    out = copy.deepcopy(cfg)
    if param == "num_views":
        out.model.num_views = int(value)
    elif param == "decoder_layers":
        out.model.decoder_layers = int(value)
    elif param == "conf_threshold":
        out.model.conf_threshold = float(value)
    elif param == "modules":
        toggles = dict(MODULE_TOGGLE_ROWS)[str(value)]
        out = apply_module_toggles(out, toggles)
    elif param == "pose_noise_sigma":
        pass  # evaluation-time knob; training config unchanged
    else:
        raise ValueError(f"unknown ablation parameter {param!r}; choose from {_ABLATE_PARAMS}")
    return out


def _run_ablation_point(point: dict) -> dict:
    """Train (or reuse) a model for one sweep point and evaluate it."""
    cfg = config_from_dict(point["config"])
    manifest = load_manifest(point["data_dir"])
    run_dir = Path(point["run_dir"])
    if point.get("checkpoint"):
        loaded = load_checkpoint(point["checkpoint"])
    else:
        result = train(cfg, manifest, run_dir)
        loaded = load_checkpoint(result.checkpoint_path)
    sigma = float(point.get("pose_noise_sigma", 0.0))
    eval_result, _, _ = evaluate(
        loaded,
        manifest,
        max_rank=10,
        pose_noise_sigma=sigma,
        noise_seed=cfg.seed,
    )
    return {
        "param": point["param"],
        "value": point["value"],
        "seed": cfg.seed,
        "rank1": float(eval_result.cmc[0]),
        "rank5": float(eval_result.cmc[min(4, len(eval_result.cmc) - 1)]),
        "rank10": float(eval_result.cmc[min(9, len(eval_result.cmc) - 1)]),
        "map": eval_result.mean_ap,
        "checkpoint": str(point.get("checkpoint") or (Path(point["run_dir"]) / "checkpoint_final.pt")),
    }


@dataclass
class AblationReport:
    param: str
    rows: list[dict]  # one per (value, seed)
    summary_rows: list[dict]  # seed-averaged, one per value
    out_dir: Path


def ablate(
    cfg: RunConfig,
    data_dir: str | Path,
    param: str,
    values: list,
    out_dir: str | Path,
    seeds: list[int] | None = None,
    parallel: bool = False,
) -> AblationReport:
    """Sweep one parameter, training/evaluating per point, and write reports.

    `pose_noise_sigma` trains one base model per seed and only re-evaluates
    per value; `modules` sweeps the fixed toggle table (values selects row
    names, empty means all). Other parameters retrain per value.
    """
    if param not in _ABLATE_PARAMS:
        raise ValueError(f"unknown ablation parameter {param!r}; choose from {_ABLATE_PARAMS}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_dir = str(data_dir)
    seeds = [cfg.seed] if seeds is None else list(seeds)
    if param == "modules":
        known = [name for name, _ in MODULE_TOGGLE_ROWS]
        values = known if not values else [str(v) for v in values]
        for v in values:
            if v not in known:
                raise ValueError(f"unknown module row {v!r}; choose from {known}")

    points: list[dict] = []
    if param == "pose_noise_sigma":
        base_ckpts: dict[int, str] = {}
        for seed in seeds:
            seed_cfg = copy.deepcopy(cfg)
            seed_cfg.seed = seed
            run_dir = out_dir / "runs" / f"base_seed{seed}"
            base_points = [
                {
                    "param": param,
                    "value": "base",
                    "config": seed_cfg.to_dict(),
                    "data_dir": data_dir,
                    "run_dir": str(run_dir),
                }
            ]
            _map_points(base_points, parallel=False)  # base training is per seed anyway
            base_ckpts[seed] = str(run_dir / "checkpoint_final.pt")
        for seed in seeds:
            seed_cfg = copy.deepcopy(cfg)
            seed_cfg.seed = seed
            for value in values:
                points.append(
                    {
                        "param": param,
                        "value": float(value),
                        "pose_noise_sigma": float(value),
                        "config": seed_cfg.to_dict(),
                        "data_dir": data_dir,
                        "run_dir": str(out_dir / "runs" / f"sigma{value}_seed{seed}"),
                        "checkpoint": base_ckpts[seed],
                    }
                )
    else:
        for seed in seeds:
            for value in values:
                point_cfg = _point_config(cfg, param, value)
                point_cfg.seed = seed
                points.append(
                    {
                        "param": param,
                        "value": value,
                        "config": point_cfg.to_dict(),
                        "data_dir": data_dir,
                        "run_dir": str(out_dir / "runs" / f"{param}={value}_seed{seed}"),
                    }
                )

    rows = _map_points(points, parallel=parallel)

    summary_rows = []
    for value in values:
        matched = [r for r in rows if r["value"] == value]
        summary_rows.append(
            {
                "value": value,
                "rank1": float(np.mean([r["rank1"] for r in matched])),
                "rank5": float(np.mean([r["rank5"] for r in matched])),
                "rank10": float(np.mean([r["rank10"] for r in matched])),
                "map": float(np.mean([r["map"] for r in matched])),
                "seeds": len(matched),
            }
        )

    report = AblationReport(param=param, rows=rows, summary_rows=summary_rows, out_dir=out_dir)
    _write_ablation_report(cfg, report)
    return report


def _map_points(points: list[dict], parallel: bool) -> list[dict]:
    if parallel and len(points) > 1:
        with ProcessPoolExecutor() as pool:
            return list(pool.map(_run_ablation_point, points))
    return [_run_ablation_point(p) for p in points]


def _write_ablation_report(cfg: RunConfig, report: AblationReport) -> None:
    out_dir = report.out_dir
    header = ["param", "value", "seed", "rank1", "rank5", "rank10", "map"]
    write_csv(
        out_dir / "table.csv",
        header,
        [[r["param"], r["value"], r["seed"], r["rank1"], r["rank5"], r["rank10"], r["map"]] for r in report.rows],
    )
    write_csv(
        out_dir / "summary.csv",
        ["value", "rank1", "rank5", "rank10", "map", "seeds"],
        [
            [r["value"], r["rank1"], r["rank5"], r["rank10"], r["map"], r["seeds"]]
            for r in report.summary_rows
        ],
    )
    xs = [r["value"] for r in report.summary_rows]
    plot_sweep(
        xs,
        {
            "mAP": [r["map"] for r in report.summary_rows],
            "rank-1": [r["rank1"] for r in report.summary_rows],
        },
        xlabel=report.param,
        path=out_dir / "sweep.png",
        logx=report.param == "pose_noise_sigma",
    )
    save_config(cfg, out_dir / "config.yaml")
    (out_dir / "report.json").write_text(
        json.dumps(
            {"param": report.param, "rows": report.rows, "summary": report.summary_rows},
            indent=2,
        )
        + "\n"
    )
