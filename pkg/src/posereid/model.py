"""Full pose-guided re-identification network and its retrieval descriptor.

Forward pass: encode patches (camera-aware), gate and aggregate group
features with projected heatmaps, decode learnable views against the
pose-weighted memory, match views back into the aggregation set, and split
them by the matched keypoint's confidence label. The retrieval descriptor
concatenates [global, pooled-high, group features, packed high-confidence
views, zero padding] to a fixed length of D * (2 + K + N_v).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .aggregation import HeatmapProjector, match_and_distribute, pose_gate
from .config import ModelConfig
from .decoder import ViewDecoder, build_memory
from .encoder import VisualEncoder
from .matching import high_confidence_mask, match_views


def masked_mean(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean of (B, T, D) rows selected by a (B, T) mask; empty rows give zero."""
    m = mask.to(values.dtype)
    return (values * m.unsqueeze(-1)).sum(dim=1) / m.sum(dim=1).clamp_min(1.0).unsqueeze(-1)


@dataclass
class ModelOutput:
    """All intermediate features produced by one forward pass."""

    global_feat: torch.Tensor  # (B, D)
    part_tokens: torch.Tensor  # (B, N, D)
    group_feats: torch.Tensor  # (B, K, D)
    agg_set: torch.Tensor  # (B, M, D) aggregation set
    agg_indices: torch.Tensor  # (B, M) gated-row -> group matches
    memory_weights: torch.Tensor  # (B, N+1)
    view_feats: torch.Tensor  # (B, N_v, D) raw decoder outputs
    matched_views: torch.Tensor  # (B, N_v, D) after aggregation matching
    view_indices: torch.Tensor  # (B, N_v)
    high_mask: torch.Tensor  # (B, N_v) bool, true high-confidence split
    eff_mask: torch.Tensor  # (B, N_v) bool, after all-views fallback
    pooled_high: torch.Tensor  # (B, D) mean over eff_mask views
    pooled_high_raw: torch.Tensor  # (B, D) mean over true high views (0 if none)
    pooled_low_raw: torch.Tensor  # (B, D) mean over true low views (0 if none)
    push_valid: torch.Tensor  # (B,) bool: both split sides nonempty
    attentions: list[torch.Tensor] = field(default_factory=list)


class FeatureClassifiers(nn.Module):
    """One linear identity head per supervised branch.

    Group features share one head; view features share another.
    """

    def __init__(self, dim: int, num_classes: int) -> None:
        super().__init__()
        if num_classes < 2:
            raise ValueError("need at least 2 identity classes")
        self.global_head = nn.Linear(dim, num_classes)
        self.group_head = nn.Linear(dim, num_classes)
        self.pooled_head = nn.Linear(dim, num_classes)
        self.view_head = nn.Linear(dim, num_classes)


class ReidNet(nn.Module):
    """Encoder + pose aggregation + view decoder + confidence matching."""

    def __init__(
        self,
        cfg: ModelConfig,
        image_hw: tuple[int, int],
        num_keypoints: int,
        num_cameras: int,
        in_channels: int = 3,
    ) -> None:
        super().__init__()
        cfg.validate(num_keypoints)
        height, width = image_hw
        if height % 4 or width % 4:
            raise ValueError("image dims must be divisible by 4 (heatmap grid)")
        self.cfg = cfg
        self.image_hw = (height, width)
        self.num_keypoints = num_keypoints
        self.encoder = VisualEncoder(
            image_hw=image_hw,
            in_channels=in_channels,
            patch_size=cfg.patch_size,
            stride=cfg.patch_stride,
            dim=cfg.embed_dim,
            num_heads=cfg.num_heads,
            depth=cfg.encoder_layers,
            num_groups=cfg.num_groups,
            num_cameras=num_cameras,
            camera_weight=cfg.camera_weight,
        )
        self.heatmap_proj = HeatmapProjector((height // 4, width // 4), cfg.embed_dim)
        self.decoder = ViewDecoder(
            dim=cfg.embed_dim,
            num_heads=cfg.num_heads,
            depth=cfg.decoder_layers,
            num_views=cfg.num_views,
        )

    @property
    def descriptor_length(self) -> int:
        return self.cfg.embed_dim * (2 + self.cfg.num_groups + self.cfg.num_views)

    def forward(
        self,
        images: torch.Tensor,
        camera_ids: torch.Tensor,
        heatmaps: torch.Tensor,
        labels: torch.Tensor,
    ) -> ModelOutput:
        """images (B,C,H,W), camera_ids (B,), heatmaps (B,M,H/4,W/4), labels (B,M)."""
        b = images.shape[0]
        if heatmaps.shape[1] != self.num_keypoints:
            raise ValueError(
                f"expected {self.num_keypoints} heatmap channels, got {heatmaps.shape[1]}"
            )
        if labels.shape != heatmaps.shape[:2]:
            raise ValueError("labels must be (B, M)")
        enc = self.encoder(images, camera_ids)

        if self.cfg.use_pose_gating:
            projected = self.heatmap_proj(heatmaps)
            gated = pose_gate(enc.group_feats, projected)
            agg_set, agg_indices = match_and_distribute(gated, enc.group_feats)
        else:
            agg_set = enc.group_feats
            agg_indices = (
                torch.arange(agg_set.shape[1], device=agg_set.device).unsqueeze(0).expand(b, -1)
            )

        if self.cfg.use_pose_memory:
            memory, memory_weights = build_memory(
                enc.sequence, heatmaps, self.image_hw, self.cfg.patch_size, self.cfg.patch_stride
            )
        else:
            memory = enc.sequence
            memory_weights = torch.ones(
                b, enc.sequence.shape[1], dtype=enc.sequence.dtype, device=enc.sequence.device
            )

        view_feats, attentions = self.decoder(memory)

        if self.cfg.use_view_matching:
            matched_views, view_indices = match_views(view_feats, agg_set)
            high_mask = high_confidence_mask(view_indices, labels)
        else:
            matched_views = view_feats
            view_indices = torch.zeros(
                b, view_feats.shape[1], dtype=torch.long, device=view_feats.device
            )
            high_mask = torch.ones(b, view_feats.shape[1], dtype=torch.bool, device=images.device)

        counts = high_mask.sum(dim=1)
        # Fully-occluded fallback: no high-confidence views -> use all views.
        eff_mask = torch.where(
            (counts > 0).unsqueeze(1), high_mask, torch.ones_like(high_mask)
        )
        pooled_high = masked_mean(matched_views, eff_mask)
        pooled_high_raw = masked_mean(matched_views, high_mask)
        pooled_low_raw = masked_mean(matched_views, ~high_mask)
        push_valid = (counts > 0) & (counts < high_mask.shape[1])

        return ModelOutput(
            global_feat=enc.global_feat,
            part_tokens=enc.part_tokens,
            group_feats=enc.group_feats,
            agg_set=agg_set,
            agg_indices=agg_indices,
            memory_weights=memory_weights,
            view_feats=view_feats,
            matched_views=matched_views,
            view_indices=view_indices,
            high_mask=high_mask,
            eff_mask=eff_mask,
            pooled_high=pooled_high,
            pooled_high_raw=pooled_high_raw,
            pooled_low_raw=pooled_low_raw,
            push_valid=push_valid,
            attentions=attentions,
        )

    def descriptor(self, output: ModelOutput) -> tuple[torch.Tensor, torch.Tensor]:
        """Fixed-length retrieval descriptor plus the view-slot validity mask.

        High-confidence views are packed first (original order preserved);
        remaining slots are zero. Length is D * (2 + K + N_v) regardless of
        how many views survived the split.
        """
        matched = output.matched_views
        eff = output.eff_mask
        order = torch.argsort((~eff).to(torch.int8), dim=1, stable=True)
        packed = matched.gather(1, order.unsqueeze(-1).expand_as(matched))
        valid = eff.gather(1, order)
        packed = packed * valid.unsqueeze(-1)
        descriptor = torch.cat(
            [
                output.global_feat,
                output.pooled_high,
                output.group_feats.flatten(1),
                packed.flatten(1),
            ],
            dim=1,
        )
        return descriptor, valid
