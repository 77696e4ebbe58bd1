"""Pose-guided aggregation of grouped part features.

Flattened heatmaps are projected to the embedding space and gate the
grouped part features elementwise. Each gated row is then matched to its
most cosine-similar group feature and the two are summed, producing the
aggregation set consumed by the decoder-side view matching.
"""

from __future__ import annotations

import torch
from torch import nn


def cosine_match(queries: torch.Tensor, candidates: torch.Tensor) -> torch.Tensor:
    """Index of the most cosine-similar candidate row for every query row.

    Accepts (Q, D) x (C, D) or batched (B, Q, D) x (B, C, D). Ties break to
    the lowest candidate index. Zero-norm candidate rows are skipped; a
    zero-norm query row (or an all-zero candidate set) matches index 0.
    The selection itself carries no gradient.
    """
    squeeze = queries.ndim == 2
    if squeeze:
        queries = queries.unsqueeze(0)
        candidates = candidates.unsqueeze(0)
    if queries.ndim != 3 or candidates.ndim != 3:
        raise ValueError("expected 2-D or 3-D feature matrices")
    if queries.shape[-1] != candidates.shape[-1]:
        raise ValueError("feature dimensions differ")
    with torch.no_grad():
        q_norm = queries.norm(dim=-1, keepdim=True)
        c_norm = candidates.norm(dim=-1, keepdim=True)
        qn = queries / q_norm.clamp_min(1e-30)
        cn = candidates / c_norm.clamp_min(1e-30)
        scores = qn @ cn.transpose(-2, -1)  # (B, Q, C)
        neg_inf = torch.finfo(scores.dtype).min
        scores = scores.masked_fill((c_norm == 0).transpose(-2, -1), neg_inf)
        scores = scores.masked_fill(q_norm == 0, neg_inf)
        indices = scores.argmax(dim=-1)  # first maximal index == lowest tie
    return indices.squeeze(0) if squeeze else indices


def gather_rows(candidates: torch.Tensor, indices: torch.Tensor) -> torch.Tensor:
    """Select candidate rows by per-query index; differentiable w.r.t. values."""
    if candidates.ndim == 2:
        return candidates[indices]
    expanded = indices.unsqueeze(-1).expand(*indices.shape, candidates.shape[-1])
    return candidates.gather(1, expanded)


def match_and_distribute(
    gated: torch.Tensor, group_feats: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Sum each gated row with its best-matching group feature.

    Returns (aggregation set, match indices). Gradients flow through both
    addends; the argmax selection is piecewise constant.
    """
    indices = cosine_match(gated, group_feats)
    return gated + gather_rows(group_feats, indices), indices


def pose_gate(group_feats: torch.Tensor, projected_heatmaps: torch.Tensor) -> torch.Tensor:
    """Elementwise product of projected heatmaps and group features, row-aligned.

    Requires one group feature per keypoint channel.
    """
    if group_feats.shape != projected_heatmaps.shape:
        raise ValueError(
            "pose gating needs matching shapes (one group per keypoint); got "
            f"{tuple(projected_heatmaps.shape)} heatmap rows vs {tuple(group_feats.shape)} groups"
        )
    return projected_heatmaps * group_feats


class HeatmapProjector(nn.Module):
    """Flatten each heatmap channel and project it to the embedding dim."""

    def __init__(self, grid_hw: tuple[int, int], dim: int) -> None:
        super().__init__()
        self.grid_hw = tuple(grid_hw)
        self.proj = nn.Linear(grid_hw[0] * grid_hw[1], dim)

    def forward(self, maps: torch.Tensor) -> torch.Tensor:
        if maps.shape[-2:] != self.grid_hw:
            raise ValueError(f"expected heatmap grid {self.grid_hw}, got {tuple(maps.shape[-2:])}")
        return self.proj(maps.flatten(-2))
