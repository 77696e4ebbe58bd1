"""Match decoder views to the aggregation set and split by confidence.

Every decoded view feature is summed with the most cosine-similar row of
the aggregation set (many views may pick the same row). The keypoint label
of the matched row then routes the combined feature into the
high-confidence or low-confidence set.
"""

from __future__ import annotations

import torch

from .aggregation import cosine_match, gather_rows


def match_views(
    view_feats: torch.Tensor, agg_set: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Sum each view with its best-matching aggregation row.

    Accepts (N_v, D) x (M, D) or batched 3-D inputs. Returns
    (matched views, match indices).
    """
    indices = cosine_match(view_feats, agg_set)
    return view_feats + gather_rows(agg_set, indices), indices


def high_confidence_mask(indices: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Label of the matched keypoint, as a boolean mask over views.

    `indices` is (N_v,) or (B, N_v); `labels` is (M,) or (B, M).
    """
    if indices.ndim == 1:
        return labels.to(torch.bool)[indices]
    return labels.to(torch.bool).gather(1, indices)


def split_by_confidence(
    matched: torch.Tensor, indices: torch.Tensor, labels: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Partition matched view features by their matched keypoint's label.

    Single-sample form: matched (N_v, D), indices (N_v,), labels (M,).
    Returns (high, low) with order preserved; high has L rows, low N_v - L.
    """
    if matched.ndim != 2:
        raise ValueError("split_by_confidence expects a single sample (N_v, D)")
    mask = high_confidence_mask(indices, labels)
    return matched[mask], matched[~mask]
