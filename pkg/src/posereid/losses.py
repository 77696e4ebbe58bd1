"""Loss system: identity, batch-hard triplet, push, and branch combinations.

The encoder term supervises the global feature and every group feature; the
decoder term supervises the pooled high-confidence feature and the view
features. Identity terms over views honor each sample's high-confidence
membership; triplet terms over views run per view slot across the whole
batch, because a batch-hard triplet needs the same feature branch for every
sample while high-confidence membership varies per sample. The push term
drives the pooled high- and low-confidence features apart (cosine), skipped
for samples where either set is empty.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


def identity_loss(
    logits: torch.Tensor, targets: torch.Tensor, label_smoothing: float = 0.0
) -> torch.Tensor:
    """Mean cross-entropy; uniform logits give ln(num_classes)."""
    if logits.ndim == 1:
        logits = logits.unsqueeze(0)
        targets = targets.reshape(1)
    return F.cross_entropy(logits, targets, label_smoothing=label_smoothing)


def pairwise_euclidean(features: torch.Tensor) -> torch.Tensor:
    """All-pairs Euclidean distances with a small sqrt guard."""
    sq = features.pow(2).sum(dim=1)
    d2 = sq.unsqueeze(0) + sq.unsqueeze(1) - 2.0 * features @ features.t()
    return d2.clamp_min(1e-12).sqrt()


def triplet_loss(features: torch.Tensor, targets: torch.Tensor, margin: float = 0.3) -> torch.Tensor:
    """Batch-hard triplet: hinge(hardest positive - hardest negative + margin).

    Requires at least two identities and at least two instances of every
    identity in the batch. With all features identical the loss equals the
    margin.
    """
    if features.ndim != 2:
        raise ValueError("features must be (B, D)")
    b = features.shape[0]
    if targets.shape != (b,):
        raise ValueError("targets must be (B,)")
    same = targets.unsqueeze(0) == targets.unsqueeze(1)
    eye = torch.eye(b, dtype=torch.bool, device=features.device)
    pos_mask = same & ~eye
    neg_mask = ~same
    if not pos_mask.any(dim=1).all():
        raise ValueError("every identity in the batch needs >= 2 instances")
    if not neg_mask.any(dim=1).all():
        raise ValueError("the batch needs at least two identities")
    dist = pairwise_euclidean(features)
    large = torch.finfo(dist.dtype).max
    hardest_pos = dist.masked_fill(~pos_mask, -large).max(dim=1).values
    hardest_neg = dist.masked_fill(~neg_mask, large).min(dim=1).values
    return F.relu(hardest_pos - hardest_neg + margin).mean()


def push_loss(
    pooled_high: torch.Tensor, pooled_low: torch.Tensor, valid: torch.Tensor
) -> torch.Tensor:
    """Mean cosine similarity between pooled high/low-confidence features.

    `valid` marks samples where both sets are nonempty; invalid samples
    contribute 0 while the denominator stays the full batch size, so the
    value is always within [-1, 1].
    """
    if pooled_high.shape != pooled_low.shape or pooled_high.ndim != 2:
        raise ValueError("pooled features must both be (B, D)")
    b = pooled_high.shape[0]
    norm_h = pooled_high.norm(dim=1)
    norm_l = pooled_low.norm(dim=1)
    usable = valid.to(torch.bool) & (norm_h > 0) & (norm_l > 0)
    cos = (pooled_high * pooled_low).sum(dim=1) / (norm_h * norm_l).clamp_min(1e-30)
    return torch.where(usable, cos, torch.zeros_like(cos)).sum() / b


def encoder_loss(
    global_feat: torch.Tensor,
    group_feats: torch.Tensor,
    global_logits: torch.Tensor,
    group_logits: torch.Tensor,
    targets: torch.Tensor,
    margin: float = 0.3,
    label_smoothing: float = 0.0,
) -> torch.Tensor:
    """Identity + triplet on the global feature and (averaged) on each group.

    `group_feats` is (B, K, D) and `group_logits` (B, K, C); the group terms
    are averaged over the K groups.
    """
    if group_feats.ndim != 3 or group_logits.ndim != 3:
        raise ValueError("group features/logits must be (B, K, *)")
    k = group_feats.shape[1]
    ce_global = identity_loss(global_logits, targets, label_smoothing)
    ce_groups = sum(
        identity_loss(group_logits[:, i], targets, label_smoothing) for i in range(k)
    ) / k
    tri_global = triplet_loss(global_feat, targets, margin)
    tri_groups = sum(triplet_loss(group_feats[:, i], targets, margin) for i in range(k)) / k
    return ce_global + ce_groups + tri_global + tri_groups


def decoder_loss(
    pooled_high: torch.Tensor,
    view_feats: torch.Tensor,
    view_logits: torch.Tensor,
    high_mask: torch.Tensor,
    pooled_logits: torch.Tensor,
    targets: torch.Tensor,
    margin: float = 0.3,
    label_smoothing: float = 0.0,
) -> torch.Tensor:
    """Identity + triplet on the pooled feature and the view features.

    Identity terms over views average each sample's cross-entropies over its
    own high-confidence views (mask rows must be nonempty — apply the
    all-views fallback first). Triplet terms run per view slot over the full
    batch and average over slots.
    """
    if view_feats.ndim != 3 or view_logits.ndim != 3:
        raise ValueError("view features/logits must be (B, N_v, *)")
    b, n_views, _ = view_feats.shape
    mask = high_mask.to(view_logits.dtype)
    if (mask.sum(dim=1) == 0).any():
        raise ValueError("high-confidence mask has an empty row; apply the fallback first")

    ce_pooled = identity_loss(pooled_logits, targets, label_smoothing)
    flat_ce = F.cross_entropy(
        view_logits.reshape(b * n_views, -1),
        targets.repeat_interleave(n_views),
        label_smoothing=label_smoothing,
        reduction="none",
    ).view(b, n_views)
    ce_views = ((flat_ce * mask).sum(dim=1) / mask.sum(dim=1)).mean()

    tri_pooled = triplet_loss(pooled_high, targets, margin)
    tri_views = sum(
        triplet_loss(view_feats[:, i], targets, margin) for i in range(n_views)
    ) / n_views
    return ce_pooled + ce_views + tri_pooled + tri_views


def total_loss(
    encoder_term: torch.Tensor,
    decoder_term: torch.Tensor,
    push_term: torch.Tensor,
    encoder_weight: float = 0.5,
    decoder_weight: float = 0.5,
) -> torch.Tensor:
    """Weighted sum of branch losses plus the (unweighted) push term."""
    return encoder_weight * encoder_term + decoder_weight * decoder_term + push_term
