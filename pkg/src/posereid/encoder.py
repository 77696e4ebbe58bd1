"""Transformer encoder over sliding-window image patches.

The encoder flattens an image into N overlapping (or tiling) patches,
projects each to the embedding dimension, prepends a learned class token,
adds positional embeddings plus a weighted per-camera embedding, and runs
a pre-norm multi-head self-attention stack. Patch tokens are additionally
summarized into K group features by prepending the global token to each
contiguous group of patch rows and passing it through one shared
transformer layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


def patch_count(height: int, width: int, patch_size: int, stride: int) -> int:
    """Number of sliding windows of size `patch_size` at step `stride`.

    Counts floor((H + S - P) / S) * floor((W + S - P) / S) full windows;
    windows never extend past the image edge.
    """
    if height < 1 or width < 1:
        raise ValueError(f"image dims must be positive, got {height}x{width}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if stride > patch_size:
        raise ValueError(f"stride {stride} must not exceed patch size {patch_size}")
    if patch_size > min(height, width):
        raise ValueError(
            f"patch size {patch_size} exceeds smallest image side of {height}x{width}"
        )
    rows = (height + stride - patch_size) // stride
    cols = (width + stride - patch_size) // stride
    return rows * cols


def patch_grid_shape(height: int, width: int, patch_size: int, stride: int) -> tuple[int, int]:
    """(rows, cols) of the sliding-window grid; rows * cols == patch_count."""
    patch_count(height, width, patch_size, stride)  # validate
    return (
        (height + stride - patch_size) // stride,
        (width + stride - patch_size) // stride,
    )


class MultiHeadAttention(nn.Module):
    """Standard scaled dot-product attention with separate q/k/v projections.

    Returns both the attended output and the head-averaged attention matrix
    so callers can export or inspect where each query looked.
    """

    def __init__(self, dim: int, num_heads: int) -> None:
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"dim {dim} not divisible by num_heads {num_heads}")
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, t, _ = x.shape
        return x.view(b, t, self.num_heads, self.head_dim).transpose(1, 2)

    def forward(
        self, query: torch.Tensor, key: torch.Tensor, value: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        b, tq, _ = query.shape
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(key))
        v = self._split(self.v_proj(value))
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        attn = scores.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, tq, self.dim)
        return self.out_proj(out), attn.mean(dim=1)


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block with a GELU MLP of width 4*dim."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float = 4.0) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attended, _ = self.attn(h, h, h)
        x = x + attended
        x = x + self.mlp(self.norm2(x))
        return x


@dataclass
class EncoderFeatures:
    """Everything the encoder emits for one batch."""

    sequence: torch.Tensor  # (B, N+1, D) full token sequence
    global_feat: torch.Tensor  # (B, D) class-token output
    part_tokens: torch.Tensor  # (B, N, D) patch-token outputs
    group_feats: torch.Tensor  # (B, K, D) grouped part features


class VisualEncoder(nn.Module):
    """ViT-style encoder with camera embeddings and grouped part features."""

    def __init__(
        self,
        image_hw: tuple[int, int],
        in_channels: int,
        patch_size: int,
        stride: int,
        dim: int,
        num_heads: int,
        depth: int,
        num_groups: int,
        num_cameras: int,
        camera_weight: float = 1.0,
    ) -> None:
        super().__init__()
        height, width = image_hw
        self.image_hw = (height, width)
        self.in_channels = in_channels
        self.patch_size = patch_size
        self.stride = stride
        self.dim = dim
        self.num_patches = patch_count(height, width, patch_size, stride)
        self.num_groups = num_groups
        if num_groups < 1 or num_groups > self.num_patches:
            raise ValueError(
                f"num_groups must be in [1, {self.num_patches}], got {num_groups}"
            )
        self.camera_weight = float(camera_weight)

        self.patch_proj = nn.Linear(patch_size * patch_size * in_channels, dim)
        self.class_token = nn.Parameter(torch.zeros(1, 1, dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, self.num_patches + 1, dim))
        self.camera_embed = nn.Parameter(torch.zeros(num_cameras, self.num_patches + 1, dim))
        self.blocks = nn.ModuleList(TransformerBlock(dim, num_heads) for _ in range(depth))
        self.group_block = TransformerBlock(dim, num_heads)

        nn.init.trunc_normal_(self.class_token, std=0.02)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        nn.init.trunc_normal_(self.camera_embed, std=0.02)

    def embed_patches(self, images: torch.Tensor) -> torch.Tensor:
        """(B, C, H, W) -> (B, N, D); windows enumerate row-major."""
        if images.ndim != 4:
            raise ValueError(f"expected (B, C, H, W), got shape {tuple(images.shape)}")
        b, c, h, w = images.shape
        if c != self.in_channels or (h, w) != self.image_hw:
            raise ValueError(
                f"expected {self.in_channels}x{self.image_hw[0]}x{self.image_hw[1]} input, "
                f"got {c}x{h}x{w}"
            )
        windows = F.unfold(images, kernel_size=self.patch_size, stride=self.stride)
        return self.patch_proj(windows.transpose(1, 2))

    def assemble_input(self, patch_tokens: torch.Tensor, camera_ids: torch.Tensor) -> torch.Tensor:
        """Prepend class token, add positional and weighted camera embeddings."""
        b, n, _ = patch_tokens.shape
        if n != self.num_patches:
            raise ValueError(f"expected {self.num_patches} patch tokens, got {n}")
        if camera_ids.shape != (b,):
            raise ValueError("camera_ids must be one integer per batch element")
        if camera_ids.min() < 0 or camera_ids.max() >= self.camera_embed.shape[0]:
            raise ValueError("camera id out of range")
        tokens = torch.cat([self.class_token.expand(b, -1, -1), patch_tokens], dim=1)
        return tokens + self.pos_embed + self.camera_weight * self.camera_embed[camera_ids]

    def encode(self, sequence: torch.Tensor) -> torch.Tensor:
        """Run the self-attention stack; depth 0 is the identity."""
        for block in self.blocks:
            sequence = block(sequence)
        if not torch.isfinite(sequence).all():
            raise RuntimeError("non-finite activations in encoder stack")
        return sequence

    def group_sizes(self) -> list[int]:
        """Contiguous group sizes: N // K rows each, remainder on the last."""
        base = self.num_patches // self.num_groups
        sizes = [base] * self.num_groups
        sizes[-1] += self.num_patches - base * self.num_groups
        return sizes

    def group_features(self, part_tokens: torch.Tensor, global_feat: torch.Tensor) -> torch.Tensor:
        """Summarize each contiguous patch-group via the shared group block.

        The global feature is prepended to every group; the group feature is
        the block's output at that prepended position.
        """
        outputs = []
        start = 0
        lead = global_feat.unsqueeze(1)
        for size in self.group_sizes():
            chunk = part_tokens[:, start : start + size]
            start += size
            fused = self.group_block(torch.cat([lead, chunk], dim=1))
            outputs.append(fused[:, 0])
        return torch.stack(outputs, dim=1)

    def forward(self, images: torch.Tensor, camera_ids: torch.Tensor) -> EncoderFeatures:
        tokens = self.embed_patches(images)
        sequence = self.encode(self.assemble_input(tokens, camera_ids))
        global_feat = sequence[:, 0]
        part_tokens = sequence[:, 1:]
        group_feats = self.group_features(part_tokens, global_feat)
        return EncoderFeatures(
            sequence=sequence,
            global_feat=global_feat,
            part_tokens=part_tokens,
            group_feats=group_feats,
        )
