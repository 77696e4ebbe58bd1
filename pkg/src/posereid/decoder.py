"""Part-view transformer decoder over a pose-weighted memory.

The encoder sequence is reweighted per token by the channel-mean heatmap
sampled at each patch center (the class token takes the mean patch weight).
A small set of learnable view embeddings then cross-attends into that
memory through pre-norm decoder layers: self-attention among views, then
cross-attention with the view embeddings re-added to the queries at every
layer, then a feed-forward. Per-layer cross-attention matrices are recorded
so attention can be exported as image-space maps.
"""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image
from torch import nn

from .encoder import MultiHeadAttention, patch_grid_shape


def _patch_center_weights(
    pooled: torch.Tensor,
    image_hw: tuple[int, int],
    patch_size: int,
    stride: int,
) -> torch.Tensor:
    """Bilinearly sample a (B, h, w) pooled heatmap at every patch center.

    The heatmap grid is a fixed 4x downsample of the image, so image
    coordinate y maps to heatmap coordinate (y - 2) / 4 with pixel-center
    alignment; samples clamp at the grid edge. Returns (B, N) weights in
    row-major patch order.
    """
    b, gh, gw = pooled.shape
    height, width = image_hw
    n_rows, n_cols = patch_grid_shape(height, width, patch_size, stride)
    device, dtype = pooled.device, pooled.dtype

    cy = torch.arange(n_rows, dtype=dtype, device=device) * stride + patch_size / 2.0
    cx = torch.arange(n_cols, dtype=dtype, device=device) * stride + patch_size / 2.0
    fy = ((cy - 2.0) / 4.0).clamp(0.0, gh - 1.0)
    fx = ((cx - 2.0) / 4.0).clamp(0.0, gw - 1.0)

    y0 = fy.floor().long().clamp(max=gh - 1)
    x0 = fx.floor().long().clamp(max=gw - 1)
    y1 = (y0 + 1).clamp(max=gh - 1)
    x1 = (x0 + 1).clamp(max=gw - 1)
    wy = (fy - y0.to(dtype)).view(1, n_rows, 1)
    wx = (fx - x0.to(dtype)).view(1, 1, n_cols)

    g00 = pooled[:, y0][:, :, x0]
    g01 = pooled[:, y0][:, :, x1]
    g10 = pooled[:, y1][:, :, x0]
    g11 = pooled[:, y1][:, :, x1]
    grid = (
        (1 - wy) * (1 - wx) * g00
        + (1 - wy) * wx * g01
        + wy * (1 - wx) * g10
        + wy * wx * g11
    )
    return grid.reshape(b, n_rows * n_cols)


def build_memory(
    sequence: torch.Tensor,
    heatmaps: torch.Tensor,
    image_hw: tuple[int, int],
    patch_size: int,
    stride: int,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Weight each encoder token by the pose evidence under its patch.

    `sequence` is (B, N+1, D) with the class token first; `heatmaps` is
    (B, M, H/4, W/4). The M channels are averaged, sampled at patch centers,
    and the class token receives the mean of the patch weights. Returns
    (weighted memory, per-token weights).
    """
    if sequence.ndim != 3 or heatmaps.ndim != 4:
        raise ValueError("expected sequence (B, N+1, D) and heatmaps (B, M, h, w)")
    pooled = heatmaps.mean(dim=1).to(sequence.dtype)
    patch_w = _patch_center_weights(pooled, image_hw, patch_size, stride)
    if patch_w.shape[1] != sequence.shape[1] - 1:
        raise ValueError(
            f"patch grid yields {patch_w.shape[1]} tokens but sequence has "
            f"{sequence.shape[1] - 1} patch tokens"
        )
    class_w = patch_w.mean(dim=1, keepdim=True)
    weights = torch.cat([class_w, patch_w], dim=1)
    return sequence * weights.unsqueeze(-1), weights


class DecoderLayer(nn.Module):
    """Pre-norm: self-attention among views, cross-attention, feed-forward."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float = 4.0) -> None:
        super().__init__()
        self.norm_self = nn.LayerNorm(dim)
        self.self_attn = MultiHeadAttention(dim, num_heads)
        self.norm_cross = nn.LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, num_heads)
        self.norm_mlp = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(
        self, states: torch.Tensor, view_embed: torch.Tensor, memory: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.norm_self(states)
        attended, _ = self.self_attn(h, h, h)
        states = states + attended
        # View embeddings re-enter the queries at every layer.
        attended, attn = self.cross_attn(self.norm_cross(states) + view_embed, memory, memory)
        states = states + attended
        states = states + self.mlp(self.norm_mlp(states))
        return states, attn


class ViewDecoder(nn.Module):
    """Learnable view embeddings decoded against the weighted memory.

    View states start at zero, so the first layer's cross-attention queries
    are exactly the view embeddings. `depth=0` is an explicit bypass — the
    views pass through unattended (sample-independent), modeling a removed
    decoder in depth sweeps.
    """

    def __init__(self, dim: int, num_heads: int, depth: int, num_views: int) -> None:
        super().__init__()
        if num_views < 1:
            raise ValueError("num_views must be >= 1")
        if depth < 0:
            raise ValueError("depth must be >= 0")
        self.num_views = num_views
        # Unit-scale init, the usual choice for learnable decoder queries.
        self.views = nn.Parameter(torch.zeros(num_views, dim))
        nn.init.normal_(self.views, std=1.0)
        self.layers = nn.ModuleList(DecoderLayer(dim, num_heads) for _ in range(depth))

    def forward(self, memory: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Returns (view features (B, N_v, D), per-layer attention maps)."""
        b = memory.shape[0]
        view_embed = self.views.unsqueeze(0).expand(b, -1, -1)
        if not self.layers:
            return view_embed, []
        states = torch.zeros_like(view_embed)
        attentions: list[torch.Tensor] = []
        for layer in self.layers:
            states, attn = layer(states, view_embed, memory)
            attentions.append(attn)
        if not torch.isfinite(states).all():
            raise RuntimeError("non-finite activations in view decoder")
        return states, attentions


def _resize_from_patch_grid(
    grid: np.ndarray, image_hw: tuple[int, int], patch_size: int, stride: int
) -> np.ndarray:
    """Bilinearly expand per-patch values (placed at patch centers) to pixels."""
    n_rows, n_cols = grid.shape
    height, width = image_hw
    fy = np.clip((np.arange(height) + 0.5 - patch_size / 2.0) / stride, 0, n_rows - 1)
    fx = np.clip((np.arange(width) + 0.5 - patch_size / 2.0) / stride, 0, n_cols - 1)
    y0 = np.floor(fy).astype(int)
    x0 = np.floor(fx).astype(int)
    y1 = np.minimum(y0 + 1, n_rows - 1)
    x1 = np.minimum(x0 + 1, n_cols - 1)
    wy = (fy - y0)[:, None]
    wx = (fx - x0)[None, :]
    g00 = grid[np.ix_(y0, x0)]
    g01 = grid[np.ix_(y0, x1)]
    g10 = grid[np.ix_(y1, x0)]
    g11 = grid[np.ix_(y1, x1)]
    return (1 - wy) * (1 - wx) * g00 + (1 - wy) * wx * g01 + wy * (1 - wx) * g10 + wy * wx * g11


def _normalize01(arr: np.ndarray) -> np.ndarray:
    peak = float(arr.max())
    return arr / peak if peak > 0 else arr


def attention_maps(
    attention: np.ndarray,
    image_hw: tuple[int, int],
    patch_size: int,
    stride: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Image-space attention maps from one (N_v, N+1) cross-attention matrix.

    The class-token column is dropped; each view's patch attention is
    reshaped to the patch grid, resized to image resolution, and normalized
    to [0, 1]. The fused map is the mean over views, normalized the same
    way. Returns (per_view (N_v, H, W), fused (H, W)).
    """
    attention = np.asarray(attention, dtype=np.float64)
    if attention.ndim != 2:
        raise ValueError("expected a single (N_v, N+1) attention matrix")
    grid_hw = patch_grid_shape(image_hw[0], image_hw[1], patch_size, stride)
    if attention.shape[1] != grid_hw[0] * grid_hw[1] + 1:
        raise ValueError(
            f"attention has {attention.shape[1]} columns, expected "
            f"{grid_hw[0] * grid_hw[1]} patches + class token"
        )
    patch_attn = attention[:, 1:].reshape(-1, *grid_hw)
    raw = np.stack(
        [_resize_from_patch_grid(g, image_hw, patch_size, stride) for g in patch_attn]
    )
    fused = _normalize01(raw.mean(axis=0))
    per_view = np.stack([_normalize01(m) for m in raw])
    return per_view, fused


def write_attention_overlays(
    per_view: np.ndarray,
    fused: np.ndarray,
    image: np.ndarray,
    out_dir,
    image_id: str,
) -> list:
    """Blend attention maps over the image and write one PNG per map.

    Produces {image_id}_view{i}.png for each view plus {image_id}_fused.png.
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    named = [(f"{image_id}_view{i}.png", m) for i, m in enumerate(per_view)]
    named.append((f"{image_id}_fused.png", fused))
    for name, amap in named:
        heat = np.stack([amap, 0.25 * amap, 0.15 * (1.0 - amap)], axis=-1)
        overlay = np.clip(0.45 * image + 0.55 * heat, 0.0, 1.0)
        arr = np.round(overlay * 255.0).astype(np.uint8)
        path = out_dir / name
        Image.fromarray(arr).save(path)
        paths.append(path)
    return paths
