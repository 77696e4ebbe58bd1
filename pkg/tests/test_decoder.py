"""Pose-weighted decoder memory, view decoding, and attention export."""

import numpy as np
import pytest
import torch
from PIL import Image

from posereid.decoder import (
    DecoderLayer,
    ViewDecoder,
    attention_maps,
    build_memory,
    write_attention_overlays,
)
from posereid.encoder import patch_grid_shape


IMAGE_HW = (64, 32)
PATCH, STRIDE = 8, 8
N_PATCHES = 32  # (64/8) * (32/8)


def test_uniform_heatmaps_scale_memory_uniformly():
    torch.manual_seed(0)
    seq = torch.randn(2, N_PATCHES + 1, 16, dtype=torch.float64)
    maps = torch.full((2, 17, 16, 8), 0.5, dtype=torch.float64)
    memory, weights = build_memory(seq, maps, IMAGE_HW, PATCH, STRIDE)
    assert torch.allclose(weights, torch.full_like(weights, 0.5), atol=1e-12)
    assert torch.allclose(memory, 0.5 * seq, atol=1e-12)


def test_zero_heatmaps_zero_memory():
    seq = torch.randn(1, N_PATCHES + 1, 8)
    maps = torch.zeros(1, 3, 16, 8)
    memory, weights = build_memory(seq, maps, IMAGE_HW, PATCH, STRIDE)
    assert torch.equal(weights, torch.zeros_like(weights))
    assert torch.equal(memory, torch.zeros_like(memory))


def test_memory_weights_track_heatmap_location():
    """Pose mass near one patch upweights that patch's token most."""
    maps = torch.zeros(1, 1, 16, 8, dtype=torch.float64)
    # Patch (row 2, col 1) spans image rows 16..24, cols 8..16; its center
    # (20, 12) maps to heatmap coords (4.5, 2.5). Put mass right there.
    maps[0, 0, 4, 2] = maps[0, 0, 4, 3] = maps[0, 0, 5, 2] = maps[0, 0, 5, 3] = 1.0
    seq = torch.ones(1, N_PATCHES + 1, 4, dtype=torch.float64)
    _, weights = build_memory(seq, maps, IMAGE_HW, PATCH, STRIDE)
    patch_w = weights[0, 1:].reshape(8, 4)
    assert patch_w.argmax() == 2 * 4 + 1
    assert patch_w[2, 1] > 0.9


def test_class_token_weight_is_mean_of_patch_weights():
    rng = np.random.default_rng(1)
    maps = torch.from_numpy(rng.random((3, 5, 16, 8)))
    seq = torch.randn(3, N_PATCHES + 1, 6, dtype=torch.float64)
    _, weights = build_memory(seq, maps, IMAGE_HW, PATCH, STRIDE)
    assert torch.allclose(weights[:, 0], weights[:, 1:].mean(dim=1), atol=1e-12)


def test_bilinear_weights_against_manual_oracle():
    """Replicate the sampling arithmetic independently in numpy."""
    rng = np.random.default_rng(2)
    pooled = rng.random((2, 16, 8))
    seq = torch.zeros(2, N_PATCHES + 1, 1, dtype=torch.float64)
    _, weights = build_memory(
        torch.ones_like(seq), torch.from_numpy(pooled).unsqueeze(1), IMAGE_HW, PATCH, STRIDE
    )
    rows, cols = patch_grid_shape(*IMAGE_HW, PATCH, STRIDE)
    for b in range(2):
        for i in range(rows):
            for j in range(cols):
                cy, cx = i * STRIDE + PATCH / 2.0, j * STRIDE + PATCH / 2.0
                fy = min(max((cy - 2.0) / 4.0, 0.0), 15.0)
                fx = min(max((cx - 2.0) / 4.0, 0.0), 7.0)
                y0, x0 = int(np.floor(fy)), int(np.floor(fx))
                y1, x1 = min(y0 + 1, 15), min(x0 + 1, 7)
                wy, wx = fy - y0, fx - x0
                expected = (
                    (1 - wy) * (1 - wx) * pooled[b, y0, x0]
                    + (1 - wy) * wx * pooled[b, y0, x1]
                    + wy * (1 - wx) * pooled[b, y1, x0]
                    + wy * wx * pooled[b, y1, x1]
                )
                got = float(weights[b, 1 + i * cols + j])
                assert got == pytest.approx(expected, abs=1e-12)


def test_build_memory_validation():
    with pytest.raises(ValueError):
        build_memory(torch.zeros(1, 10, 4), torch.zeros(1, 3, 16, 8), IMAGE_HW, PATCH, STRIDE)


def test_decoder_layer_attention_rows_sum_to_one():
    torch.manual_seed(3)
    layer = DecoderLayer(16, 4)
    states = torch.randn(2, 5, 16)
    view_embed = torch.randn(2, 5, 16)
    memory = torch.randn(2, 11, 16)
    out, attn = layer(states, view_embed, memory)
    assert out.shape == (2, 5, 16)
    assert attn.shape == (2, 5, 11)
    assert torch.allclose(attn.sum(dim=-1), torch.ones(2, 5), atol=1e-6)


def test_view_decoder_depth_zero_bypass():
    dec = ViewDecoder(dim=8, num_heads=2, depth=0, num_views=3)
    memory = torch.randn(4, 9, 8)
    views, attentions = dec(memory)
    assert attentions == []
    assert views.shape == (4, 3, 8)
    for b in range(4):
        assert torch.equal(views[b], dec.views)
    # Sample-independent: identical rows regardless of memory.
    other, _ = dec(torch.randn(4, 9, 8))
    assert torch.equal(views, other)


def test_view_decoder_depth_records_one_attention_per_layer():
    torch.manual_seed(4)
    dec = ViewDecoder(dim=8, num_heads=2, depth=3, num_views=4)
    memory = torch.randn(2, 7, 8)
    views, attentions = dec(memory)
    assert views.shape == (2, 4, 8)
    assert len(attentions) == 3
    for attn in attentions:
        assert attn.shape == (2, 4, 7)
        assert torch.allclose(attn.sum(dim=-1), torch.ones(2, 4), atol=1e-6)


def test_view_decoder_memory_dependence():
    torch.manual_seed(5)
    dec = ViewDecoder(dim=8, num_heads=2, depth=1, num_views=3)
    with torch.no_grad():
        a, _ = dec(torch.randn(1, 6, 8))
        b, _ = dec(torch.randn(1, 6, 8))
    assert not torch.allclose(a, b)


def test_view_decoder_validation():
    with pytest.raises(ValueError):
        ViewDecoder(8, 2, depth=-1, num_views=3)
    with pytest.raises(ValueError):
        ViewDecoder(8, 2, depth=1, num_views=0)


def test_attention_maps_one_hot_peaks_at_patch_center():
    rows, cols = patch_grid_shape(*IMAGE_HW, PATCH, STRIDE)
    target_row, target_col = 3, 2
    attn = np.zeros((1, rows * cols + 1))
    attn[0, 1 + target_row * cols + target_col] = 1.0
    per_view, fused = attention_maps(attn, IMAGE_HW, PATCH, STRIDE)
    assert per_view.shape == (1, 64, 32)
    assert fused.shape == (64, 32)
    peak = np.unravel_index(per_view[0].argmax(), per_view[0].shape)
    cy = target_row * STRIDE + PATCH // 2
    cx = target_col * STRIDE + PATCH // 2
    # Peak pixel sits within the half-pixel rounding of the patch center.
    assert abs(peak[0] - cy) <= 1 and abs(peak[1] - cx) <= 1
    assert per_view[0].max() == pytest.approx(1.0)
    assert fused.max() == pytest.approx(1.0)
    np.testing.assert_allclose(fused, per_view[0], atol=1e-12)


def test_attention_maps_normalized_per_view():
    rng = np.random.default_rng(6)
    attn = rng.random((5, N_PATCHES + 1))
    per_view, fused = attention_maps(attn, IMAGE_HW, PATCH, STRIDE)
    assert per_view.shape == (5, 64, 32)
    for m in per_view:
        assert m.max() == pytest.approx(1.0)
        assert m.min() >= 0.0
    assert fused.max() == pytest.approx(1.0)


def test_attention_maps_validation():
    with pytest.raises(ValueError):
        attention_maps(np.zeros((2, N_PATCHES)), IMAGE_HW, PATCH, STRIDE)  # missing class col
    with pytest.raises(ValueError):
        attention_maps(np.zeros(N_PATCHES + 1), IMAGE_HW, PATCH, STRIDE)


def test_write_attention_overlays(tmp_path):
    rng = np.random.default_rng(7)
    per_view = rng.random((3, 64, 32))
    fused = rng.random((64, 32))
    image = rng.random((64, 32, 3))
    paths = write_attention_overlays(per_view, fused, image, tmp_path, "img42")
    names = sorted(p.name for p in paths)
    assert names == sorted(
        ["img42_view0.png", "img42_view1.png", "img42_view2.png", "img42_fused.png"]
    )
    for p in paths:
        with Image.open(p) as im:
            assert im.size == (32, 64)
