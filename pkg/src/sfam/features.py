"""Spatial average pooling shared by the classifier channels and CTK
training: action maps are pooled to a fixed grid and flattened."""

import numpy as np

from .errors import DataError

POOL_HW = 16


def _bin_edges(n, bins):
    return np.floor(np.linspace(0, n, bins + 1)).astype(np.int64)


def pool_grid(grid, out_h=POOL_HW, out_w=POOL_HW):
    """Adaptive average pooling of an H x W grid to out_h x out_w."""
    h, w = grid.shape
    if h < out_h or w < out_w:
        raise DataError(f"grid {grid.shape} too small to pool to ({out_h}, {out_w})")
    re = _bin_edges(h, out_h)
    ce = _bin_edges(w, out_w)
    out = np.empty((out_h, out_w), dtype=np.float64)
    for i in range(out_h):
        for j in range(out_w):
            out[i, j] = grid[re[i] : re[i + 1], ce[j] : ce[j + 1]].mean()
    return out


def pool_grid_backward(grad_pooled, in_shape):
    """Adjoint of :func:`pool_grid`: distribute each pooled gradient evenly
    over its source block."""
    h, w = in_shape
    out_h, out_w = grad_pooled.shape
    re = _bin_edges(h, out_h)
    ce = _bin_edges(w, out_w)
    out = np.zeros(in_shape, dtype=np.float64)
    for i in range(out_h):
        for j in range(out_w):
            block = (slice(re[i], re[i + 1]), slice(ce[j], ce[j + 1]))
            n = (re[i + 1] - re[i]) * (ce[j + 1] - ce[j])
            out[block] = grad_pooled[i, j] / n
    return out


def action_map_features(amap, out_hw=POOL_HW):
    """Flattened pooled features of the 8-bit normalized action map image."""
    from .encode import normalize_to_image

    image, _ = normalize_to_image(amap)
    planes = image.astype(np.float64) / 255.0
    pooled = [pool_grid(planes[..., i], out_hw, out_hw) for i in range(3)]
    return np.concatenate([p.ravel() for p in pooled])
