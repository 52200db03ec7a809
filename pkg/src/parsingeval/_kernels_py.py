"""Pure numpy implementations of the raster kernels.

Mirrors ``_kernels.pyx`` operation for operation; used when the compiled
extension is unavailable or ``PARSINGEVAL_PURE=1`` is set.
"""

import numpy as np


def confusion(gt, pred, n):
    """``n x n`` int64 matrix with ``out[g, p]`` = pixels labelled g in ``gt`` and p in ``pred``."""
    idx = gt.astype(np.int64).ravel() * n + pred.ravel()
    return np.bincount(idx, minlength=n * n).reshape(n, n)


def pair_overlap(a, ar, ac, b, br, bc, n):
    """Per-category intersection and areas of two rasters placed at (row, col) offsets.

    Pixels outside a raster count as background. Returns ``(inter, area_a, area_b)``.
    """
    area_a = np.bincount(a.ravel(), minlength=n).astype(np.int64)
    area_b = np.bincount(b.ravel(), minlength=n).astype(np.int64)
    r0 = max(ar, br)
    c0 = max(ac, bc)
    r1 = min(ar + a.shape[0], br + b.shape[0])
    c1 = min(ac + a.shape[1], bc + b.shape[1])
    inter = np.zeros(n, np.int64)
    if r1 > r0 and c1 > c0:
        wa = a[r0 - ar:r1 - ar, c0 - ac:c1 - ac]
        wb = b[r0 - br:r1 - br, c0 - bc:c1 - bc]
        same = wa == wb
        inter += np.bincount(wa[same], minlength=n)
    return inter, area_a, area_b


def paste(canvas, local, r0, c0):
    """Write the non-background pixels of ``local`` into ``canvas`` at (r0, c0), in place."""
    h, w = local.shape
    window = canvas[r0:r0 + h, c0:c0 + w]
    mask = local != 0
    window[mask] = local[mask]


def max_pool(grid, k):
    h, w = grid.shape
    return grid.reshape(h // k, k, w // k, k).max(axis=(1, 3))


def _source_coords(n_in, n_out):
    scale = n_in / n_out
    s = (np.arange(n_out) + 0.5) * scale - 0.5
    s = np.minimum(np.maximum(s, 0.0), n_in - 1)
    i0 = np.floor(s).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, s - i0


def resize_bilinear(grid, out_h, out_w):
    y0, y1, fy = _source_coords(grid.shape[0], out_h)
    x0, x1, fx = _source_coords(grid.shape[1], out_w)
    fx = fx[None, :]
    top = grid[y0][:, x0] + fx * (grid[y0][:, x1] - grid[y0][:, x0])
    bot = grid[y1][:, x0] + fx * (grid[y1][:, x1] - grid[y1][:, x0])
    return top + fy[:, None] * (bot - top)


def _nearest_index(n_in, n_out):
    scale = n_in / n_out
    return np.minimum(np.floor((np.arange(n_out) + 0.5) * scale).astype(np.intp), n_in - 1)


def resize_nearest(m, out_h, out_w):
    rows = _nearest_index(m.shape[0], out_h)
    cols = _nearest_index(m.shape[1], out_w)
    return np.ascontiguousarray(m[rows][:, cols])
