"""Backend selection for the raster kernels.

The compiled extension is used when importable; set ``PARSINGEVAL_PURE=1``
to force the numpy fallback.
"""

import os

import numpy as np

from . import _kernels_py

_NAMES = ("confusion", "pair_overlap", "paste", "max_pool", "resize_bilinear", "resize_nearest")


def _load_compiled():
    if os.environ.get("PARSINGEVAL_PURE", "") not in ("", "0"):
        return None
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py


def available_backends():
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def confusion(gt, pred, n):
    return _impl.confusion(np.ascontiguousarray(gt, np.uint8), np.ascontiguousarray(pred, np.uint8), n)


def pair_overlap(a, ar, ac, b, br, bc, n):
    return _impl.pair_overlap(
        np.ascontiguousarray(a, np.uint8), ar, ac, np.ascontiguousarray(b, np.uint8), br, bc, n
    )


def paste(canvas, local, r0, c0):
    _impl.paste(canvas, np.ascontiguousarray(local, np.uint8), r0, c0)


def max_pool(grid, k):
    return _impl.max_pool(np.ascontiguousarray(grid, np.float64), k)


def resize_bilinear(grid, out_h, out_w):
    return _impl.resize_bilinear(np.ascontiguousarray(grid, np.float64), out_h, out_w)


def resize_nearest(m, out_h, out_w):
    return _impl.resize_nearest(np.ascontiguousarray(m, np.uint8), out_h, out_w)
