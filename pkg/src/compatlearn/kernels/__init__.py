"""Hot-kernel backend selection.

The compiled Cython extension is preferred when present; the pure-numpy
backend is the reference implementation and the import-time fallback.
``COMPATLEARN_KERNELS=python`` (or ``=compiled``) forces a backend, which
the parity tests and the kernel benchmark rely on.
"""

import os

import numpy as np

from . import numpy_backend

try:
    from . import _ckernels as _compiled
except ImportError:
    _compiled = None

_choice = os.environ.get("COMPATLEARN_KERNELS", "auto")
if _choice == "python":
    active = numpy_backend
elif _choice == "compiled":
    if _compiled is None:
        raise ImportError(
            "COMPATLEARN_KERNELS=compiled but the _ckernels extension is not built"
        )
    active = _compiled
elif _choice == "auto":
    active = _compiled if _compiled is not None else numpy_backend
else:
    raise ValueError(f"COMPATLEARN_KERNELS must be auto|compiled|python, got {_choice!r}")


def backend_name():
    """Name of the backend selected at import: 'compiled' or 'python'."""
    return "compiled" if active is _compiled else "python"


def backends():
    """Mapping of available backend name -> module (for parity tests/benchmarks)."""
    out = {"python": numpy_backend}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def _c64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def im2col(x, ksize, stride, pad):
    return active.im2col(_c64(x), ksize, stride, pad)


def col2im(cols, x_shape, ksize, stride, pad):
    return active.col2im(_c64(cols), tuple(x_shape), ksize, stride, pad)


def affine_warp(img, matrix, fill):
    return active.affine_warp(_c64(img), _c64(matrix), float(fill))


def pairwise_sqdist(queries, keys):
    return active.pairwise_sqdist(_c64(queries), _c64(keys))
