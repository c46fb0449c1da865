"""Pure-numpy implementations of the hot kernels.

These are the reference semantics for the compiled Cython backend and the
fallback used when the extension is not built.  Every function here must
agree with its compiled twin to floating-point noise; ``tests/test_kernels.py``
enforces parity.
"""

import numpy as np


def im2col(x, ksize, stride, pad):
    """Unfold sliding conv windows of a batch into a patch matrix.

    Parameters
    ----------
    x : float64 array, shape (n, c, h, w)
    ksize, stride, pad : int
        Square kernel size, stride and zero padding.

    Returns
    -------
    float64 array, shape (n, out_h*out_w, c*ksize*ksize)
        Output positions are ordered row-major; the flat patch axis is
        ordered (channel, kernel row, kernel col), matching a conv weight
        of shape (c_out, c, ksize, ksize) flattened to (c_out, -1).
    """
    n, c, h, w = x.shape
    out_h = (h + 2 * pad - ksize) // stride + 1
    out_w = (w + 2 * pad - ksize) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, ksize, ksize, out_h, out_w), dtype=x.dtype)
    for ki in range(ksize):
        i_max = ki + stride * out_h
        for kj in range(ksize):
            j_max = kj + stride * out_w
            cols[:, :, ki, kj, :, :] = xp[:, :, ki:i_max:stride, kj:j_max:stride]
    return np.ascontiguousarray(
        cols.transpose(0, 4, 5, 1, 2, 3).reshape(n, out_h * out_w, c * ksize * ksize)
    )


def col2im(cols, x_shape, ksize, stride, pad):
    """Adjoint of :func:`im2col`: scatter-add patch gradients back to images.

    ``cols`` has the layout produced by ``im2col``; ``x_shape`` is the
    (n, c, h, w) shape of the original input.
    """
    n, c, h, w = x_shape
    out_h = (h + 2 * pad - ksize) // stride + 1
    out_w = (w + 2 * pad - ksize) // stride + 1
    cols6 = cols.reshape(n, out_h, out_w, c, ksize, ksize).transpose(0, 3, 4, 5, 1, 2)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for ki in range(ksize):
        i_max = ki + stride * out_h
        for kj in range(ksize):
            j_max = kj + stride * out_w
            xp[:, :, ki:i_max:stride, kj:j_max:stride] += cols6[:, :, ki, kj, :, :]
    if pad == 0:
        return xp
    return np.ascontiguousarray(xp[:, :, pad : pad + h, pad : pad + w])


def affine_warp(img, matrix, fill):
    """Bilinear warp of an (h, w, c) image under an output->input affine map.

    ``matrix`` is 2x3 acting on (x, y) pixel coordinates with x = column and
    y = row: ``x_in = m00*x_out + m01*y_out + m02`` and likewise for y.
    Samples falling outside the grid blend toward the scalar ``fill``.
    The identity matrix reproduces the input exactly.
    """
    h, w, c = img.shape
    m = np.asarray(matrix, dtype=np.float64)
    xo, yo = np.meshgrid(
        np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64)
    )
    xi = m[0, 0] * xo + m[0, 1] * yo + m[0, 2]
    yi = m[1, 0] * xo + m[1, 1] * yo + m[1, 2]
    x0 = np.floor(xi)
    y0 = np.floor(yi)
    fx = xi - x0
    fy = yi - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    out = np.zeros((h, w, c), dtype=np.float64)
    corners = (
        (0, 0, (1.0 - fy) * (1.0 - fx)),
        (0, 1, (1.0 - fy) * fx),
        (1, 0, fy * (1.0 - fx)),
        (1, 1, fy * fx),
    )
    for dy, dx, wgt in corners:
        xs = x0 + dx
        ys = y0 + dy
        inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        vals = np.where(
            inside[..., None],
            img[np.clip(ys, 0, h - 1), np.clip(xs, 0, w - 1)],
            fill,
        )
        out += wgt[..., None] * vals
    return out


def pairwise_sqdist(queries, keys):
    """Squared Euclidean distances between query and key rows, shape (k, n).

    Computed in subtraction form (never the a^2 + b^2 - 2ab expansion) so
    duplicated rows produce bit-exact ties.
    """
    k = queries.shape[0]
    out = np.empty((k, keys.shape[0]), dtype=np.float64)
    chunk = max(1, 4_000_000 // max(1, keys.size))
    for s in range(0, k, chunk):
        d = queries[s : s + chunk, None, :] - keys[None, :, :]
        out[s : s + chunk] = np.einsum("ijk,ijk->ij", d, d)
    return out
