"""Backend parity and correctness of the hot kernels."""

import numpy as np
import pytest

from compatlearn import kernels

BACKENDS = sorted(kernels.backends())


def _prep(name, *arrays):
    mod = kernels.backends()[name]
    return mod, [np.ascontiguousarray(a, dtype=np.float64) for a in arrays]


@pytest.fixture(autouse=True)
def _require_compiled():
    # The package ships the compiled core; parity tests are meaningless without it.
    assert "python" in BACKENDS
    if "compiled" not in BACKENDS:
        pytest.skip("compiled kernels not built")


@pytest.mark.parametrize("shape,ksize,stride,pad", [
    ((2, 3, 9, 9), 3, 2, 1),
    ((1, 1, 8, 8), 3, 1, 1),
    ((3, 4, 10, 7), 3, 2, 0),
    ((2, 2, 6, 6), 5, 1, 2),
])
def test_im2col_backend_parity(shape, ksize, stride, pad):
    x = np.random.default_rng(0).normal(size=shape)
    results = {}
    for name in BACKENDS:
        mod, (xc,) = _prep(name, x)
        results[name] = mod.im2col(xc, ksize, stride, pad)
    assert np.array_equal(results["python"], results["compiled"])


def test_im2col_matches_naive_patch_extraction():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3, 7, 7))
    ksize, stride, pad = 3, 2, 1
    cols = kernels.im2col(x, ksize, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = (7 + 2 * pad - ksize) // stride + 1
    for n in range(2):
        for oi in range(out):
            for oj in range(out):
                patch = xp[n, :, oi * stride : oi * stride + ksize,
                           oj * stride : oj * stride + ksize]
                assert np.array_equal(cols[n, oi * out + oj], patch.ravel())


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (2, 0)])
def test_col2im_is_adjoint_of_im2col(stride, pad):
    # <im2col(x), g> == <x, col2im(g)> characterizes the scatter exactly.
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 3, 8, 8))
    cols = kernels.im2col(x, 3, stride, pad)
    g = rng.normal(size=cols.shape)
    back = kernels.col2im(g, x.shape, 3, stride, pad)
    assert np.isclose((cols * g).sum(), (x * back).sum(), rtol=1e-12)


def test_col2im_backend_parity():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3, 9, 9))
    cols = kernels.im2col(x, 3, 2, 1)
    g = rng.normal(size=cols.shape)
    results = {}
    for name in BACKENDS:
        mod, (gc,) = _prep(name, g)
        results[name] = mod.col2im(gc, x.shape, 3, 2, 1)
    assert np.allclose(results["python"], results["compiled"], rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_affine_warp_identity_is_exact(backend):
    rng = np.random.default_rng(4)
    img = rng.uniform(size=(12, 9, 3))
    ident = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    mod, (imgc, m) = _prep(backend, img, ident)
    assert np.array_equal(mod.affine_warp(imgc, m, 0.5), img)


@pytest.mark.parametrize("backend", BACKENDS)
def test_affine_warp_integer_translation(backend):
    rng = np.random.default_rng(5)
    img = rng.uniform(size=(10, 10, 3))
    shift = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 3.0]])  # out(x,y) <- in(x+2, y+3)
    mod, (imgc, m) = _prep(backend, img, shift)
    out = mod.affine_warp(imgc, m, -1.0)
    assert np.array_equal(out[:7, :8], img[3:, 2:])
    assert np.all(out[7:] == -1.0)
    assert np.all(out[:, 8:] == -1.0)


def test_affine_warp_backend_parity():
    rng = np.random.default_rng(6)
    img = rng.uniform(size=(16, 13, 3))
    m = np.array([[0.93, 0.11, -0.7], [-0.08, 1.07, 0.4]])
    outs = {}
    for name in BACKENDS:
        mod, (imgc, mc) = _prep(name, img, m)
        outs[name] = mod.affine_warp(imgc, mc, 1.0)
    assert np.allclose(outs["python"], outs["compiled"], rtol=1e-12, atol=1e-14)


def test_pairwise_sqdist_matches_brute_force_and_parity():
    rng = np.random.default_rng(7)
    q = rng.normal(size=(11, 5))
    k = rng.normal(size=(17, 5))
    brute = np.array([[np.sum((qq - kk) ** 2) for kk in k] for qq in q])
    for name in BACKENDS:
        mod, (qc, kc) = _prep(name, q, k)
        assert np.allclose(mod.pairwise_sqdist(qc, kc), brute, rtol=1e-12)


def test_pairwise_sqdist_duplicate_rows_tie_exactly():
    rng = np.random.default_rng(8)
    k = rng.normal(size=(6, 4))
    k[4] = k[1]  # exact duplicate
    q = rng.normal(size=(3, 4))
    for name in BACKENDS:
        mod, (qc, kc) = _prep(name, q, k)
        d = mod.pairwise_sqdist(qc, kc)
        assert np.array_equal(d[:, 1], d[:, 4])
