"""The embedding network and the non-learned color-histogram embedder.

The default ``tiny-conv`` architecture is three 3x3 stride-2 conv+ReLU
blocks, global average pooling, and a fully-connected projection to the
embedding space.  Parameters live in one flat float64 vector with the
canonical ordering conv1.W, conv1.b, conv2.W, conv2.b, conv3.W, conv3.b,
fc.W, fc.b (each raveled C-order); the parameter count is the closed form

    sum_i  c_i * (c_{i-1} * 9 + 1)  +  D * (c_3 + 1)

with c_0 = 3.  Forward/backward are im2col + GEMM, so the hot loops sit in
:mod:`compatlearn.kernels`.  Additional architectures can be plugged in via
:func:`register_architecture`.

Embeddings are raw (not length-normalized); training operates on plain
Euclidean distances with a margin.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .colorspace import rgb_to_hsv
from .errors import NumericError, ParameterError, ParseError, ShapeError

KSIZE = 3
STRIDE = 2
PAD = 1

ARCH_TINY_CONV = "tiny-conv"

_ARCHITECTURES: dict[str, type] = {}


def register_architecture(name: str, backbone_cls: type):
    """Register a backbone class (the pluggable-backbone adapter seam).

    The class is constructed as ``backbone_cls(config)`` and must provide
    ``n_params``, ``init(rng) -> flat``, ``forward(theta, images_nchw,
    want_cache) -> (emb, cache)`` and ``backward(theta, cache, demb) -> dtheta``.
    """
    _ARCHITECTURES[name] = backbone_cls


def available_architectures():
    return sorted(_ARCHITECTURES)


@dataclass(frozen=True)
class EncoderConfig:
    architecture: str = ARCH_TINY_CONV
    embedding_dim: int = 64
    input_size: int = 64
    channels: tuple[int, int, int] = (8, 16, 32)
    init_seed: int = 0

    def __post_init__(self):
        if self.embedding_dim < 2:
            raise ParameterError(f"embedding_dim must be >= 2, got {self.embedding_dim}")
        if self.input_size < 8:
            raise ParameterError(f"input_size must be >= 8, got {self.input_size}")
        if self.architecture not in _ARCHITECTURES:
            raise ParameterError(
                f"unknown architecture {self.architecture!r}; "
                f"registered: {available_architectures()}"
            )
        if any(c < 1 for c in self.channels):
            raise ParameterError("channel counts must be positive")


@dataclass(frozen=True)
class EncoderState:
    config: EncoderConfig
    params: np.ndarray  # flat float64, canonical ordering per architecture

    def __post_init__(self):
        expected = backbone(self.config).n_params
        if self.params.shape != (expected,):
            raise ShapeError(
                f"parameter vector has shape {self.params.shape}, expected ({expected},)"
            )


def _out_side(side: int) -> int:
    return (side + 2 * PAD - KSIZE) // STRIDE + 1


class TinyConvBackbone:
    """Three stride-2 conv blocks + GAP + linear projection, with manual
    reverse-mode through im2col/GEMM.  Gradients w.r.t. the input image are
    never needed, so layer 1 skips its col2im."""

    def __init__(self, config: EncoderConfig):
        self.config = config
        c_in = 3
        side = config.input_size
        self.layers = []  # (c_in, c_out, in_side, out_side)
        for c_out in config.channels:
            out = _out_side(side)
            if out < 1:
                raise ParameterError(f"input_size {config.input_size} too small for 3 blocks")
            self.layers.append((c_in, c_out, side, out))
            c_in, side = c_out, out
        self.feat_dim = config.channels[-1]
        self.out_side = side
        d = config.embedding_dim
        self.shapes = []
        for ci, co, _, _ in self.layers:
            self.shapes.append((co, ci, KSIZE, KSIZE))
            self.shapes.append((co,))
        self.shapes.append((d, self.feat_dim))
        self.shapes.append((d,))
        self.n_params = int(sum(np.prod(s) for s in self.shapes))

    def init(self, rng: np.random.Generator) -> np.ndarray:
        """He-normal conv weights (std sqrt(2/fan_in)), 1/sqrt(fan_in) for the
        linear head, zero biases."""
        parts = []
        for ci, co, _, _ in self.layers:
            fan_in = ci * KSIZE * KSIZE
            parts.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=co * fan_in))
            parts.append(np.zeros(co))
        d = self.config.embedding_dim
        parts.append(rng.normal(0.0, np.sqrt(1.0 / self.feat_dim), size=d * self.feat_dim))
        parts.append(np.zeros(d))
        return np.concatenate(parts)

    def unpack(self, theta: np.ndarray) -> list[np.ndarray]:
        views = []
        offset = 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            views.append(theta[offset : offset + size].reshape(shape))
            offset += size
        return views

    def forward(self, theta, x, want_cache=False):
        """x: (n, 3, s, s) float64 -> (n, D) embeddings."""
        tensors = self.unpack(theta)
        cache = [] if want_cache else None
        a = x
        for li, (ci, co, _, out) in enumerate(self.layers):
            w = tensors[2 * li].reshape(co, -1)
            b = tensors[2 * li + 1]
            cols = kernels.im2col(a, KSIZE, STRIDE, PAD)  # (n, p, ci*9)
            z = cols @ w.T + b  # (n, p, co)
            mask = z > 0
            a = np.where(mask, z, 0.0)
            if want_cache:
                cache.append((cols, mask))
            a = np.ascontiguousarray(
                a.transpose(0, 2, 1).reshape(a.shape[0], co, out, out)
            )
        pooled = a.mean(axis=(2, 3))  # (n, feat)
        w_fc, b_fc = tensors[-2], tensors[-1]
        emb = pooled @ w_fc.T + b_fc
        if want_cache:
            cache.append(pooled)
        return emb, cache

    def backward(self, theta, cache, demb):
        """Accumulate d(loss)/d(theta) given d(loss)/d(embeddings)."""
        tensors = self.unpack(theta)
        grads = [np.zeros_like(t) for t in tensors]
        pooled = cache[-1]
        w_fc = tensors[-2]
        grads[-2][:] = demb.T @ pooled
        grads[-1][:] = demb.sum(axis=0)
        dpooled = demb @ w_fc  # (n, feat)

        n = dpooled.shape[0]
        side = self.out_side
        da = np.broadcast_to(
            dpooled[:, :, None, None] / (side * side),
            (n, self.feat_dim, side, side),
        )
        for li in range(len(self.layers) - 1, -1, -1):
            ci, co, in_side, out = self.layers[li]
            cols, mask = cache[li]
            dz = np.ascontiguousarray(
                da.reshape(n, co, out * out).transpose(0, 2, 1)
            )  # (n, p, co)
            dz = np.where(mask, dz, 0.0)
            w = tensors[2 * li].reshape(co, -1)
            grads[2 * li][:] = (
                np.einsum("npo,npc->oc", dz, cols).reshape(grads[2 * li].shape)
            )
            grads[2 * li + 1][:] = dz.sum(axis=(0, 1))
            if li > 0:
                dcols = dz @ w  # (n, p, ci*9)
                da = kernels.col2im(dcols, (n, ci, in_side, in_side), KSIZE, STRIDE, PAD)
        return np.concatenate([g.ravel() for g in grads])


register_architecture(ARCH_TINY_CONV, TinyConvBackbone)


def backbone(config: EncoderConfig):
    return _ARCHITECTURES[config.architecture](config)


def init_encoder(config: EncoderConfig) -> EncoderState:
    """Deterministic in ``config.init_seed``; see the backbone for the scheme."""
    net = backbone(config)
    rng = np.random.default_rng(config.init_seed)
    return EncoderState(config=config, params=net.init(rng))


def _to_nchw(config: EncoderConfig, images) -> np.ndarray:
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise ShapeError(f"expected images of shape (n, h, w, 3), got {arr.shape}")
    if arr.shape[1] != config.input_size or arr.shape[2] != config.input_size:
        raise ShapeError(
            f"images are {arr.shape[1]}x{arr.shape[2]} but the encoder expects "
            f"{config.input_size}x{config.input_size}"
        )
    return np.ascontiguousarray(arr.transpose(0, 3, 1, 2))


def embed(state: EncoderState, images, chunk: int = 256) -> np.ndarray:
    """Embed a batch of (n, h, w, 3) images in [0,1] into rows of an (n, D) matrix.

    Pure in (params, images); row i depends only on image i.
    """
    x = _to_nchw(state.config, images)
    net = backbone(state.config)
    out = np.empty((x.shape[0], state.config.embedding_dim))
    for s in range(0, x.shape[0], chunk):
        out[s : s + chunk], _ = net.forward(state.params, x[s : s + chunk])
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite values in embeddings")
    return out


def loss_gradient(state: EncoderState, images, loss_fn, chunk: int = 128):
    """Loss and d(loss)/d(theta) for a loss defined on the batch embeddings.

    ``loss_fn(embeddings) -> (loss, dloss_dembeddings)`` couples rows freely
    (triplets, mining); the encoder is then re-run per chunk with caches to
    accumulate the flat parameter gradient, keeping memory bounded.
    """
    x = _to_nchw(state.config, images)
    net = backbone(state.config)
    n = x.shape[0]
    emb = np.empty((n, state.config.embedding_dim))
    for s in range(0, n, chunk):
        emb[s : s + chunk], _ = net.forward(state.params, x[s : s + chunk])

    loss, demb = loss_fn(emb)
    loss = float(loss)
    if not np.isfinite(loss):
        raise NumericError(f"loss is non-finite: {loss}")
    demb = np.asarray(demb, dtype=np.float64)
    if demb.shape != emb.shape:
        raise ShapeError(f"loss_fn gradient has shape {demb.shape}, expected {emb.shape}")
    if not np.all(np.isfinite(demb)):
        raise NumericError("non-finite embedding gradient")

    grad = np.zeros_like(state.params)
    for s in range(0, n, chunk):
        _, cache = net.forward(state.params, x[s : s + chunk], want_cache=True)
        grad += net.backward(state.params, cache, demb[s : s + chunk])
    return loss, grad


def color_histogram_embed(image, bins_per_channel: int = 6) -> np.ndarray:
    """Joint HSV histogram over non-background pixels, L1-normalized.

    Background pixels are those within 0.02 of pure white on every channel;
    an all-background image maps to the uniform vector.  Length is
    ``bins_per_channel ** 3``.
    """
    if bins_per_channel < 1:
        raise ParameterError("bins_per_channel must be >= 1")
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected an (h, w, 3) image, got {arr.shape}")
    b = bins_per_channel
    fg = ~np.all(arr >= 0.98, axis=2)
    if not fg.any():
        return np.full(b**3, 1.0 / b**3)
    hsv = rgb_to_hsv(arr[fg])
    idx = np.minimum((hsv * b).astype(np.int64), b - 1)
    flat = (idx[:, 0] * b + idx[:, 1]) * b + idx[:, 2]
    counts = np.bincount(flat, minlength=b**3).astype(np.float64)
    return counts / counts.sum()


CHECKPOINT_MAGIC = b"CLCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, state: EncoderState, meta: dict | None = None) -> Path:
    """Versioned header + config JSON + little-endian float32 params + sha256."""
    header = {
        "config": {
            "architecture": state.config.architecture,
            "embedding_dim": state.config.embedding_dim,
            "input_size": state.config.input_size,
            "channels": list(state.config.channels),
            "init_seed": state.config.init_seed,
        },
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    params32 = state.params.astype("<f4")
    blob = (
        CHECKPOINT_MAGIC
        + struct.pack("<I", CHECKPOINT_VERSION)
        + struct.pack("<I", len(header_bytes))
        + header_bytes
        + struct.pack("<Q", params32.size)
        + params32.tobytes()
    )
    digest = hashlib.sha256(blob).digest()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob + digest)
    return path


def load_checkpoint(path) -> tuple[EncoderState, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 44 or raw[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a compatlearn checkpoint")
    blob, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(blob).digest() != digest:
        raise ParseError(f"{path}: checksum mismatch (corrupt checkpoint)")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    header_len = struct.unpack_from("<I", blob, 8)[0]
    header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    offset = 12 + header_len
    n_params = struct.unpack_from("<Q", blob, offset)[0]
    params = np.frombuffer(
        blob, dtype="<f4", count=n_params, offset=offset + 8
    ).astype(np.float64)
    cfg = header["config"]
    config = EncoderConfig(
        architecture=cfg["architecture"],
        embedding_dim=int(cfg["embedding_dim"]),
        input_size=int(cfg["input_size"]),
        channels=tuple(cfg["channels"]),
        init_seed=int(cfg["init_seed"]),
    )
    return EncoderState(config=config, params=params), header.get("meta", {})
