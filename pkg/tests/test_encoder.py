"""Encoder contracts: shapes, determinism, gradients, baseline, checkpoints."""

import numpy as np
import pytest

from compatlearn import encoder as enc
from compatlearn.colorspace import rgb_to_hsv
from compatlearn.errors import ParameterError, ParseError, ShapeError
from compatlearn.synthcorpus import SynthSpec, generate_corpus

CFG = enc.EncoderConfig(embedding_dim=16, input_size=16, channels=(4, 6, 8), init_seed=3)


def images(n, size=16, seed=0):
    return np.random.default_rng(seed).uniform(size=(n, size, size, 3))


class TestConfigAndInit:
    def test_param_count_closed_form_default(self):
        # conv: c_out*(c_in*9 + 1) stacked, then D*(c3 + 1); pinned regression
        net = enc.backbone(enc.EncoderConfig())
        assert net.n_params == 8144

    def test_param_count_formula_general(self):
        c = (4, 6, 8)
        d = 16
        expected = 4 * (3 * 9 + 1) + 6 * (4 * 9 + 1) + 8 * (6 * 9 + 1) + d * (8 + 1)
        assert enc.backbone(CFG).n_params == expected

    def test_init_deterministic(self):
        s1 = enc.init_encoder(CFG)
        s2 = enc.init_encoder(CFG)
        assert np.array_equal(s1.params, s2.params)
        s3 = enc.init_encoder(
            enc.EncoderConfig(embedding_dim=16, input_size=16, channels=(4, 6, 8), init_seed=4)
        )
        assert not np.array_equal(s1.params, s3.params)

    def test_biases_start_at_zero(self):
        state = enc.init_encoder(CFG)
        views = enc.backbone(CFG).unpack(state.params)
        for b in views[1::2]:
            assert not b.any()

    def test_invalid_configs(self):
        with pytest.raises(ParameterError):
            enc.EncoderConfig(embedding_dim=1)
        with pytest.raises(ParameterError):
            enc.EncoderConfig(input_size=4)
        with pytest.raises(ParameterError):
            enc.EncoderConfig(architecture="resnet-999")

    def test_minimal_embedding_dim(self):
        cfg = enc.EncoderConfig(embedding_dim=2, input_size=16, channels=(2, 2, 2))
        state = enc.init_encoder(cfg)
        assert enc.embed(state, images(3)).shape == (3, 2)


class TestEmbed:
    def test_duplicate_rows_identical(self):
        state = enc.init_encoder(CFG)
        x = images(4)
        x[2] = x[0]
        e = enc.embed(state, x)
        assert np.array_equal(e[2], e[0])

    def test_permutation_equivariance(self):
        state = enc.init_encoder(CFG)
        x = images(6)
        perm = np.array([4, 0, 5, 2, 1, 3])
        assert np.allclose(enc.embed(state, x[perm]), enc.embed(state, x)[perm])

    def test_chunking_does_not_change_rows(self):
        state = enc.init_encoder(CFG)
        x = images(7)
        assert np.allclose(enc.embed(state, x, chunk=2), enc.embed(state, x, chunk=64))

    def test_zero_projection_gives_zero_embeddings(self):
        state = enc.init_encoder(CFG)
        params = state.params.copy()
        net = enc.backbone(CFG)
        fc_size = CFG.embedding_dim * net.feat_dim + CFG.embedding_dim
        params[-fc_size:] = 0.0
        zeroed = enc.EncoderState(config=CFG, params=params)
        assert not enc.embed(zeroed, images(3)).any()

    def test_wrong_size_rejected(self):
        state = enc.init_encoder(CFG)
        with pytest.raises(ShapeError):
            enc.embed(state, images(2, size=20))
        with pytest.raises(ShapeError):
            enc.embed(state, np.zeros((2, 16, 16)))


class _LinearBackbone:
    """Single linear layer on flattened pixels; the hand-derivable oracle
    registered through the pluggable-architecture seam."""

    def __init__(self, config):
        self.config = config
        self.in_dim = 3 * config.input_size**2
        self.d = config.embedding_dim
        self.n_params = self.d * self.in_dim + self.d

    def init(self, rng):
        w = rng.normal(0.0, 1.0 / np.sqrt(self.in_dim), size=self.d * self.in_dim)
        return np.concatenate([w, np.zeros(self.d)])

    def _views(self, theta):
        return theta[: self.d * self.in_dim].reshape(self.d, self.in_dim), theta[self.d * self.in_dim :]

    def forward(self, theta, x, want_cache=False):
        w, b = self._views(theta)
        flat = x.reshape(x.shape[0], -1)
        return flat @ w.T + b, flat if want_cache else None

    def backward(self, theta, cache, demb):
        dw = demb.T @ cache
        db = demb.sum(axis=0)
        return np.concatenate([dw.ravel(), db])


enc.register_architecture("test-linear", _LinearBackbone)


class TestLossGradient:
    def test_constant_loss_zero_gradient(self):
        state = enc.init_encoder(CFG)
        loss, grad = enc.loss_gradient(
            state, images(4), lambda e: (7.5, np.zeros_like(e))
        )
        assert loss == 7.5
        assert not grad.any()

    def test_sum_loss_on_linear_encoder_matches_closed_form(self):
        # d/dW of sum(emb) is the per-pixel input sums replicated per row of W
        cfg = enc.EncoderConfig(
            architecture="test-linear", embedding_dim=3, input_size=8, init_seed=1
        )
        state = enc.init_encoder(cfg)
        x = images(5, size=8, seed=2)
        loss, grad = enc.loss_gradient(state, x, lambda e: (float(e.sum()), np.ones_like(e)))
        flat = x.transpose(0, 3, 1, 2).reshape(5, -1)  # encoder consumes NCHW
        expected_w = np.tile(flat.sum(axis=0), 3)
        expected_b = np.full(3, 5.0)
        assert np.allclose(grad, np.concatenate([expected_w, expected_b]))
        emb = enc.embed(state, x)
        assert np.isclose(loss, emb.sum())

    def test_gradient_matches_finite_differences_on_tiny_conv(self):
        state = enc.init_encoder(CFG)
        x = images(4, seed=5)
        rng = np.random.default_rng(6)
        w = rng.normal(size=(4, CFG.embedding_dim))

        def loss_fn(e):
            return float((e * w).sum()), w

        loss, grad = enc.loss_gradient(state, x, loss_fn, chunk=2)
        net = enc.backbone(CFG)
        xn = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
        h = 1e-5
        for i in rng.choice(grad.size, size=30, replace=False):
            tp = state.params.copy()
            tp[i] += h
            up = float((net.forward(tp, xn)[0] * w).sum())
            tp[i] -= 2 * h
            down = float((net.forward(tp, xn)[0] * w).sum())
            fd = (up - down) / (2 * h)
            assert np.isclose(grad[i], fd, rtol=1e-4, atol=1e-8)

    def test_non_finite_loss_rejected(self):
        state = enc.init_encoder(CFG)
        from compatlearn.errors import NumericError

        with pytest.raises(NumericError):
            enc.loss_gradient(state, images(2), lambda e: (float("nan"), np.zeros_like(e)))


class TestColorHistogram:
    def test_solid_color_dominant_bin(self):
        spec = SynthSpec(n_outfits=10, seed=1, noise_std=0.0, texture_kinds=("solid",))
        catalog, _ = generate_corpus(spec)
        img = catalog.items[next(iter(catalog.items))].pixels()
        hist = enc.color_histogram_embed(img)
        assert hist.max() > 0.9

    def test_l1_normalized(self):
        rng = np.random.default_rng(0)
        hist = enc.color_histogram_embed(rng.uniform(size=(16, 16, 3)))
        assert np.isclose(hist.sum(), 1.0, atol=1e-9)
        assert hist.shape == (216,)

    def test_all_background_uniform(self):
        hist = enc.color_histogram_embed(np.ones((8, 8, 3)))
        assert np.allclose(hist, 1.0 / 216)

    def test_same_theme_histograms_closer(self):
        # Monte Carlo on the planted corpus: same-theme pairs should be closer
        # than cross-theme pairs at least 95% of the time
        spec = SynthSpec(n_outfits=60, seed=4, noise_std=0.02)
        catalog, gt = generate_corpus(spec)
        ids = sorted(catalog.items)
        hists = {i: enc.color_histogram_embed(catalog.items[i].pixels()) for i in ids}
        rng = np.random.default_rng(5)
        wins = 0
        trials = 400
        by_theme = {}
        for i in ids:
            by_theme.setdefault(gt[i], []).append(i)
        themes = [t for t, members in by_theme.items() if len(members) >= 2]
        for _ in range(trials):
            t_same = themes[rng.integers(len(themes))]
            a, b = rng.choice(len(by_theme[t_same]), size=2, replace=False)
            same = np.linalg.norm(hists[by_theme[t_same][a]] - hists[by_theme[t_same][b]])
            t_other = themes[rng.integers(len(themes))]
            while t_other == t_same:
                t_other = themes[rng.integers(len(themes))]
            c = by_theme[t_other][rng.integers(len(by_theme[t_other]))]
            cross = np.linalg.norm(hists[by_theme[t_same][a]] - hists[c])
            wins += same < cross
        assert wins / trials >= 0.95

    def test_bins_parameter(self):
        img = np.full((8, 8, 3), 0.5)
        assert enc.color_histogram_embed(img, bins_per_channel=4).shape == (64,)
        with pytest.raises(ParameterError):
            enc.color_histogram_embed(img, bins_per_channel=0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        state = enc.init_encoder(CFG)
        meta = {"alpha": 0.05, "note": "x"}
        path = enc.save_checkpoint(tmp_path / "a.ckpt", state, meta)
        loaded, loaded_meta = enc.load_checkpoint(path)
        assert loaded.config == CFG
        assert loaded_meta == meta
        # float32 serialization: round trip matches at float32 resolution
        assert np.allclose(loaded.params, state.params, atol=1e-6)
        assert np.array_equal(
            loaded.params, state.params.astype("<f4").astype(np.float64)
        )

    def test_corruption_detected(self, tmp_path):
        state = enc.init_encoder(CFG)
        path = enc.save_checkpoint(tmp_path / "a.ckpt", state)
        raw = bytearray(path.read_bytes())
        raw[50] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ParseError, match="checksum"):
            enc.load_checkpoint(path)

    def test_wrong_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.ckpt"
        p.write_bytes(b"not a checkpoint at all" * 4)
        with pytest.raises(ParseError):
            enc.load_checkpoint(p)
