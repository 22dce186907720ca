import math

import numpy as np
import pytest

from pointsup.head import (
    FeatureGrid,
    FourierEncoding,
    HeadArch,
    ParamHead,
    PointHeadParams,
    encode_position,
    head_backward,
    head_forward,
    head_forward_batch,
    l2_param_loss,
    param_head,
    pool_region_features,
    sample_point_features,
)
from pointsup.masks import BoundingBox

TINY = HeadArch(feature_dim=2, pe_dim=2, hidden=(2, 2, 2))


def manual_forward(layers, x):
    """Oracle: explicit scalar MLP evaluation, no shared kernel code."""
    a = list(x)
    for li, (w, b) in enumerate(layers):
        out = []
        for j in range(len(b)):
            s = b[j]
            for k in range(len(a)):
                s += w[j][k] * a[k]
            if li < len(layers) - 1:
                s = max(s, 0.0)
            out.append(s)
        a = out
    return a[0]


def rel_err(a, b):
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return np.max(np.abs(np.asarray(a) - np.asarray(b))) / denom


class TestArchAndPacking:
    def test_param_count_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            f, p = int(rng.integers(1, 9)), int(rng.integers(0, 9))
            hidden = tuple(int(h) for h in rng.integers(1, 9, size=3))
            arch = HeadArch(f, p, hidden)
            by_shapes = sum(o * i + o for o, i in arch.layer_shapes)
            assert arch.param_count == by_shapes

    def test_pack_unpack_round_trip(self):
        rng = np.random.default_rng(1)
        arch = HeadArch(3, 4, (5, 2, 3))
        layers = [(rng.standard_normal(s), rng.standard_normal(s[0])) for s in arch.layer_shapes]
        params = PointHeadParams.pack(layers, arch)
        for (w, b), (w2, b2) in zip(layers, params.unpack()):
            assert np.array_equal(w, w2) and np.array_equal(b, b2)

    def test_depth_fixed_at_three(self):
        with pytest.raises(ValueError):
            HeadArch(2, 2, (4, 4))

    def test_length_validated(self):
        with pytest.raises(ValueError):
            PointHeadParams(np.zeros(5), TINY)


class TestFourierEncoding:
    def test_origin(self):
        enc = FourierEncoding(m=5, sigma=1.0, seed=3)
        out = encode_position((0.0, 0.0), enc)
        assert np.array_equal(out[:5], np.zeros(5))
        assert np.array_equal(out[5:], np.ones(5))

    def test_zero_matrix(self):
        enc = FourierEncoding(m=4, sigma=0.0, seed=0)
        for p in [(0.3, -0.2), (0.5, 0.5)]:
            out = encode_position(p, enc)
            assert np.array_equal(out, np.concatenate([np.zeros(4), np.ones(4)]))

    def test_matches_direct_trig(self):
        enc = FourierEncoding(m=4, sigma=1.0, seed=9)
        p = np.array([0.21, -0.37])
        got = encode_position(p, enc)
        for j in range(4):
            phase = 2 * math.pi * (enc.b_matrix[j, 0] * p[0] + enc.b_matrix[j, 1] * p[1])
            assert got[j] == pytest.approx(math.sin(phase), abs=1e-12)
            assert got[4 + j] == pytest.approx(math.cos(phase), abs=1e-12)

    def test_norm_bound_and_determinism(self):
        enc1 = FourierEncoding(m=16, sigma=2.0, seed=5)
        enc2 = FourierEncoding(m=16, sigma=2.0, seed=5)
        assert np.array_equal(enc1.b_matrix, enc2.b_matrix)
        rng = np.random.default_rng(2)
        for _ in range(20):
            out = enc1.encode(rng.uniform(-0.5, 0.5, 2))
            assert np.linalg.norm(out) <= math.sqrt(2 * 16) + 1e-12

    def test_frozen(self):
        enc = FourierEncoding(m=2)
        with pytest.raises(ValueError):
            enc.b_matrix[0, 0] = 1.0


class TestHeadForward:
    def test_zero_params_zero_logit(self):
        params = PointHeadParams.zeros(TINY)
        rng = np.random.default_rng(3)
        for _ in range(5):
            assert head_forward(params, rng.standard_normal(2), rng.standard_normal(2)) == 0.0

    def test_manual_oracle(self):
        rng = np.random.default_rng(4)
        layers = [
            (rng.standard_normal(s) * 0.7, rng.standard_normal(s[0]) * 0.2)
            for s in TINY.layer_shapes
        ]
        params = PointHeadParams.pack(layers, TINY)
        for _ in range(10):
            feature = rng.standard_normal(2)
            pe = rng.standard_normal(2)
            want = manual_forward(
                [(w.tolist(), b.tolist()) for w, b in layers], np.concatenate([feature, pe])
            )
            assert head_forward(params, feature, pe) == pytest.approx(want, rel=1e-12)

    def test_distinct_params_distinct_logits(self):
        rng = np.random.default_rng(5)
        p1 = PointHeadParams(rng.standard_normal(TINY.param_count), TINY)
        p2 = PointHeadParams(rng.standard_normal(TINY.param_count), TINY)
        feature, pe = rng.standard_normal(2), rng.standard_normal(2)
        assert head_forward(p1, feature, pe) != head_forward(p2, feature, pe)

    def test_dim_mismatch(self):
        params = PointHeadParams.zeros(TINY)
        with pytest.raises(ValueError):
            head_forward(params, np.zeros(3), np.zeros(2))


class TestHeadBackward:
    def test_zero_upstream(self):
        rng = np.random.default_rng(6)
        params = PointHeadParams(rng.standard_normal(TINY.param_count), TINY)
        dp, df = head_backward(params, rng.standard_normal(2), rng.standard_normal(2), 0.0)
        assert np.all(dp == 0.0) and np.all(df == 0.0)

    def _fd_check(self, arch, rng, eps=1e-5):
        theta = rng.standard_normal(arch.param_count) * 0.6
        params = PointHeadParams(theta, arch)
        feature = rng.standard_normal(arch.feature_dim)
        pe = rng.standard_normal(arch.pe_dim)
        upstream = rng.standard_normal()
        dp, df = head_backward(params, feature, pe, upstream)
        fd_p = np.zeros_like(theta)
        for i in range(len(theta)):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += eps
            tm[i] -= eps
            fd_p[i] = (
                head_forward(PointHeadParams(tp, arch), feature, pe)
                - head_forward(PointHeadParams(tm, arch), feature, pe)
            ) / (2 * eps) * upstream
        fd_f = np.zeros_like(feature)
        for i in range(len(feature)):
            fp, fm = feature.copy(), feature.copy()
            fp[i] += eps
            fm[i] -= eps
            fd_f[i] = (head_forward(params, fp, pe) - head_forward(params, fm, pe)) / (2 * eps) * upstream
        return rel_err(dp, fd_p), rel_err(df, fd_f)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(8):
            ep, ef = self._fd_check(TINY, rng)
            assert ep < 1e-6 and ef < 1e-6


class TestL2Loss:
    def test_zero(self):
        assert l2_param_loss(np.zeros(4))[0] == 0.0

    def test_analytic(self):
        loss, grad = l2_param_loss(np.array([1.0, 2.0]), weight=1e-5)
        assert loss == pytest.approx(5e-5)
        assert np.allclose(grad, [2e-5, 4e-5])

    def test_finite_differences(self):
        rng = np.random.default_rng(8)
        theta = rng.standard_normal(10)
        loss, grad = l2_param_loss(theta, weight=1e-5)
        eps = 1e-4
        for i in range(10):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += eps
            tm[i] -= eps
            fd = (l2_param_loss(tp, 1e-5)[0] - l2_param_loss(tm, 1e-5)[0]) / (2 * eps)
            assert abs(grad[i] - fd) < 1e-8


class TestFeatureSampling:
    def test_constant_channel(self):
        fg = FeatureGrid(np.stack([np.full((4, 4), 2.0), np.full((4, 4), -1.0)]))
        out = sample_point_features(fg, (1.3, 2.8))
        assert np.array_equal(out, [2.0, -1.0])

    def test_exact_at_pixel_center(self):
        rng = np.random.default_rng(9)
        fg = FeatureGrid(rng.standard_normal((3, 5, 6)))
        out = sample_point_features(fg, (2.5, 3.5))  # center of pixel (2, 3)
        assert np.array_equal(out, fg.values[:, 3, 2])

    def test_matches_scalar_oracle(self):
        from .test_losses import scalar_bilinear

        rng = np.random.default_rng(10)
        fg = FeatureGrid(rng.standard_normal((2, 6, 7)))
        pts = rng.uniform(0.5, 5.5, size=(10, 2))
        out = sample_point_features(fg, pts)
        for i, (x, y) in enumerate(pts):
            for c in range(2):
                want = scalar_bilinear(fg.values[c], x / 7, y / 6)
                assert out[i, c] == pytest.approx(want, rel=1e-12)


class TestParamHead:
    def test_free_mode_zero_init(self):
        params = param_head(TINY, "free")
        assert np.all(params.flat == 0.0)
        assert head_forward(params, np.ones(2), np.ones(2)) == 0.0

    def test_pooled_linear_zero_matrix_degenerate(self):
        ph = ParamHead(TINY, "pooled-linear", descriptor_dim=3, rng_seed=0)
        ph.a_matrix[:] = 0.0
        p1 = ph.generate(np.array([1.0, 2.0, 3.0]))
        p2 = ph.generate(np.array([-5.0, 0.0, 9.0]))
        assert np.array_equal(p1.flat, p2.flat)

    def test_pooled_linear_gradient_two_instances(self):
        rng = np.random.default_rng(11)
        ph = ParamHead(TINY, "pooled-linear", descriptor_dim=3, rng_seed=1)
        descs = [rng.standard_normal(3), rng.standard_normal(3)]
        feats = [rng.standard_normal(2), rng.standard_normal(2)]
        pes = [rng.standard_normal(2), rng.standard_normal(2)]

        def total(a_matrix, bias):
            s = 0.0
            for d, f, pe in zip(descs, feats, pes):
                theta = PointHeadParams(a_matrix @ d + bias, TINY)
                s += head_forward(theta, f, pe)
            return s

        da = np.zeros_like(ph.a_matrix)
        dc = np.zeros(TINY.param_count)
        for d, f, pe in zip(descs, feats, pes):
            theta = ph.generate(d)
            dtheta, _ = head_backward(theta, f, pe, 1.0)
            da_i, dc_i = ph.backward(d, dtheta)
            da += da_i
            dc += dc_i
        eps = 1e-5
        flat_idx = [(0, 0), (3, 1), (10, 2), (TINY.param_count - 1, 0)]
        for i, j in flat_idx:
            ap, am = ph.a_matrix.copy(), ph.a_matrix.copy()
            ap[i, j] += eps
            am[i, j] -= eps
            fd = (total(ap, ph.bias) - total(am, ph.bias)) / (2 * eps)
            assert da[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-9)
        for i in [0, 5, TINY.param_count - 1]:
            cp, cm = ph.bias.copy(), ph.bias.copy()
            cp[i] += eps
            cm[i] -= eps
            fd = (total(ph.a_matrix, cp) - total(ph.a_matrix, cm)) / (2 * eps)
            assert dc[i] == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_descriptor_dim_mismatch(self):
        ph = ParamHead(TINY, "pooled-linear", descriptor_dim=3)
        with pytest.raises(ValueError):
            ph.generate(np.zeros(4))


class TestLocalizationInvariance:
    def test_constant_features_no_coords_constant_output(self):
        """Without coordinates the head cannot separate two look-alike points."""
        arch = HeadArch(feature_dim=3, pe_dim=0, hidden=(4, 4, 4))
        rng = np.random.default_rng(12)
        params = PointHeadParams(rng.standard_normal(arch.param_count), arch)
        fg = FeatureGrid(np.tile(rng.standard_normal(3)[:, None, None], (1, 8, 8)))
        pts = rng.uniform(0.5, 7.5, size=(20, 2))
        feats = sample_point_features(fg, pts)
        logits = head_forward_batch(params, feats, np.zeros((20, 0)))
        assert np.ptp(logits) == 0.0

    def test_positional_encoding_breaks_tie(self):
        arch = HeadArch(feature_dim=3, pe_dim=4, hidden=(4, 4, 4))
        rng = np.random.default_rng(13)
        params = PointHeadParams(rng.standard_normal(arch.param_count), arch)
        enc = FourierEncoding(m=2, sigma=1.0, seed=0)
        feats = np.tile(rng.standard_normal(3), (2, 1))
        rel = np.array([[-0.25, -0.25], [0.25, 0.25]])
        logits = head_forward_batch(params, feats, enc.encode(rel))
        assert logits[0] != logits[1]


class TestPooling:
    def test_mean_over_box(self):
        vals = np.arange(2 * 4 * 4, dtype=float).reshape(2, 4, 4)
        fg = FeatureGrid(vals)
        desc = pool_region_features(fg, BoundingBox(1, 1, 2, 2))
        want = vals[:, 1:3, 1:3].reshape(2, -1).mean(axis=1)
        assert np.allclose(desc, want)
