import numpy as np
import pytest

from _oracles import conv_same, directional_check, fd_check, forward_oracle, kpac_oracle, lrelu
from kpacdeblur.errors import ConfigError, ShapeMismatchError
from kpacdeblur.net.graph import Graph
from kpacdeblur.net.model import (
    NetworkConfig,
    NetworkWeights,
    branch_taps,
    build_network,
    flops_estimate,
    forward_graph,
    kpac_block,
    layer_plan,
    net_forward,
    param_count,
)

TINY = NetworkConfig(levels=3, blocks=2, k=3, n=3, width=4, attn_widths=(4, 4, 4, 4), attn_k=3, shape_hidden=4)


def randomize_biases(w, seed, scale=0.1):
    rng = np.random.default_rng(seed)
    for k, a in w.params.items():
        if k.endswith(".b"):
            a[:] = rng.uniform(-scale, scale, a.shape)
    return w


def block_graph(w, h1, cfg, prefix="kpac1"):
    g = Graph()
    return kpac_block(g, w, g.const(h1), prefix, cfg), g


class TestConfig:
    def test_defaults(self):
        cfg = NetworkConfig()
        assert (cfg.levels, cfg.blocks, cfg.k, cfg.n, cfg.kpac_channels) == (3, 2, 5, 5, 96)
        assert cfg.divisor == 8

    @pytest.mark.parametrize("kw", [{"levels": 4}, {"blocks": 0}, {"k": 0}, {"attn_widths": (4, 0)},
                                    {"shape_hidden": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            NetworkConfig(**kw)

    def test_dict_round_trip(self):
        assert NetworkConfig.from_dict(TINY.to_dict()) == TINY


class TestAccounting:
    def test_single_conv(self):
        w = NetworkWeights({"c.w": np.zeros((3, 3, 1, 1)), "c.b": np.zeros(1)})
        assert param_count(w) == 10

    def test_three_level_count(self):
        n = param_count(NetworkConfig())
        assert abs(n - 2_060_000) <= 0.03 * 2_060_000
        assert n == param_count(build_network(NetworkConfig()))

    def test_two_level_count(self):
        n = param_count(NetworkConfig(levels=2))
        assert abs(n - 1_580_000) <= 0.10 * 1_580_000

    def test_sharing_saves_parameters(self):
        shared = param_count(NetworkConfig(levels=2))
        unshared = param_count(NetworkConfig(levels=2, share_weights=False))
        c = 96
        assert unshared - shared == 2 * 4 * (5 * 5 * c * c // 2 + c // 2)

    def test_kpac_block_grows_count(self):
        one = param_count(NetworkConfig(levels=2, blocks=1))
        two = param_count(NetworkConfig(levels=2, blocks=2))
        assert two > one

    def test_flops_reference_resolution(self):
        f = flops_estimate(NetworkConfig(), 720, 1280)
        assert abs(f - 197e9) <= 0.5 * 197e9

    def test_flops_hand_count(self):
        # conv1_1 alone at 8x8: 2 * 25 * 3 * 48 MACs per pixel
        cfg = NetworkConfig()
        first = layer_plan(cfg)[0]
        assert first.name == "conv1_1"
        total = flops_estimate(cfg, 8, 8)
        assert total > 2 * 25 * 3 * 48 * 64
        assert flops_estimate(cfg, 16, 16) == pytest.approx(4 * total, rel=1e-3)

    def test_attention_shapes(self):
        w = build_network(NetworkConfig(), 0)
        assert w["kpac1.shape_fc2.w"].shape == (16, 48)
        assert w["kpac1.scale_out.w"].shape == (5, 5, 16, 5)
        assert w["kpac1.atrous.w"].shape == (5, 5, 96, 48)
        assert w["kpac1.fuse.w"].shape == (3, 3, 240, 96)


class TestBuild:
    def test_deterministic(self):
        a, b = build_network(TINY, 3), build_network(TINY, 3)
        assert a.names() == b.names()
        for k in a.names():
            assert np.array_equal(a[k], b[k])
        c = build_network(TINY, 4)
        assert not np.array_equal(a["conv1_1.w"], c["conv1_1.w"])

    def test_init_bounds(self):
        w = build_network(NetworkConfig(), 0)
        for spec in layer_plan(w.config):
            fan_in = spec.shape[0] if spec.kind == "dense" else np.prod(spec.shape[:3])
            assert np.abs(w[f"{spec.name}.w"]).max() <= np.sqrt(6.0 / fan_in)
            assert not w[f"{spec.name}.b"].any()

    def test_one_shared_tap_array(self):
        w = build_network(TINY, 0)
        assert all(branch_taps(w, 1, i) is branch_taps(w, 1, 1) for i in range(1, TINY.n + 1))
        assert not any(".atrous1" in k for k in w.names())

    def test_copy_is_deep(self):
        w = build_network(TINY, 0)
        c = w.copy()
        c["conv8.w"][...] = 0
        assert w["conv8.w"].any()


class TestForward:
    def test_full_shape(self):
        w = build_network(NetworkConfig(), 0)
        x = np.random.default_rng(0).random((1, 64, 64, 3))
        assert net_forward(x, w).shape == (1, 64, 64, 3)

    def test_batch_shape(self):
        w = build_network(TINY, 0)
        assert net_forward(np.zeros((2, 64, 64, 3)), w).shape == (2, 64, 64, 3)

    def test_all_zero_weights_identity(self):
        w = build_network(TINY, 0)
        for a in w.params.values():
            a[...] = 0.0
        x = np.random.default_rng(1).random((1, 16, 16, 3))
        assert np.array_equal(net_forward(x, w), x)

    def test_zero_final_conv_identity(self):
        w = randomize_biases(build_network(TINY, 0), 0)
        w["conv8.w"][...] = 0.0
        w["conv8.b"][...] = 0.0
        x = np.random.default_rng(2).random((2, 16, 16, 3))
        assert np.array_equal(net_forward(x, w), x)

    @pytest.mark.parametrize("cfg", [TINY, NetworkConfig(levels=2, blocks=1, k=3, n=2, width=2, attn_widths=(2, 3),
                                                         shape_hidden=3, share_weights=False)])
    def test_matches_straight_line_oracle(self, cfg):
        w = randomize_biases(build_network(cfg, 7), 7)
        x = np.random.default_rng(3).random((2, 16, 16, 3))
        np.testing.assert_allclose(net_forward(x, w), forward_oracle(x, w.params, cfg), atol=1e-10, rtol=0)

    def test_bad_spatial(self):
        with pytest.raises(ShapeMismatchError):
            net_forward(np.zeros((1, 12, 16, 3)), build_network(TINY, 0))
        with pytest.raises(ShapeMismatchError):
            net_forward(np.zeros((1, 10, 12, 3)), build_network(NetworkConfig(levels=2, width=2), 0))

    def test_bad_channels(self):
        with pytest.raises(ShapeMismatchError):
            net_forward(np.zeros((1, 16, 16, 1)), build_network(TINY, 0))

    def test_deterministic(self):
        w = randomize_biases(build_network(TINY, 0), 0)
        x = np.random.default_rng(4).random((2, 16, 16, 3))
        assert np.array_equal(net_forward(x, w), net_forward(x, w))


class TestKpacBlock:
    def setup_method(self):
        self.cfg = NetworkConfig(levels=2, blocks=1, k=3, n=3, width=4, attn_widths=(4, 4, 4, 4), attn_k=3,
                                 shape_hidden=4)
        self.w = randomize_biases(build_network(self.cfg, 1), 1)
        self.h1 = np.random.default_rng(5).standard_normal((2, 8, 8, 8))

    def test_matches_oracle(self):
        out, _ = block_graph(self.w, self.h1, self.cfg)
        np.testing.assert_allclose(out.value, kpac_oracle(self.h1, self.w.params, "kpac1", self.cfg), atol=1e-12)

    def test_full_size_shape(self):
        cfg = NetworkConfig()
        w = build_network(cfg, 0)
        h1 = np.random.default_rng(0).standard_normal((1, 32, 32, 96))
        g = Graph(record=False)
        assert kpac_block(g, w, g.const(h1), "kpac1", cfg).shape == (1, 32, 32, 96)

    def test_zero_taps_give_zero(self):
        for k in ("kpac1.atrous.w", "kpac1.atrous.b", "kpac1.fuse.w", "kpac1.fuse.b"):
            self.w[k][...] = 0.0
        out, _ = block_graph(self.w, self.h1, self.cfg)
        assert not out.value.any()

    def _attention(self, w, h1, cfg):
        a = h1
        for j in range(1, len(cfg.attn_widths) + 1):
            a = lrelu(conv_same(a, w[f"kpac1.scale{j}.w"], w[f"kpac1.scale{j}.b"], dilation=cfg.attn_dilation))
        pre_alpha = conv_same(a, w["kpac1.scale_out.w"], w["kpac1.scale_out.b"])
        gap = h1.mean(axis=(1, 2))
        f = lrelu(gap @ w["kpac1.shape_fc1.w"] + w["kpac1.shape_fc1.b"])
        pre_beta = f @ w["kpac1.shape_fc2.w"] + w["kpac1.shape_fc2.b"]
        return pre_alpha, pre_beta

    def test_zero_attention_params_half(self):
        for k in self.w.names():
            if ".scale" in k or ".shape" in k:
                self.w[k][...] = 0.0
        pa, pb = self._attention(self.w, self.h1, self.cfg)
        assert not pa.any() and not pb.any()
        # with alpha = beta = 0.5 the block equals fusion of quarter-weighted branches
        br = [0.25 * lrelu(conv_same(self.h1, self.w["kpac1.atrous.w"], self.w["kpac1.atrous.b"], dilation=i))
              for i in (1, 2, 3)]
        ref = lrelu(conv_same(np.concatenate(br, -1), self.w["kpac1.fuse.w"], self.w["kpac1.fuse.b"]))
        out, _ = block_graph(self.w, self.h1, self.cfg)
        np.testing.assert_allclose(out.value, ref, atol=1e-12)

    def test_attention_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            h1 = rng.standard_normal((1, 4, 4, 8))
            pa, pb = self._attention(self.w, h1, self.cfg)
            for v in (1 / (1 + np.exp(-pa)), 1 / (1 + np.exp(-pb))):
                assert np.all(v > 0) and np.all(v < 1)

    def test_attention_widths(self):
        pa, pb = self._attention(self.w, self.h1, self.cfg)
        assert pa.shape == (2, 8, 8, 3) and pb.shape == (2, 4)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_one_hot_alpha(self, d):
        self.w["kpac1.scale_out.w"][...] = 0.0
        self.w["kpac1.scale_out.b"][...] = -1e3
        self.w["kpac1.scale_out.b"][d - 1] = 1e3
        out, _ = block_graph(self.w, self.h1, self.cfg)
        _, pb = self._attention(self.w, self.h1, self.cfg)
        beta = (1 / (1 + np.exp(-pb)))[:, None, None, :]
        parts = [np.zeros((2, 8, 8, 4)) for _ in range(3)]
        parts[d - 1] = beta * lrelu(conv_same(self.h1, self.w["kpac1.atrous.w"], self.w["kpac1.atrous.b"],
                                              dilation=d))
        ref = lrelu(conv_same(np.concatenate(parts, -1), self.w["kpac1.fuse.w"], self.w["kpac1.fuse.b"]))
        np.testing.assert_allclose(out.value, ref, atol=1e-12)

    def test_shared_taps_mutation_reaches_every_branch(self):
        self.w["kpac1.atrous.w"][...] = 0.0
        self.w["kpac1.atrous.b"][...] = 1.0
        self.w["kpac1.scale_out.w"][...] = 0.0
        self.w["kpac1.scale_out.b"][...] = 0.0
        self.w["kpac1.shape_fc2.w"][...] = 0.0
        self.w["kpac1.shape_fc2.b"][...] = 0.0
        # every branch is now the constant 0.25 map
        g = Graph(record=False)
        h1 = g.const(self.h1)
        out = kpac_block(g, self.w, h1, "kpac1", self.cfg)
        fused = conv_same(np.full((2, 8, 8, 12), 0.25 * 1.0), self.w["kpac1.fuse.w"], self.w["kpac1.fuse.b"])
        np.testing.assert_allclose(out.value, lrelu(fused), atol=1e-12)


class TestGradients:
    def test_kpac_block_finite_differences(self):
        cfg = NetworkConfig(levels=2, blocks=1, k=3, n=3, width=4, attn_widths=(4, 4, 4, 4), attn_k=3,
                            shape_hidden=4)
        w = randomize_biases(build_network(cfg, 2), 2)
        rng = np.random.default_rng(7)
        h1 = rng.standard_normal((2, 8, 8, 8))
        out, g = block_graph(w, h1, cfg)
        G = rng.standard_normal(out.shape)
        grads = g.backward(out, G)
        params = {k: v for k, v in w.params.items() if k.startswith("kpac1.")}
        assert set(grads) == set(params)

        def loss():
            gg = Graph(record=False)
            return float(np.sum(kpac_block(gg, w, gg.const(h1), "kpac1", cfg).value * G))

        worst, where, count = fd_check(loss, params, grads, rng, per_tensor=40)
        assert worst < 1e-4, where
        assert count > 300
        assert directional_check(loss, params, grads, rng) < 1e-6

    def test_shared_equals_sum_of_unshared(self):
        shared_cfg = NetworkConfig(levels=2, blocks=1, k=3, n=3, width=4, attn_widths=(4, 4), attn_k=3,
                                   shape_hidden=4)
        unshared_cfg = NetworkConfig(**{**shared_cfg.to_dict(), "share_weights": False})
        ws = randomize_biases(build_network(shared_cfg, 4), 4)
        wu = NetworkWeights({}, unshared_cfg)
        for k, v in ws.params.items():
            if ".atrous." in k:
                for i in range(1, 4):
                    wu.params[k.replace(".atrous.", f".atrous{i}.")] = v.copy()
            else:
                wu.params[k] = v.copy()
        x = np.random.default_rng(9).random((2, 8, 8, 3))
        out_s, gs = forward_graph(x, ws)
        out_u, gu = forward_graph(x, wu)
        np.testing.assert_allclose(out_s.value, out_u.value, atol=1e-13)
        G = np.random.default_rng(10).standard_normal(out_s.shape)
        grad_s, grad_u = gs.backward(out_s, G), gu.backward(out_u, G)
        for part in ("w", "b"):
            total = sum(grad_u[f"kpac1.atrous{i}.{part}"] for i in range(1, 4))
            np.testing.assert_allclose(grad_s[f"kpac1.atrous.{part}"], total, rtol=1e-10, atol=1e-14)
        for k in grad_s:
            if ".atrous." not in k:
                np.testing.assert_allclose(grad_s[k], grad_u[k], rtol=1e-10, atol=1e-14)

    def test_backward_deterministic(self):
        w = randomize_biases(build_network(TINY, 0), 0)
        x = np.random.default_rng(11).random((2, 8, 8, 3))
        out1, g1 = forward_graph(x, w)
        out2, g2 = forward_graph(x, w)
        G = np.ones(out1.shape)
        a, b = g1.backward(out1, G), g2.backward(out2, G)
        assert all(np.array_equal(a[k], b[k]) for k in a)
