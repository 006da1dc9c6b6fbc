"""Attention blocks against the straight-line loop oracle, plus the block
algebra properties."""

import numpy as np
import pytest

import oracles
from scanet.attention import (SCAConfig, baseline_block, block_param_count,
                              ca_block, cardinal_group_sum, fuse,
                              make_baseline_block, make_block, make_ca_block,
                              make_feature_groups, make_sa_block,
                              make_sca_block, sa_block, sca_block)
from scanet.tensor import ShapeError, Tensor


def _x(rng, n, c, h, w):
    return Tensor(rng.standard_normal((n, c, h, w)))


def _zero_params(block):
    for p in block.parameters():
        p.value.data[...] = 0.0


class TestPieces:
    def test_feature_group_shapes(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        blk = make_sca_block(rng, 8, 8, cfg, name="t")
        groups = make_feature_groups(_x(rng, 1, 8, 6, 6), blk)
        assert len(groups) == 4
        assert all(g.shape == (1, 4, 6, 6) for g in groups)

    def test_degenerate_single_group_is_plain_conv(self, rng):
        cfg = SCAConfig(cardinality=1, radix=1, reduction=2)
        blk = make_sca_block(rng, 4, 4, cfg, name="t")
        groups = make_feature_groups(_x(rng, 2, 4, 5, 5), blk)
        assert len(groups) == 1 and groups[0].shape == (2, 4, 5, 5)

    def test_zero_weights_give_bias_groups(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        blk = make_sca_block(rng, 8, 8, cfg, name="t")
        blk.group_w.value.data[...] = 0.0
        blk.group_b.value.data[...] = 2.5
        groups = make_feature_groups(_x(rng, 1, 8, 4, 4), blk)
        for g in groups:
            assert np.all(g.data == 2.5)

    def test_cardinal_sum_constants_and_oracle(self, rng):
        ones = Tensor(np.ones((1, 2, 3, 3)))
        twos = Tensor(2 * np.ones((1, 2, 3, 3)))
        assert np.all(cardinal_group_sum([ones, twos]).data == 3.0)
        one = Tensor(rng.standard_normal((1, 2, 3, 3)))
        assert cardinal_group_sum([one]) is one
        parts = [Tensor(rng.standard_normal((2, 3, 4, 4))) for _ in range(3)]
        got = cardinal_group_sum(parts).data
        want = parts[0].data.copy()
        for p in parts[1:]:
            want = want + p.data
        assert np.max(np.abs(got - want)) < 1e-15

    def test_cardinal_sum_rejects_mismatch(self, rng):
        with pytest.raises(ShapeError):
            cardinal_group_sum([Tensor(np.zeros((1, 2, 3, 3))),
                                Tensor(np.zeros((1, 2, 3, 4)))])

    def test_fuse_constant_gates(self):
        u = Tensor(np.ones((1, 3, 4, 5)))
        half_h = Tensor(np.full((1, 3, 4), 0.5))
        half_w = Tensor(np.full((1, 3, 5), 0.5))
        v = fuse(u, [(half_h, half_w), (half_h, half_w)])
        assert np.max(np.abs(v.data - 0.5)) < 1e-15

    def test_fuse_bound(self, rng):
        u = Tensor(rng.standard_normal((2, 3, 5, 4)))
        radix = 3
        pairs = []
        for _ in range(radix):
            pairs.append((Tensor(1 / (1 + np.exp(-rng.standard_normal((2, 3, 5))))),
                          Tensor(1 / (1 + np.exp(-rng.standard_normal((2, 3, 4)))))))
        v = fuse(u, pairs)
        assert np.all(np.abs(v.data) <= radix * np.abs(u.data) + 1e-12)

    def test_fuse_matches_triple_loop(self, rng):
        u = rng.standard_normal((1, 4, 3, 3))
        pairs = [(rng.random((1, 4, 3)), rng.random((1, 4, 3)))
                 for _ in range(2)]
        got = fuse(Tensor(u), [(Tensor(a), Tensor(b)) for a, b in pairs]).data
        want = np.zeros_like(u)
        for n in range(1):
            for c in range(4):
                for y in range(3):
                    for x in range(3):
                        s = sum(a[n, c, y] * b[n, c, x] for a, b in pairs)
                        want[n, c, y, x] = u[n, c, y, x] * s
        assert np.max(np.abs(got - want)) < 1e-12


class TestBlockOracle:
    def test_sca_block_matches_loops_acceptance_config(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        for draw in range(3):
            blk = make_sca_block(np.random.default_rng(100 + draw), 8, 8, cfg,
                                 name=f"t{draw}")
            x = _x(rng, 1, 8, 5, 7)
            got = sca_block(x, blk).data
            want = oracles.sca_block_loops(x.data, blk)
            assert np.max(np.abs(got - want)) < 1e-12

    def test_sca_block_matches_loops_strided_projection(self, rng):
        cfg = SCAConfig(cardinality=2, radix=3, reduction=2)
        blk = make_sca_block(np.random.default_rng(7), 6, 8, cfg, stride=2,
                             name="t")
        x = _x(rng, 2, 6, 6, 8)
        got = sca_block(x, blk).data
        want = oracles.sca_block_loops(x.data, blk)
        assert got.shape == (2, 8, 3, 4)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_sa_block_matches_loops(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        blk = make_sa_block(np.random.default_rng(8), 8, 8, cfg, name="t")
        x = _x(rng, 2, 8, 4, 5)
        got = sa_block(x, blk).data
        want = oracles.sa_block_loops(x.data, blk)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_sa_zero_gate_params_half_gates(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        blk = make_sa_block(rng, 8, 8, cfg, name="t")
        for g in blk.gates:
            for p in g.parameters():
                p.value.data[...] = 0.0
        x = _x(rng, 1, 8, 4, 4)
        groups = make_feature_groups(x, blk)
        u0 = cardinal_group_sum(groups[0:2]).data
        got = sa_block(x, blk).data
        # gates are exactly 0.5 -> V = 0.5 * R * u_hat
        shortcut = x.data  # identity: cin == cout, stride 1
        assert np.max(np.abs(got[:, :4] - (u0 * 0.5 * 2 + shortcut[:, :4]))) < 1e-12


class TestProperties:
    def test_strip_shape_contract(self, rng):
        # C/K = 4, r = 4, H = 3, W = 5 -> one channel, length 8
        cfg = SCAConfig(cardinality=1, radix=1, reduction=4)
        blk = make_sca_block(rng, 4, 4, cfg, name="t")
        from scanet.attention import attention_strip
        s = attention_strip(_x(rng, 2, 4, 3, 5), blk.strips[0], cfg)
        assert s.shape == (2, 1, 8)

    def test_zero_strip_and_gate_params_give_half_gates(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        blk = make_sca_block(rng, 8, 8, cfg, name="t")
        from scanet.attention import attention_strip, directional_gates
        for st, g in zip(blk.strips, blk.gates):
            for p in st.parameters() + g.parameters():
                p.value.data[...] = 0.0
        s = attention_strip(_x(rng, 1, 4, 4, 6), blk.strips[0], cfg)
        uh, uw = directional_gates(s, 4, blk.gates[0])
        assert np.all(uh.data == 0.5) and np.all(uw.data == 0.5)

    def test_gate_codomain_strictly_open(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        blk = make_sca_block(rng, 8, 8, cfg, name="t")
        from scanet.attention import attention_strip, directional_gates
        x = _x(rng, 2, 4, 6, 5)
        s = attention_strip(x, blk.strips[0], cfg)
        uh, uw = directional_gates(s, 6, blk.gates[0])
        for u in (uh, uw):
            assert np.all(u.data > 0.0) and np.all(u.data < 1.0)

    def test_constant_field_gives_constant_attention(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        blk = make_sca_block(rng, 8, 8, cfg, name="t")
        from scanet.attention import attention_strip, directional_gates
        const = Tensor(np.full((1, 4, 5, 7), 0.7))
        s = attention_strip(const, blk.strips[0], cfg)
        uh, uw = directional_gates(s, 5, blk.gates[0])
        assert np.ptp(uh.data, axis=2).max() < 1e-12
        assert np.ptp(uw.data, axis=2).max() < 1e-12

    def test_constant_input_block_output_finite_and_constant(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        blk = make_sca_block(rng, 8, 8, cfg, name="t")
        blk.group_w.value.data[...] = 0.0
        blk.group_b.value.data[...] = 1.0
        x = Tensor(np.full((1, 8, 4, 4), 3.0))
        y = sca_block(x, blk).data
        assert np.all(np.isfinite(y))
        # attention of a constant field is spatially constant per channel
        assert np.ptp((y - x.data).reshape(8, -1), axis=1).max() < 1e-12

    def test_ca_is_sca_with_k1_r1_bitwise(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        for draw in range(5):
            blk = make_ca_block(np.random.default_rng(draw), 6, 6, cfg,
                                name=f"ca{draw}")
            assert blk.config.cardinality == 1 and blk.config.radix == 1
            x = _x(np.random.default_rng(50 + draw), 1, 6, 4, 5)
            assert np.array_equal(ca_block(x, blk).data, sca_block(x, blk).data)

    def test_ca_block_rejects_multi_group_config(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        blk = make_sca_block(rng, 8, 8, cfg, name="t")
        with pytest.raises(ShapeError):
            ca_block(_x(rng, 1, 8, 4, 4), blk)

    def test_baseline_is_gateless_pass_through(self, rng):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        blk = make_baseline_block(rng, 8, 8, cfg, name="t")
        x = _x(rng, 1, 8, 4, 4)
        groups = make_feature_groups(x, blk)
        u0 = cardinal_group_sum(groups[0:2]).data
        u1 = cardinal_group_sum(groups[2:4]).data
        got = baseline_block(x, blk).data
        assert np.max(np.abs(got - (np.concatenate([u0, u1], 1) + x.data))) < 1e-12

    def test_config_validation(self):
        with pytest.raises(ShapeError):
            SCAConfig(cardinality=3).validate(8)
        with pytest.raises(ShapeError):
            SCAConfig(cardinality=2, reduction=3).validate(8)
        with pytest.raises(ShapeError):
            SCAConfig(strip_activation="gelu").validate(8)


class TestParamCounts:
    def test_gate_pair_size_formula(self):
        # one split at C/K = 64, r = 4: two dense maps of 16*64 + 64
        cfg = SCAConfig(cardinality=1, radix=1, reduction=4)
        blk = make_sca_block(np.random.default_rng(0), 64, 64, cfg, name="t")
        pair = blk.gates[0]
        assert sum(p.value.size for p in pair.parameters()) == 2 * (16 * 64 + 64)

    def test_desk_scale_ordering(self):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=4)
        counts = {v: sum(block_param_count(v, cin, c, cfg, stride=2)
                         for cin, c in [(16, 16), (16, 32), (32, 64),
                                        (64, 128), (128, 256)])
                  for v in ("baseline", "sa", "ca", "sca")}
        assert counts["baseline"] < counts["sca"] <= counts["ca"]
        assert counts["baseline"] < counts["sa"]

    def test_baseline_strictly_smallest(self):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        base = block_param_count("baseline", 8, 8, cfg)
        for v in ("sa", "ca", "sca"):
            assert base < block_param_count(v, 8, 8, cfg)

    def test_shared_splits_shrinks_count(self):
        cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
        shared = SCAConfig(cardinality=2, radix=2, reduction=2,
                           share_splits=True)
        assert block_param_count("sca", 8, 8, shared) < \
            block_param_count("sca", 8, 8, cfg)

    def test_unknown_variant_rejected(self, rng):
        with pytest.raises(ShapeError):
            make_block("cbam", rng, 8, 8, SCAConfig())
