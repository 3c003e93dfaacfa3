import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikefet import tensor as T
from spikefet.fusion import (
    AttentionConfig,
    CSWinSSA,
    FusionNetwork,
    TransformerBlock,
    add_encodings,
    fuse,
    ssa_reference,
    stripe_attention,
    stripe_bounds,
)
from spikefet.neurons import spike_count, surrogate_forward
from spikefet.patchwork import PatchLayout, default_layout, place_tensor, split_features


def zero_params(mod):
    for p in mod.parameters():
        p.data = np.zeros_like(p.data)


def loop_attention(q, k, v, heads, sw, scale):
    """Token-by-token oracle: list each stripe's cells explicitly."""
    n, c, h, w = q.shape
    dq, dv = c // heads, v.shape[1] // heads
    out = np.zeros((n, v.shape[1], h, w))
    for b in range(n):
        for hd in range(heads):
            horizontal = hd < heads // 2
            extent = h if horizontal else w
            for lo in range(0, extent, sw):
                hi = min(lo + sw, extent)
                cells = [(i, j) for i in range(h) for j in range(w) if lo <= (i if horizontal else j) < hi]
                Q = np.array([q[b, hd * dq : (hd + 1) * dq, i, j] for i, j in cells])
                K = np.array([k[b, hd * dq : (hd + 1) * dq, i, j] for i, j in cells])
                V = np.array([v[b, hd * dv : (hd + 1) * dv, i, j] for i, j in cells])
                O = Q @ K.T @ V * scale
                for t, (i, j) in enumerate(cells):
                    out[b, hd * dv : (hd + 1) * dv, i, j] = O[t]
    return out


@given(
    h=st.integers(1, 9),
    w=st.integers(1, 9),
    sw=st.integers(1, 5),
    heads=st.sampled_from([2, 4]),
    gamma=st.integers(1, 2),
    seed=st.integers(0, 2**31),
)
def test_stripe_attention_matches_loop_oracle(h, w, sw, heads, gamma, seed):
    r = np.random.default_rng(seed)
    c = heads * 2
    q, k = r.integers(0, 5, (2, 1, c, h, w)).astype(float)
    v = r.integers(0, 5, (1, c * gamma, h, w)).astype(float)
    got = stripe_attention(q, k, v, heads, sw, 0.125).data
    np.testing.assert_allclose(got, loop_attention(q, k, v, heads, sw, 0.125), atol=1e-9)


def test_stripes_cover_every_token_once():
    for n in range(1, 20):
        for sw in range(1, 7):
            b = stripe_bounds(n, sw)
            cover = np.zeros(n, int)
            for lo, hi in b:
                cover[lo:hi] += 1
            assert np.all(cover == 1) and all(hi - lo <= sw for lo, hi in b)


@pytest.mark.parametrize("h,w,sw", [(4, 4, 4), (2, 6, 6), (3, 3, 8)])
def test_all_ones_single_stripe_closed_form(h, w, sw):
    heads, c, gamma, D = 2, 6, 2, 4
    d = c // heads
    scale = 1.0 / 37.0
    ones = np.ones((1, c, h, w))
    pre = stripe_attention(ones, ones, np.ones((1, c * gamma, h, w)), heads, sw, scale).data
    n = h * w
    assert np.all(pre == n * d * scale)
    ref = ssa_reference(np.ones((n, d)), np.ones((n, d)), np.ones((n, d * gamma)), scale, D)
    assert np.all(ref == spike_count(n * d * scale, D))


def test_default_scale():
    assert AttentionConfig().resolved_scale(64, 4) == 1.0 / (16 * 4)
    assert AttentionConfig(scale=0.5).resolved_scale(64, 4) == 0.5
    with pytest.raises(ValueError):
        AttentionConfig(heads=3)
    with pytest.raises(ValueError):
        AttentionConfig().resolved_scale(66, 4)


def test_zero_spikes_give_projection_of_zero(rng):
    att = CSWinSSA(8, AttentionConfig(heads=2, stripe_width=2), rng).eval()
    z = np.zeros((1, 8, 4, 4))
    assert not att.attend(z, z, np.zeros((1, 16, 4, 4))).data.any()
    np.testing.assert_array_equal(att.proj(T.Tensor(np.zeros((1, 16, 4, 4)))).data, att(T.Tensor(z * 0 - 5)).data)


def test_attention_output_spike_bounded(rng):
    att = CSWinSSA(8, AttentionConfig(heads=2, stripe_width=3), rng, D=4)
    s = att.attend(*att.qkv(T.Tensor(rng.normal(0, 3, (2, 8, 7, 5)))))
    v = s.data
    assert np.all(v == np.round(v)) and v.min() >= 0 and v.max() <= 4


def test_stripe_attention_gradient(rng):
    q = rng.uniform(0, 4, (1, 4, 5, 3))
    k = rng.uniform(0, 4, (1, 4, 5, 3))
    v = rng.uniform(0, 4, (1, 8, 5, 3))
    proj = rng.normal(size=(1, 8, 5, 3))
    for which in range(3):
        args = [q, k, v]

        def f(t):
            a = list(args)
            a[which] = t
            return T.tsum(stripe_attention(*a, 2, 2, 0.1) * proj)

        assert T.grad_check(f, args[which]) <= 1e-4


@pytest.mark.parametrize("training", [True, False])
def test_transformer_block_gradient(rng, training):
    cfg = AttentionConfig(heads=2, stripe_width=2, gamma=2, mlp_ratio=2)
    blk = TransformerBlock(4, cfg, rng, D=4, dw_kernel=3).train(training)
    u = rng.uniform(0, 4, (2, 4, 4, 3))
    with surrogate_forward():
        assert T.grad_check(lambda t: T.tsum(blk(t)), u) <= 1e-4


def test_transformer_block_residual_identity_and_shape(rng):
    blk = TransformerBlock(4, AttentionConfig(heads=2, stripe_width=2), rng, dw_kernel=3)
    u = rng.normal(size=(1, 4, 6, 5))
    assert blk(T.Tensor(u)).shape == u.shape
    zero_params(blk)
    np.testing.assert_array_equal(blk(T.Tensor(u)).data, u)


def small_net(rng, depth, use_type=True, C=8):
    return FusionNetwork(C, AttentionConfig(heads=2, stripe_width=2), depth, 2, 4, rng, use_type=use_type)


LAY = PatchLayout("horizontal", "right", 8, 16)  # stride 4 -> 2x2 templates, 4x4 search


def test_encodings_identity_and_zero_input(rng):
    net = small_net(rng, 0)
    u = rng.normal(size=(1, 8, 4, 6))
    zero_params(net.encodings)
    np.testing.assert_array_equal(add_encodings(u, net.encodings, "frame", LAY, 4).data, u)
    net = small_net(np.random.default_rng(5), 0)
    enc = net.encodings
    got = add_encodings(np.zeros((1, 8, 4, 6)), enc, "event", LAY, 4).data
    expect = enc.positional(LAY).data + enc.modal("event").data + enc.typed(LAY, 4).data
    np.testing.assert_array_equal(got, expect)
    diff = add_encodings(u, enc, "frame", LAY, 4).data - add_encodings(u, enc, "event", LAY, 4).data
    np.testing.assert_allclose(diff, np.broadcast_to((enc.modality.data[0] - enc.modality.data[1])[None, :, None, None], diff.shape))
    with pytest.raises(ValueError):
        add_encodings(np.zeros((1, 4, 4, 6)), enc, "frame", LAY, 4)


def test_depth_zero_is_split_of_encoded(rng):
    net = small_net(rng, 0)
    uf, ue = rng.normal(size=(2, 1, 8, 4, 6))
    ff, fe, parts = fuse(uf, ue, net, LAY, 4)
    np.testing.assert_array_equal(ff.data, add_encodings(uf, net.encodings, "frame", LAY, 4).data)
    np.testing.assert_array_equal(fe.data, add_encodings(ue, net.encodings, "event", LAY, 4).data)
    for m, f in (("frame", ff), ("event", fe)):
        for a, b in zip(parts[m], split_features(f.data, LAY, 4)):
            np.testing.assert_array_equal(a.data, b)


def test_default_token_count():
    assert 2 * (256 * 384) // 16**2 == 768
    rng = np.random.default_rng(0)
    net = FusionNetwork(8, AttentionConfig(heads=2), 1, 8, 16, rng)
    lay = default_layout()
    uf, ue = rng.normal(size=(2, 1, 8, 16, 24))
    ff, fe, _ = fuse(uf, ue, net, lay, 16)
    assert ff.shape[-2] * ff.shape[-1] + fe.shape[-2] * fe.shape[-1] == 768


def test_modality_swap_is_not_identity(rng):
    net = small_net(rng, 1).eval()
    uf, ue = rng.normal(0, 2, size=(2, 1, 8, 4, 6))
    ff, fe, _ = fuse(uf, ue, net, LAY, 4)
    gf, ge, _ = fuse(ue, uf, net, LAY, 4)
    assert not (np.array_equal(ff.data, ge.data) and np.array_equal(fe.data, gf.data))


def test_layout_permutation_at_depth_zero_without_type(rng):
    net = small_net(rng, 0, use_type=False)
    z1, z2, x = (T.Tensor(rng.normal(size=(1, 8, s, s))) for s in (2, 2, 4))
    outs = []
    for lay in (LAY, PatchLayout("vertical", "bottom", 8, 16)):
        u = place_tensor((z1, z2, x), lay, 4)
        _, _, parts = fuse(u, u, net, lay, 4)
        outs.append([p.data for p in parts["frame"]])
    for a, b in zip(*outs):
        np.testing.assert_array_equal(a, b)
