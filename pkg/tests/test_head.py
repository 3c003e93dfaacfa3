import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikefet import tensor as T
from spikefet.head import BoundingBox, TrackingHead, decode, decode_fused, fuse_responses, hann2d, head_forward
from spikefet.model import ModelConfig, SpikeFET
from spikefet.neurons import surrogate_forward
from spikefet.tracker import read_tracking_output, write_tracking_output


def test_zero_params_give_half_response(rng):
    head = TrackingHead(8, 4, rng).eval()
    for p in head.parameters():
        p.data = np.zeros_like(p.data)
    out = head_forward(T.Tensor(np.zeros((1, 8, 16, 16))), head)
    assert np.all(out.response.data == 0.5)


def test_output_shapes_and_ranges(rng):
    out = TrackingHead(8, 4, rng)(T.Tensor(rng.normal(size=(1, 8, 16, 16))))
    assert out.response.shape[-2:] == (16, 16)
    assert out.offset.shape[-3:] == (2, 16, 16) and out.size.shape[-3:] == (2, 16, 16)
    for m in (out.response, out.offset, out.size):
        assert np.all((m.data > 0) & (m.data < 1))


def test_head_gradients(rng):
    head = TrackingHead(3, 3, rng)
    x = rng.uniform(0, 4, (1, 3, 4, 4))
    pr, po, ps = rng.normal(size=(3, 1, 2, 4, 4))
    with surrogate_forward():
        for f in (
            lambda t: T.tsum(head(t).response * pr[:, :1]),
            lambda t: T.tsum(head(t).offset * po),
            lambda t: T.tsum(head(t).size * ps),
        ):
            assert T.grad_check(f, x) <= 1e-4


def test_fuse_responses():
    assert fuse_responses(0.8, 0.4, 0.5) == pytest.approx(0.6, abs=1e-15)
    rf, re = np.random.default_rng(0).uniform(size=(2, 5, 5))
    np.testing.assert_array_equal(fuse_responses(rf, re, 1.0), rf)
    np.testing.assert_array_equal(fuse_responses(rf, re, 0.0), re)
    np.testing.assert_array_equal(fuse_responses(rf, re, 0.5), 0.5 * rf + 0.5 * re)
    with pytest.raises(ValueError):
        fuse_responses(rf, re, 1.5)


@given(seed=st.integers(0, 2**31), c=st.floats(0.01, 100))
def test_fused_argmax_scale_invariant(seed, c):
    rf, re = np.random.default_rng(seed).uniform(size=(2, 6, 6))
    assert np.argmax(fuse_responses(rf, re)) == np.argmax(fuse_responses(c * rf, c * re))


def test_single_peak_readout():
    r = np.zeros((16, 16))
    r[8, 8] = 1.0
    sizes = np.full((2, 16, 16), 0.25)
    box, score = decode(r, np.zeros((2, 16, 16)), sizes, hanning=False)
    assert box == BoundingBox(0.5, 0.5, 0.25, 0.25) and score == 1.0


def test_uniform_response_with_hanning_picks_center():
    for n in (15, 16):
        box, _ = decode(np.ones((n, n)), np.zeros((2, n, n)), np.ones((2, n, n)), hanning=True)
        i, j = round(box.cy * n), round(box.cx * n)
        win = hann2d(n, n)
        assert win[i, j] == win.max()
        assert abs(i - (n - 1) / 2) <= 0.5 and abs(j - (n - 1) / 2) <= 0.5


def test_hanning_flips_winner():
    r = np.zeros((16, 16))
    r[0, 0] = 1.0
    r[7, 8] = 0.8
    off, sz = np.zeros((2, 16, 16)), np.ones((2, 16, 16))
    b_off, _ = decode(r, off, sz, hanning=False)
    b_on, _ = decode(r, off, sz, hanning=True)
    assert (b_off.cx, b_off.cy) == (0.0, 0.0)
    w = hann2d(16, 16)
    assert 0.8 * w[7, 8] > 1.0 * w[0, 0]
    assert (b_on.cx, b_on.cy) == (8 / 16, 7 / 16)


def test_all_zero_response_tie_breaks_to_first_cell():
    box, _ = decode(np.zeros((4, 4)), np.zeros((2, 4, 4)), np.ones((2, 4, 4)), hanning=True)
    assert (box.cx, box.cy) == (0.0, 0.0)


@given(i=st.integers(0, 11), j=st.integers(0, 11), di=st.integers(-3, 3), dj=st.integers(-3, 3))
def test_translation_equivariance_without_hanning(i, j, di, dj):
    if not (0 <= i + di < 12 and 0 <= j + dj < 12):
        return
    off = np.full((2, 12, 12), 0.3)
    sz = np.full((2, 12, 12), 0.2)
    a, b = np.zeros((12, 12)), np.zeros((12, 12))
    a[i, j] = 1
    b[i + di, j + dj] = 1
    ba, _ = decode(a, off, sz, hanning=False)
    bb, _ = decode(b, off, sz, hanning=False)
    assert bb.cx - ba.cx == pytest.approx(dj / 12, abs=1e-12)
    assert bb.cy - ba.cy == pytest.approx(di / 12, abs=1e-12)


def test_decode_fused_averages_maps(rng):
    head_f, head_e = TrackingHead(4, 4, rng), TrackingHead(4, 4, np.random.default_rng(9))
    x = T.Tensor(rng.normal(size=(1, 4, 6, 6)))
    of, oe = head_f(x), head_e(x)
    box, _ = decode_fused(of, oe, 0.5, False)
    r = 0.5 * of.response.data[0, 0] + 0.5 * oe.response.data[0, 0]
    i, j = np.unravel_index(np.argmax(r), r.shape)
    sz = 0.5 * of.size.data[0] + 0.5 * oe.size.data[0]
    assert box.w == pytest.approx(sz[0, i, j]) and box.h == pytest.approx(sz[1, i, j])


def test_heads_share_no_parameters():
    m = SpikeFET(ModelConfig())
    names = set(m.state())
    f = {k.split(".", 1)[1] for k in names if k.startswith("head_frame.")}
    e = {k.split(".", 1)[1] for k in names if k.startswith("head_event.")}
    assert f == e and f
    assert {id(p) for p in m.head_frame.parameters()}.isdisjoint({id(p) for p in m.head_event.parameters()})


def test_tracking_output_round_trip(tmp_path, rng):
    boxes = np.column_stack([rng.uniform(0, 100, (5, 2)), rng.uniform(5, 30, (5, 2))])
    scores = rng.uniform(size=5)
    write_tracking_output(tmp_path / "o.txt", boxes, scores, (120, 160))
    first = (tmp_path / "o.txt").read_text().splitlines()[0].split()
    assert first[0] == "1" and len(first) == 6
    idx, b2, s2 = read_tracking_output(tmp_path / "o.txt", (120, 160))
    np.testing.assert_array_equal(idx, np.arange(1, 6))
    np.testing.assert_allclose(b2, boxes, atol=1e-6)
    np.testing.assert_allclose(s2, scores, atol=1e-8)
