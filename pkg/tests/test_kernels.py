import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikefet import _pykernels, kernels

BACKENDS = kernels.available_backends()


def test_backend_selected():
    assert kernels.BACKEND in BACKENDS


@pytest.mark.parametrize("name", sorted(BACKENDS))
@given(
    c=st.integers(1, 3),
    h=st.integers(3, 10),
    w=st.integers(3, 10),
    k=st.sampled_from([1, 3, 5]),
    stride=st.integers(1, 3),
    pad=st.integers(0, 2),
    seed=st.integers(0, 2**31),
)
def test_backends_agree(name, c, h, w, k, stride, pad, seed):
    if k > min(h, w) + 2 * pad:
        return
    impl = BACKENDS[name]
    r = np.random.default_rng(seed)
    x = r.normal(size=(2, c, h, w))
    cols = _pykernels.im2col(x, k, k, stride, pad)
    np.testing.assert_allclose(impl.im2col(x, k, k, stride, pad), cols, atol=1e-12)
    g = r.normal(size=cols.shape)
    np.testing.assert_allclose(impl.col2im(g, 2, c, h, w, k, k, stride, pad), _pykernels.col2im(g, 2, c, h, w, k, k, stride, pad), atol=1e-12)
    wk = r.normal(size=(c, k, k))
    out = _pykernels.dwconv_forward(x, wk, stride, pad)
    np.testing.assert_allclose(impl.dwconv_forward(x, wk, stride, pad), out, atol=1e-12)
    go = r.normal(size=out.shape)
    for a, b in zip(impl.dwconv_backward(go, x, wk, stride, pad), _pykernels.dwconv_backward(go, x, wk, stride, pad)):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_col2im_is_adjoint_of_im2col(rng):
    x = rng.normal(size=(1, 2, 7, 6))
    cols = _pykernels.im2col(x, 3, 3, 2, 1)
    y = rng.normal(size=cols.shape)
    lhs = float((cols * y).sum())
    rhs = float((x * _pykernels.col2im(y, 1, 2, 7, 6, 3, 3, 2, 1)).sum())
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_forced_python_backend():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "import spikefet.kernels as k; print(k.BACKEND)"],
        env={"SPIKEFET_KERNELS": "python", "PATH": ""},
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"
