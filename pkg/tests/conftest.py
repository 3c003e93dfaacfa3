import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def brute_conv(x, w, stride=1, pad=0, depthwise=False):
    """Nested-loop cross-correlation oracle."""
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, co, ho, wo))
    for b in range(n):
        for o in range(co):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    chans = [o] if depthwise else range(c)
                    for ch in chans:
                        for u in range(kh):
                            for v in range(kw):
                                wv = w[o, 0, u, v] if depthwise else w[o, ch, u, v]
                                acc += xp[b, ch, i * stride + u, j * stride + v] * wv
                    out[b, o, i, j] = acc
    return out


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; printed in the terminal summary."""

    def record(num, ok, detail):
        _CRITERIA[num] = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_CRITERIA[num])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
