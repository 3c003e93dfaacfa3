"""Hot-kernel dispatch.

The compiled ``_ckernels`` module is used when it imports; otherwise the
numpy versions in ``_pykernels`` are used. Set ``SPIKEFET_KERNELS=python``
to force the fallback (the benchmark and the cross-backend tests do this).
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SPIKEFET_KERNELS", "auto").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

im2col = _impl.im2col
col2im = _impl.col2im
dwconv_forward = _impl.dwconv_forward
dwconv_backward = _impl.dwconv_backward
bin_events = _impl.bin_events


def available_backends():
    """Names and modules of every kernel implementation importable here."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
