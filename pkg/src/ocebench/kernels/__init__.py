"""Hot-kernel backend selection.

The compiled Cython extension is used when importable; the numpy
implementation is the fallback. Set OCEBENCH_KERNELS=numpy or =compiled to
force a backend (forcing `compiled` raises if the extension is missing).
"""

from __future__ import annotations

import os

from . import numpy_backend

_requested = os.environ.get("OCEBENCH_KERNELS", "auto")

if _requested == "numpy":
    _impl = numpy_backend
elif _requested == "compiled":
    from . import _ckernels as _impl
elif _requested == "auto":
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = numpy_backend
else:
    raise ValueError(f"OCEBENCH_KERNELS must be auto, numpy or compiled, got {_requested!r}")

BACKEND = _impl.NAME

conv3d_forward = _impl.conv3d_forward
conv3d_backward = _impl.conv3d_backward
median27 = _impl.median27


def get_backend(name: str):
    """Return a backend module by name, independent of the global choice."""
    if name == "numpy":
        return numpy_backend
    if name == "compiled":
        from . import _ckernels

        return _ckernels
    raise ValueError(name)
