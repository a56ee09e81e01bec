"""Backend selection for the hot kernels.

The compiled extension ``rlaug._ckernels`` is used when it imports; otherwise
the numpy implementations in ``rlaug._pykernels`` take over. Set
``RLAUG_BACKEND=python`` to force the fallback (``=compiled`` makes a missing
extension an import error instead of a silent fallback).

Both backends agree to floating-point rounding on the convolutions and
exactly on the integer distance scan. Results are bit-reproducible within a
backend, not across them.
"""
import os

from . import _pykernels

_requested = os.environ.get("RLAUG_BACKEND", "auto").lower()

if _requested == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _pykernels
        BACKEND = "python"

conv3x3_forward = _impl.conv3x3_forward
conv3x3_backward = _impl.conv3x3_backward
min_sq_dists = _impl.min_sq_dists


def backends():
    """Return {name: module} for every backend that can be imported here."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
        found["compiled"] = _ckernels
    except ImportError:
        pass
    return found
