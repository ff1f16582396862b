"""Backend selection for the Hough inner loops.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``EEGLOC_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy implementation is used. Both expose the same functions.
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("EEGLOC_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _native as _impl  # noqa: F811
        BACKEND = "native"
    except ImportError:
        _impl = _fallback


def get_backend(name=None):
    """Return the kernel module for ``name`` (``"native"``, ``"python"``, or the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "native":
        from . import _native
        return _native
    raise ValueError(f"unknown backend {name!r}")


def native_available() -> bool:
    try:
        from . import _native  # noqa: F401
    except ImportError:
        return False
    return True


cast_votes = _impl.cast_votes
radius_votes = _impl.radius_votes
box_sum3 = _impl.box_sum3
local_maxima = _impl.local_maxima
greedy_nms = _impl.greedy_nms
