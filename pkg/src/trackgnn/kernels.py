"""Backend selection for the hot kernels.

The compiled extension ``_ckernels`` is used when it imports; otherwise, or
when the environment variable ``TRACKGNN_PURE_PYTHON`` is set to a non-empty
value other than ``0``, the pure-Python ``_pykernels`` module is used.
"""
import os

from . import _pykernels

_force_python = os.environ.get("TRACKGNN_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_python:
        raise ImportError("pure-Python backend requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

SOURCE = _pykernels.SOURCE
STREAM, LOAD, DELAY = _pykernels.STREAM, _pykernels.LOAD, _pykernels.DELAY
OK, DEADLOCK, TIMEOUT = _pykernels.OK, _pykernels.DEADLOCK, _pykernels.TIMEOUT

scatter_add_sat = _impl.scatter_add_sat
dense_sat = _impl.dense_sat
run_dataflow = _impl.run_dataflow


def backends():
    """Map of every importable backend name to its module."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
