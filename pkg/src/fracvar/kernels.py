"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``FRACVAR_PURE_PYTHON=1`` to force the fallback and
``FRACVAR_THREADS`` to cap OpenMP threads in the compiled kernel
(0 or unset means the OpenMP default).
"""
import os

from . import _kernels_py

try:
    if os.environ.get("FRACVAR_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _kernels as _kernels_ext
except ImportError:
    _kernels_ext = None

BACKENDS = {"python": _kernels_py}
if _kernels_ext is not None:
    BACKENDS["cython"] = _kernels_ext

BACKEND = "cython" if _kernels_ext is not None else "python"


def thread_count():
    try:
        n = int(os.environ.get("FRACVAR_THREADS", "0"))
    except ValueError:
        n = 0
    return max(n, 0)


def left_product_integrate(P, Y, h, rows, backend=None):
    """Dispatch to the selected backend; see ``_kernels_py.left_product_integrate``."""
    mod = BACKENDS[backend or BACKEND]
    return mod.left_product_integrate(P, Y, h, rows, thread_count())
