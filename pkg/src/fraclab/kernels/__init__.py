"""Backend selection for the hot pair kernels.

numba is used when importable unless ``FRACLAB_DISABLE_NUMBA`` is set to a
truthy value; the numpy versions implement identical contracts.
``FRACLAB_THREADS`` caps the worker count handed to numba.
"""
import os

from . import _numpy

_FLAG = os.environ.get("FRACLAB_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = _FLAG in ("", "0", "false", "no")

if USE_NUMBA:
    try:
        import numba

        from . import _numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if USE_NUMBA:
    _threads = os.environ.get("FRACLAB_THREADS")
    if _threads:
        numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))
    backend = _numba
else:
    backend = _numpy

BACKEND_NAME = "numba" if USE_NUMBA else "numpy"


def get_backend(name=None):
    """Return the kernel module by name (``"numba"``/``"numpy"``) or the active one."""
    if name is None:
        return backend
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba as mod
        return mod
    raise ValueError(f"unknown backend {name!r}")
