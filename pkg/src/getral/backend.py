"""Kernel backend selection.

The hot kernels (window co-occurrence, cosine row similarity, Gaussian
kernel pooling) exist twice: numba-jitted loops and pure numpy. The
``GETRAL_BACKEND`` environment variable picks one at import time:

* unset       -> numba when importable, else numpy
* ``numba``   -> numba, import error if unavailable
* ``numpy``   -> pure numpy

``get_backend(name)`` returns a specific implementation regardless of the
env flag; the benchmark and the cross-backend tests use it.
"""

import os

from . import _kernels_numpy

ENV_VAR = "GETRAL_BACKEND"

_KERNEL_NAMES = (
    "cooccurrence_adjacency",
    "cosine_rows_forward",
    "cosine_rows_backward",
    "kernel_pool_forward",
    "kernel_pool_backward",
)


class BackendError(RuntimeError):
    pass


def _load_numba_kernels():
    from . import _kernels_numba

    return _kernels_numba


def available_backends():
    names = ["numpy"]
    try:
        _load_numba_kernels()
    except ImportError:
        pass
    else:
        names.insert(0, "numba")
    return tuple(names)


def get_backend(name):
    """Return the kernel module for ``name`` ('numba' or 'numpy')."""
    if name == "numpy":
        return _kernels_numpy
    if name == "numba":
        try:
            return _load_numba_kernels()
        except ImportError as exc:
            raise BackendError("numba backend requested but numba is not importable") from exc
    raise BackendError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")


def _select_active():
    choice = os.environ.get(ENV_VAR, "").strip().lower()
    if choice in ("numba", "numpy"):
        return choice, get_backend(choice)
    if choice:
        raise BackendError(f"{ENV_VAR}={choice!r} is not a valid backend (use 'numba' or 'numpy')")
    try:
        return "numba", _load_numba_kernels()
    except ImportError:
        return "numpy", _kernels_numpy


ACTIVE_BACKEND, _active = _select_active()

cooccurrence_adjacency = _active.cooccurrence_adjacency
cosine_rows_forward = _active.cosine_rows_forward
cosine_rows_backward = _active.cosine_rows_backward
kernel_pool_forward = _active.kernel_pool_forward
kernel_pool_backward = _active.kernel_pool_backward

NORM_EPS = _kernels_numpy.NORM_EPS
