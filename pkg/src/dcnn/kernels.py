"""Backend selection for the numerical hot spots.

The compiled extension ``dcnn._ckernels`` is used when it was built; otherwise
the numpy implementation in ``dcnn._pykernels`` is used.  Setting the
environment variable ``DCNN_KERNELS=python`` forces the numpy path.

Every backend exposes the same three functions:

``spmm_csr(indptr, indices, data, x, out)``
    Write ``P @ x`` into ``out`` where ``P`` is a CSR matrix.
``dense_forward(inputs, wc, wd) -> (z, scores)``
    ``z = tanh(inputs * wc)`` and ``scores = z @ wd.T`` for flattened entities.
``dense_backward(inputs, z, wd, upstream) -> (dwc, dwd)``
    Gradients of ``scores`` contracted with ``upstream``.
"""
import os
from types import ModuleType

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name=None) -> ModuleType:
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return _active
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel backend {name!r}; available: {available_backends()}"
        ) from None


def _select():
    forced = os.environ.get("DCNN_KERNELS", "").strip().lower()
    if forced:
        return forced, get_backend(forced)
    if _ckernels is not None:
        return "cython", _ckernels
    return "python", _pykernels


BACKEND, _active = _select()


def spmm_csr(indptr, indices, data, x, out, backend=None):
    mod = get_backend(backend)
    if mod is _ckernels:
        indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        indices = np.ascontiguousarray(indices, dtype=np.int32)
        data = np.ascontiguousarray(data, dtype=np.float64)
    mod.spmm_csr(indptr, indices, data, x, out)


def dense_forward(inputs, wc, wd, backend=None):
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    wc = np.ascontiguousarray(wc, dtype=np.float64).ravel()
    wd = np.ascontiguousarray(wd, dtype=np.float64)
    return get_backend(backend).dense_forward(inputs, wc, wd)


def dense_backward(inputs, z, wd, upstream, backend=None):
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    wd = np.ascontiguousarray(wd, dtype=np.float64)
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    return get_backend(backend).dense_backward(inputs, z, wd, upstream)
