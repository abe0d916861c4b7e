"""Diffusion-convolution activations, the dense output layer, prediction and gradients.

Entities (nodes, whole graphs, or edge-nodes) are represented by their
diffused feature block of shape ``(H + 1, F)``.  Activations are
``tanh(W^c * block)`` elementwise, and class scores are a linear map of the
flattened activations, optionally squashed by ``tanh`` again.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .graph import DiffusedFeatures

OUTPUT_NONLINEARITIES = (None, "tanh")


@dataclass(frozen=True, eq=False)
class DcnnParams:
    conv_weights: np.ndarray   # (H + 1, F)
    dense_weights: np.ndarray  # (C, (H + 1) * F)

    def __post_init__(self):
        wc = np.array(self.conv_weights, dtype=np.float64)
        wd = np.array(self.dense_weights, dtype=np.float64)
        if wc.ndim != 2:
            raise ValueError("conv_weights must be (H + 1) x F")
        if wd.ndim != 2 or wd.shape[1] != wc.size:
            raise ValueError(
                f"dense_weights must be C x {wc.size}, got shape {wd.shape}"
            )
        if not (np.all(np.isfinite(wc)) and np.all(np.isfinite(wd))):
            raise ValueError("parameters must be finite")
        wc.setflags(write=False)
        wd.setflags(write=False)
        object.__setattr__(self, "conv_weights", wc)
        object.__setattr__(self, "dense_weights", wd)

    @property
    def hops(self) -> int:
        return self.conv_weights.shape[0] - 1

    @property
    def num_features(self) -> int:
        return self.conv_weights.shape[1]

    @property
    def num_classes(self) -> int:
        return self.dense_weights.shape[0]

    @property
    def num_parameters(self) -> int:
        return self.conv_weights.size + self.dense_weights.size

    def arrays(self):
        return self.conv_weights, self.dense_weights

    def equals(self, other) -> bool:
        return (np.array_equal(self.conv_weights, other.conv_weights)
                and np.array_equal(self.dense_weights, other.dense_weights))

    def save(self, path):
        Path(path).write_bytes(dumps_params(self))

    @classmethod
    def load(cls, path) -> DcnnParams:
        return loads_params(Path(path).read_bytes())


# Checkpoint layout (all little-endian):
#   8 bytes   magic b"DCNNPRM\0"
#   uint32    format version (1)
#   uint32    H, F, C
#   float64   conv weights, (H + 1) * F values, row-major
#   float64   dense weights, C * (H + 1) * F values, row-major
_MAGIC = b"DCNNPRM\0"
_VERSION = 1
_HEADER = struct.Struct("<8sIIII")


def dumps_params(params: DcnnParams) -> bytes:
    head = _HEADER.pack(_MAGIC, _VERSION, params.hops, params.num_features,
                        params.num_classes)
    return (head + params.conv_weights.astype("<f8").tobytes()
            + params.dense_weights.astype("<f8").tobytes())


def loads_params(blob: bytes) -> DcnnParams:
    if len(blob) < _HEADER.size:
        raise ValueError("checkpoint truncated")
    magic, version, h, f, c = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise ValueError("not a DCNN parameter checkpoint")
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    k = (h + 1) * f
    body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if body.size != k + c * k:
        raise ValueError("checkpoint size does not match its header")
    return DcnnParams(body[:k].reshape(h + 1, f), body[k:].reshape(c, k))


def _values(diffused):
    if isinstance(diffused, DiffusedFeatures):
        return diffused.values
    values = np.asarray(diffused, dtype=np.float64)
    if values.ndim != 3:
        raise ValueError("diffused features must be N x (H + 1) x F")
    return values


def _check_shapes(values, params):
    if values.shape[1:] != params.conv_weights.shape:
        raise ValueError(
            f"diffused block {values.shape[1:]} does not match "
            f"conv weights {params.conv_weights.shape}"
        )


def _check_nonlinearity(output_nonlinearity):
    if output_nonlinearity not in OUTPUT_NONLINEARITIES:
        raise ValueError(f"unknown output nonlinearity {output_nonlinearity!r}")


def pool_nodes(diffused) -> np.ndarray:
    """Mean diffused block over nodes, shape ``(1, H + 1, F)``."""
    values = _values(diffused)
    if values.shape[0] == 0:
        raise ValueError("cannot pool an empty graph")
    return values.mean(axis=0, keepdims=True)


def node_activations(diffused, params: DcnnParams) -> np.ndarray:
    values = _values(diffused)
    _check_shapes(values, params)
    return np.tanh(params.conv_weights * values)


def graph_activations(diffused, params: DcnnParams) -> np.ndarray:
    """Activations of the whole graph: the node mean is taken before ``tanh``."""
    return node_activations(pool_nodes(diffused), params)


def class_scores(Z, params: DcnnParams, output_nonlinearity=None) -> np.ndarray:
    _check_nonlinearity(output_nonlinearity)
    Z = np.asarray(Z, dtype=np.float64)
    flat = Z.reshape(Z.shape[0], -1)
    if flat.shape[1] != params.dense_weights.shape[1]:
        raise ValueError("activations do not match dense weights")
    scores = flat @ params.dense_weights.T
    if output_nonlinearity == "tanh":
        scores = np.tanh(scores)
    return scores


def predict_hard(scores) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class
    return np.argmax(np.atleast_2d(scores), axis=1)


def predict_proba(scores) -> np.ndarray:
    s = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def forward(inputs, params: DcnnParams, output_nonlinearity=None, backend=None):
    """Fused forward pass on flattened entity blocks ``(E, (H + 1) * F)``.

    Returns ``(Z, scores)`` with ``Z`` flattened the same way.
    """
    _check_nonlinearity(output_nonlinearity)
    z, scores = kernels.dense_forward(inputs, params.conv_weights.ravel(),
                                      params.dense_weights, backend=backend)
    if output_nonlinearity == "tanh":
        scores = np.tanh(scores)
    return z, scores


def backward_flat(inputs, z, scores, params: DcnnParams, upstream,
                  output_nonlinearity=None, backend=None):
    """Gradients from the cached forward results of :func:`forward`."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != scores.shape:
        raise ValueError(
            f"upstream gradient shape {upstream.shape} != scores {scores.shape}"
        )
    if output_nonlinearity == "tanh":
        upstream = upstream * (1.0 - scores * scores)
    dwc, dwd = kernels.dense_backward(inputs, z, params.dense_weights, upstream,
                                      backend=backend)
    return dwc.reshape(params.conv_weights.shape), dwd


def backward(diffused, params: DcnnParams, upstream, *, pool=False,
             output_nonlinearity=None, backend=None):
    """Gradients of ``sum(upstream * scores)`` w.r.t. ``(W^c, W^d)``.

    With ``pool=True`` the scores are those of the whole graph (node mean
    before the nonlinearity) and ``upstream`` has one row.
    """
    values = pool_nodes(diffused) if pool else _values(diffused)
    _check_shapes(values, params)
    flat = values.reshape(values.shape[0], -1)
    z, scores = forward(flat, params, output_nonlinearity, backend)
    return backward_flat(flat, z, scores, params, upstream, output_nonlinearity,
                         backend)
