"""Comparison methods: diffusion kernels on graphs and regularized logistic regression."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

ALPHA_GRID = (0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0)
LAMBDA_GRID = tuple(np.logspace(-4, 2, 7))
KERNEL_KINDS = ("ked", "kled")
PENALTIES = ("l1", "l2")


def matrix_exponential(M, tol=1e-16, max_terms=60) -> np.ndarray:
    """``exp(M)`` by scaling and squaring around a truncated Taylor series.

    ``M`` is scaled by ``2**-s`` until its 1-norm is at most 0.5, the series is
    summed until a term is negligible relative to the partial sum, and the
    result is squared ``s`` times.
    """
    M = np.asarray(M.toarray() if sp.issparse(M) else M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix_exponential needs a square matrix, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    norm = np.linalg.norm(M, 1)
    s = int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0
    A = M / 2.0 ** s
    result = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for j in range(1, max_terms + 1):
        term = term @ A / j
        result += term
        if np.linalg.norm(term, 1) <= tol * np.linalg.norm(result, 1):
            break
    for _ in range(s):
        result = result @ result
    return result


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    values: np.ndarray
    kind: str
    alpha: float


def _dense_symmetric(A):
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > 1e-12 * scale:
        raise ValueError("diffusion kernels need a symmetric (undirected) adjacency")
    return A


def laplacian(A) -> np.ndarray:
    A = _dense_symmetric(A)
    return np.diag(A.sum(axis=1)) - A


def exponential_diffusion_kernel(A, alpha) -> KernelMatrix:
    A = _dense_symmetric(A)
    return KernelMatrix(matrix_exponential(alpha * A), "ked", float(alpha))


def laplacian_diffusion_kernel(A, alpha) -> KernelMatrix:
    return KernelMatrix(matrix_exponential(-alpha * laplacian(A)), "kled",
                        float(alpha))


class KernelFamily:
    """All kernels ``exp(alpha * S)`` for one symmetric generator ``S``.

    ``S`` is ``A`` for KED and ``-L`` for KLED.  A single eigendecomposition
    serves every ``alpha``, which makes validation sweeps cheap.  Blocks are
    returned divided by ``exp(alpha * lambda_max)``; the positive rescaling
    keeps entries finite and does not change kernel votes.
    """

    def __init__(self, kind, A):
        if kind not in KERNEL_KINDS:
            raise ValueError(f"kernel kind must be one of {KERNEL_KINDS}")
        self.kind = kind
        gen = _dense_symmetric(A) if kind == "ked" else -laplacian(A)
        self.eigenvalues, self.eigenvectors = np.linalg.eigh(gen)

    def block(self, alpha, rows, cols) -> np.ndarray:
        lam = self.eigenvalues
        w = np.exp(alpha * (lam - lam.max()))
        V = self.eigenvectors
        return (V[rows] * w) @ V[cols].T

    def matrix(self, alpha) -> KernelMatrix:
        V, lam = self.eigenvectors, self.eigenvalues
        return KernelMatrix((V * np.exp(alpha * lam)) @ V.T, self.kind, float(alpha))


def kernel_votes(similarity, train_labels, num_classes) -> np.ndarray:
    """Summed similarity of each query row to the training nodes of each class."""
    onehot = np.zeros((len(train_labels), num_classes))
    onehot[np.arange(len(train_labels)), train_labels] = 1.0
    return similarity @ onehot


def kernel_classify(K, train_labels, train_indices, query_indices,
                    num_classes=None) -> np.ndarray:
    """Similarity-weighted class vote; ties go to the lowest class index."""
    values = K.values if isinstance(K, KernelMatrix) else np.asarray(K)
    train_indices = np.asarray(train_indices, dtype=np.int64)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if len(train_indices) == 0:
        raise ValueError("kernel_classify needs at least one training node")
    if num_classes is None:
        num_classes = int(train_labels.max()) + 1
    sim = values[np.ix_(np.asarray(query_indices, dtype=np.int64), train_indices)]
    return np.argmax(kernel_votes(sim, train_labels, num_classes), axis=1)


# -- logistic regression ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class LogisticModel:
    weights: np.ndarray  # (C, F)
    bias: np.ndarray     # (C,)
    penalty: str
    lam: float

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights.T + self.bias


def _softmax(scores):
    e = np.exp(scores - scores.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def logistic_objective(weights, bias, X, labels, penalty="l2", lam=0.0):
    """Mean cross-entropy plus penalty, with the gradient of the smooth part.

    The l2 penalty is ``lam / 2 * ||W||^2`` and is included in the gradient;
    the l1 penalty ``lam * ||W||_1`` contributes to the value only.  The bias
    is never penalized.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    scores = X @ weights.T + bias
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(n), labels]))
    resid = _softmax(scores)
    resid[np.arange(n), labels] -= 1.0
    resid /= n
    g_w = resid.T @ X
    g_b = resid.sum(axis=0)
    if penalty == "l2":
        loss += 0.5 * lam * float(np.sum(weights ** 2))
        g_w = g_w + lam * weights
    elif penalty == "l1":
        loss += lam * float(np.abs(weights).sum())
    else:
        raise ValueError(f"penalty must be one of {PENALTIES}")
    return loss, g_w, g_b


def _soft_threshold(w, t):
    return np.sign(w) * np.maximum(np.abs(w) - t, 0.0)


def logistic_train(X, labels, penalty="l2", lam=1e-2, num_classes=None,
                   max_iter=1000, tol=1e-7, init=None) -> LogisticModel:
    """Multinomial logistic regression by accelerated proximal gradient descent.

    ``init`` (a previous :class:`LogisticModel`) warm-starts the solver, which
    makes sweeping a decreasing regularization path cheap.
    """
    if penalty not in PENALTIES:
        raise ValueError(f"penalty must be one of {PENALTIES}")
    if lam < 0:
        raise ValueError("regularization strength must be nonnegative")
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")
    n, f = X.shape
    # softmax cross-entropy has curvature at most 1/2 per unit feature norm
    spectral = np.linalg.norm(np.hstack([X, np.ones((n, 1))]), 2)
    lipschitz = 0.5 * spectral ** 2 / n + (lam if penalty == "l2" else 0.0)
    step = 1.0 / lipschitz

    if init is not None:
        W, b = init.weights.copy(), init.bias.copy()
    else:
        W, b = np.zeros((num_classes, f)), np.zeros(num_classes)
    W_prev, b_prev = W, b
    momentum = 1.0
    for _ in range(max_iter):
        next_momentum = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum ** 2))
        beta = (momentum - 1.0) / next_momentum
        Yw = W + beta * (W - W_prev)
        Yb = b + beta * (b - b_prev)
        loss, g_w, g_b = logistic_objective(Yw, Yb, X, labels, penalty, lam)
        if not np.isfinite(loss):
            raise FloatingPointError("logistic regression diverged")
        W_prev, b_prev = W, b
        W = Yw - step * g_w
        b = Yb - step * g_b
        if penalty == "l1":
            W = _soft_threshold(W, step * lam)
        momentum = next_momentum
        change = max(np.abs(W - W_prev).max(initial=0.0),
                     np.abs(b - b_prev).max(initial=0.0))
        if change < tol:
            break
    return LogisticModel(W, b, penalty, float(lam))


def logistic_predict(model: LogisticModel, X) -> np.ndarray:
    return np.argmax(model.decision_function(X), axis=1)
