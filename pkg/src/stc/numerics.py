"""Dense linear-algebra and selection primitives shared by the toolkit.

Conventions: matrices are 2-D float32 arrays (row-major), index sets are 1-D
int64 arrays in strictly ascending order.  Storage stays in float32 but every
reduction (dot products, means, variances, norms) accumulates in float64 so
results track high-precision oracles tightly.
"""

from __future__ import annotations

import numpy as np

SIMILARITY_METRICS = ("cosine", "l1", "l2", "dot")

TOP_K_DIRECTIONS = ("largest", "smallest")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with float64 accumulation, returned as float32."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return np.matmul(a, b, dtype=np.float64).astype(np.float32)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Normalize each row to zero mean / unit variance, then scale and shift."""
    x = np.asarray(x)
    gamma = np.asarray(gamma)
    beta = np.asarray(beta)
    if x.ndim != 2:
        raise ValueError(f"layer_norm expects a 2-D input, got {x.ndim}-D")
    if gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ValueError(
            f"layer_norm affine params must have length {x.shape[1]}, "
            f"got gamma {gamma.shape} beta {beta.shape}"
        )
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    x64 = x.astype(np.float64)
    mean = x64.mean(axis=1, keepdims=True)
    var = x64.var(axis=1, keepdims=True)
    y = (x64 - mean) / np.sqrt(var + eps)
    return (y * gamma + beta).astype(np.float32)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax, max-subtracted for stability."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"softmax_rows expects a 2-D input, got {x.ndim}-D")
    x64 = x.astype(np.float64)
    e = np.exp(x64 - x64.max(axis=1, keepdims=True))
    return (e / e.sum(axis=1, keepdims=True)).astype(np.float32)


def rowwise_similarity(a: np.ndarray, b: np.ndarray, metric: str = "cosine") -> np.ndarray:
    """Per-row similarity between two equal-shape matrices.

    Distances (l1, l2) come back negated so that a larger value always means
    "more similar" regardless of metric.  Cosine rows with a zero norm on
    either side score 0 (treated as maximally novel) instead of NaN.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"rowwise_similarity needs matching 2-D shapes, got {a.shape} vs {b.shape}")
    if metric not in SIMILARITY_METRICS:
        raise ValueError(f"unknown similarity metric {metric!r}, expected one of {SIMILARITY_METRICS}")
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    if metric == "cosine":
        dots = np.einsum("ij,ij->i", a64, b64)
        norms = np.linalg.norm(a64, axis=1) * np.linalg.norm(b64, axis=1)
        out = np.zeros(a.shape[0], dtype=np.float64)
        nonzero = norms > 0.0
        np.divide(dots, norms, out=out, where=nonzero)
        # identical nonzero rows score exactly 1 (rounding in the norm product
        # would otherwise break exact ties between unchanged rows)
        out[nonzero & (a64 == b64).all(axis=1)] = 1.0
        return np.clip(out, -1.0, 1.0)
    if metric == "l1":
        return -np.abs(a64 - b64).sum(axis=1)
    if metric == "l2":
        return -np.sqrt(((a64 - b64) ** 2).sum(axis=1))
    return np.einsum("ij,ij->i", a64, b64)  # dot


def top_k_indices(scores: np.ndarray, k: int, direction: str = "largest") -> np.ndarray:
    """Indices of the k extremal scores, ties won by the lower index.

    The result is sorted ascending so downstream scatters preserve row order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ValueError(f"top_k_indices expects a 1-D score vector, got {scores.ndim}-D")
    if direction not in TOP_K_DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}, expected one of {TOP_K_DIRECTIONS}")
    if not 0 <= k <= scores.shape[0]:
        raise ValueError(f"k={k} out of range for {scores.shape[0]} scores")
    keys = -scores if direction == "largest" else scores
    # stable sort keeps equal keys in index order, which is exactly the tie rule
    order = np.argsort(keys, kind="stable")
    return np.sort(order[:k]).astype(np.int64)
