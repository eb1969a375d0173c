"""Dense linear algebra primitives, stable probability transforms, and a
finite-difference gradient oracle.

Everything here is a pure function on immutable inputs (arrays are never
mutated), so all operations are safe to call concurrently. Matrices are
plain 2-D ``numpy`` arrays of float64 in row-major order; probability
vectors are 1-D float64 arrays over at least two class labels whose
entries lie in [0, 1] and sum to 1 within 1e-9.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericError, ShapeError

PROB_SUM_ATOL = 1e-9


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise NumericError("matrix contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product of two conforming 2-D arrays."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ "
            f"({b.shape[0]}x{b.shape[1]})"
        )
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise NumericError("matmul overflowed to non-finite values")
    return out


def softmax(logits) -> np.ndarray:
    """Exp-normalize a logit vector via the max-shifted form.

    The shift makes the transform invariant to adding a constant and
    prevents overflow for confident heads (e.g. logits ~ 1000).
    """
    v = np.asarray(logits, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ShapeError("softmax expects a 1-D vector of length >= 2")
    if not np.all(np.isfinite(v)):
        raise NumericError("softmax input contains non-finite entries")
    shifted = v - np.max(v)
    e = np.exp(shifted)
    return e / np.sum(e)


def log_softmax(logits) -> np.ndarray:
    """Log of :func:`softmax`, computed in log-space (never -inf in practice
    unless a logit gap exceeds ~745 nats, far beyond trained heads)."""
    v = np.asarray(logits, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ShapeError("log_softmax expects a 1-D vector of length >= 2")
    if not np.all(np.isfinite(v)):
        raise NumericError("log_softmax input contains non-finite entries")
    shifted = v - np.max(v)
    return shifted - np.log(np.sum(np.exp(shifted)))


def is_prob_vector(p, atol: float = PROB_SUM_ATOL) -> bool:
    """Check the probability-vector invariants: entries in [0, 1], sum 1."""
    v = np.asarray(p, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        return False
    if not np.all(np.isfinite(v)):
        return False
    if np.any(v < 0.0) or np.any(v > 1.0):
        return False
    return abs(float(np.sum(v)) - 1.0) <= atol


def entropy(p) -> float:
    """Shannon entropy -sum(p_k ln p_k) in nats, with 0*ln(0) := 0.

    Bounded by [0, ln K] for K classes; the natural log keeps ln K the
    ceiling used by entropy-threshold exit rules.
    """
    v = np.asarray(p, dtype=np.float64)
    if not is_prob_vector(v):
        raise ShapeError("entropy expects a valid probability vector")
    nz = v[v > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function.

    Perturbs one coordinate at a time: (f(x + eps*e_k) - f(x - eps*e_k))
    / (2 eps). Used as the independent oracle for analytic gradients.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)  # private copy; the input stays untouched
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        fp = float(f(x))
        flat[k] = orig - eps
        fm = float(f(x))
        flat[k] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"function value non-finite at coordinate {k}")
        gflat[k] = (fp - fm) / (2.0 * eps)
    return grad
