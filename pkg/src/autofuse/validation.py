"""Small input-validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidProbability, LengthMismatch, ShapeMismatch, SingleClassError


def as_matrix(X, name: str = "X", allow_nan: bool = False) -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting inf (and NaN unless allowed)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got ndim={X.ndim}")
    if allow_nan:
        if np.isinf(X).any():
            raise ShapeMismatch(f"{name} contains infinite values")
    elif not np.isfinite(X).all():
        raise ShapeMismatch(f"{name} contains non-finite values")
    return X


def as_labels(y, name: str = "y") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeMismatch(f"{name} must be 1-D, got ndim={y.ndim}")
    out = y.astype(np.int64)
    if not np.array_equal(out, np.asarray(y, dtype=np.float64)):
        raise ShapeMismatch(f"{name} must contain integer class labels")
    return out


def check_length(n: int, *arrays) -> None:
    for a in arrays:
        if len(a) != n:
            raise LengthMismatch(f"expected length {n}, got {len(a)}")


def check_n_features(X: np.ndarray, expected: int, name: str = "X") -> None:
    if X.shape[1] != expected:
        raise ShapeMismatch(f"{name} has {X.shape[1]} columns, expected {expected}")


def check_min_classes(y: np.ndarray) -> int:
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassError("training labels contain a single class")
    return int(classes.max()) + 1


def check_prob_row(p: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).ravel()
    if (p < -atol).any() or abs(float(p.sum()) - 1.0) > atol:
        raise InvalidProbability(f"row off the probability simplex: sum={p.sum():.8f}")
    return p


def check_prob_matrix(P, atol: float = 1e-6, name: str = "P") -> np.ndarray:
    P = as_matrix(P, name)
    if (P < -atol).any() or np.abs(P.sum(axis=1) - 1.0).max() > atol:
        raise InvalidProbability(f"{name} has rows off the probability simplex")
    return P


def check_simplex_weights(w, atol: float = 1e-9) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).ravel()
    if (w < -atol).any() or abs(float(w.sum()) - 1.0) > atol:
        raise InvalidProbability(f"weights off the simplex: {w}")
    return w
