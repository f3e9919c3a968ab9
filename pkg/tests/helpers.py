"""Independent oracles used by the test suite.

These stay deliberately naive (loops, brute force, finite differences) so
they cannot share a bug with the vectorized implementations they check.
"""

from __future__ import annotations

import numpy as np

from autofuse.nn import MlpParams, cross_entropy, mlp_forward, softmax


def flatten_params(params: MlpParams) -> np.ndarray:
    parts = []
    for W, b in zip(params.weights, params.biases):
        parts.append(W.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def unflatten_params(params: MlpParams, flat: np.ndarray) -> MlpParams:
    out = params.copy()
    start = 0
    for i, (W, b) in enumerate(zip(out.weights, out.biases)):
        out.weights[i] = flat[start : start + W.size].reshape(W.shape)
        start += W.size
        out.biases[i] = flat[start : start + b.size].reshape(b.shape)
        start += b.size
    return out


def mlp_loss(params: MlpParams, X: np.ndarray, y: np.ndarray) -> float:
    _, probs = mlp_forward(params, X)
    return cross_entropy(probs, y)


def fd_param_gradient(params: MlpParams, X, y, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the mean cross-entropy w.r.t. parameters."""
    flat = flatten_params(params)
    grad = np.zeros_like(flat)
    for i in range(len(flat)):
        up = flat.copy()
        up[i] += h
        down = flat.copy()
        down[i] -= h
        grad[i] = (
            mlp_loss(unflatten_params(params, up), X, y)
            - mlp_loss(unflatten_params(params, down), X, y)
        ) / (2 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    scale = np.maximum(np.abs(analytic), np.maximum(np.abs(numeric), floor))
    return float(np.max(np.abs(analytic - numeric) / scale))


def brute_force_auroc_binary(scores, y) -> float:
    """Mean over all positive-negative pairs of win/tie credit."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    pos = scores[y == 1]
    neg = scores[y == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


def brute_force_auroc_multiclass(P, y) -> float:
    P = np.asarray(P, dtype=np.float64)
    y = np.asarray(y)
    values = []
    for c in range(P.shape[1]):
        mask = y == c
        if mask.any() and (~mask).any():
            values.append(brute_force_auroc_binary(P[:, c], mask.astype(int)))
    return float(np.mean(values))


def direct_confusion_metrics(y_pred, y_true, n_classes: int) -> dict[str, float]:
    """Plain-loop recomputation of accuracy / balanced accuracy / F1 / MCC."""
    y_pred = np.asarray(y_pred)
    y_true = np.asarray(y_true)
    n = len(y_true)
    accuracy = sum(1 for a, b in zip(y_pred, y_true) if a == b) / n

    recalls = []
    for c in range(n_classes):
        support = [i for i in range(n) if y_true[i] == c]
        if support:
            recalls.append(sum(1 for i in support if y_pred[i] == c) / len(support))
    balanced = float(np.mean(recalls))

    f1s = []
    for c in range(n_classes):
        tp = sum(1 for i in range(n) if y_true[i] == c and y_pred[i] == c)
        fp = sum(1 for i in range(n) if y_true[i] != c and y_pred[i] == c)
        fn = sum(1 for i in range(n) if y_true[i] == c and y_pred[i] != c)
        if tp + fp + fn == 0:
            continue
        f1s.append(2 * tp / (2 * tp + fp + fn))
    macro_f1 = float(np.mean(f1s))

    c_sum = sum(1 for a, b in zip(y_pred, y_true) if a == b)
    t = [sum(1 for v in y_true if v == c) for c in range(n_classes)]
    p = [sum(1 for v in y_pred if v == c) for c in range(n_classes)]
    s = float(n)
    cov = c_sum * s - float(np.dot(p, t))
    denom = (s * s - float(np.dot(p, p))) * (s * s - float(np.dot(t, t)))
    mcc = 0.0 if denom <= 0 else cov / np.sqrt(denom)
    return {"accuracy": accuracy, "balanced_accuracy": balanced, "macro_f1": macro_f1, "mcc": mcc}


def simplex_grid_1d(steps: int = 1000) -> np.ndarray:
    """Grid over the 1-simplex, as (w, 1-w) rows."""
    w = np.linspace(0.0, 1.0, steps + 1)
    return np.stack([w, 1.0 - w], axis=1)


def random_mlp(rng: np.random.Generator, activation=None) -> MlpParams:
    from autofuse.nn import init_mlp

    n_in = int(rng.integers(3, 8))
    hidden = [int(rng.integers(4, 10)) for _ in range(int(rng.integers(1, 3)))]
    n_out = int(rng.integers(2, 5))
    act = activation or ("relu" if rng.random() < 0.5 else "tanh")
    return init_mlp([n_in, *hidden, n_out], activation=act, seed=int(rng.integers(0, 2**31)))
