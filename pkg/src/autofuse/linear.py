"""Multinomial logistic regression trained by full-batch gradient descent."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .exceptions import DivergenceError, ShapeMismatch
from .nn import one_hot, softmax
from .validation import as_labels, as_matrix, check_min_classes, check_n_features


def logistic_loss_and_grad(W, b, X, Y, l2: float):
    """Mean cross-entropy plus an L2 penalty on W, with analytic gradients."""
    logits = X @ W + b
    P = softmax(logits)
    n = X.shape[0]
    picked = np.clip((P * Y).sum(axis=1), 1e-300, None)
    loss = float(np.mean(-np.log(picked))) + 0.5 * l2 * float((W * W).sum())
    d_logits = (P - Y) / n
    grad_W = X.T @ d_logits + l2 * W
    grad_b = d_logits.sum(axis=0)
    return loss, grad_W, grad_b


class LogisticRegressionGD(BaseEstimator, ClassifierMixin):
    """Softmax regression with a fixed epoch budget and zero initialization.

    The zero init makes training deterministic without an RNG; the problem
    is convex so no symmetry breaking is needed.
    """

    def __init__(self, l2=0.0, learning_rate=0.5, epochs=300, n_classes=None):
        self.l2 = l2
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.n_classes = n_classes

    def fit(self, X, y):
        X = as_matrix(X)
        y = as_labels(y)
        if len(y) != X.shape[0]:
            raise ShapeMismatch(f"{X.shape[0]} rows vs {len(y)} labels")
        observed = check_min_classes(y)
        C = self.n_classes if self.n_classes is not None else observed
        Y = one_hot(y, C)
        W = np.zeros((X.shape[1], C))
        b = np.zeros(C)
        for _ in range(self.epochs):
            loss, gW, gb = logistic_loss_and_grad(W, b, X, Y, self.l2)
            if not np.isfinite(loss):
                raise DivergenceError("logistic loss became non-finite")
            W -= self.learning_rate * gW
            b -= self.learning_rate * gb
        if not (np.isfinite(W).all() and np.isfinite(b).all()):
            raise DivergenceError("logistic parameters became non-finite")
        self.coef_ = W
        self.intercept_ = b
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.arange(C)
        return self

    def predict_proba(self, X):
        X = as_matrix(X)
        check_n_features(X, self.n_features_in_)
        return softmax(X @ self.coef_ + self.intercept_)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": "logistic",
            "params": self.get_params(),
            "coef": self.coef_.tolist(),
            "intercept": self.intercept_.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticRegressionGD":
        model = cls(**d["params"])
        model.coef_ = np.asarray(d["coef"], dtype=np.float64)
        model.intercept_ = np.asarray(d["intercept"], dtype=np.float64)
        model.n_features_in_ = model.coef_.shape[0]
        model.classes_ = np.arange(model.coef_.shape[1])
        return model
