"""Tabular ML pipelines: imputation -> scaling -> reduction -> classifier.

Every stage is fitted on training rows only and the fitted pipeline
serializes to a self-describing JSON document.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .exceptions import AllMissingColumn, RankError, ShapeMismatch
from .linear import LogisticRegressionGD
from .nn import MlpParams, TrainConfig, mlp_forward, train_mlp
from .trees import GradientBoosting, RandomForest
from .validation import as_labels, as_matrix, check_n_features

IMPUTER_STRATEGIES = ("mean", "most_frequent", "constant_zero")
SCALER_KINDS = ("none", "standard", "minmax")
REDUCER_KINDS = ("none", "pca")
CLASSIFIER_KINDS = ("logistic_regression", "random_forest", "gradient_boosting", "mlp")


class Imputer(BaseEstimator, TransformerMixin):
    """Fill NaN entries with per-column statistics learned at fit time."""

    def __init__(self, strategy="mean"):
        self.strategy = strategy

    def fit(self, X, y=None):
        X = as_matrix(X, allow_nan=True)
        if self.strategy not in IMPUTER_STRATEGIES:
            raise ValueError(f"strategy must be one of {IMPUTER_STRATEGIES}")
        if self.strategy == "constant_zero":
            fill = np.zeros(X.shape[1])
        else:
            observed = ~np.isnan(X)
            counts = observed.sum(axis=0)
            if (counts == 0).any():
                bad = int(np.flatnonzero(counts == 0)[0])
                raise AllMissingColumn(f"column {bad} has no observed values")
            if self.strategy == "mean":
                fill = np.nanmean(X, axis=0)
            else:
                fill = np.empty(X.shape[1])
                for j in range(X.shape[1]):
                    col = X[observed[:, j], j]
                    values, counts = np.unique(col, return_counts=True)
                    # ties resolve to the smallest value (np.unique sorts)
                    fill[j] = values[np.argmax(counts)]
        self.fill_values_ = fill
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = as_matrix(X, allow_nan=True)
        check_n_features(X, self.n_features_in_)
        out = X.copy()
        missing = np.isnan(out)
        if missing.any():
            out[missing] = np.broadcast_to(self.fill_values_, out.shape)[missing]
        return out

    def to_dict(self):
        return {"strategy": self.strategy, "fill_values": self.fill_values_.tolist()}

    @classmethod
    def from_dict(cls, d):
        imp = cls(strategy=d["strategy"])
        imp.fill_values_ = np.asarray(d["fill_values"], dtype=np.float64)
        imp.n_features_in_ = len(imp.fill_values_)
        return imp


class Scaler(BaseEstimator, TransformerMixin):
    """Standard or min-max scaling; degenerate columns map to zero."""

    def __init__(self, kind="standard"):
        self.kind = kind

    def fit(self, X, y=None):
        X = as_matrix(X)
        if self.kind not in SCALER_KINDS:
            raise ValueError(f"kind must be one of {SCALER_KINDS}")
        if self.kind == "none":
            center = np.zeros(X.shape[1])
            scale = np.ones(X.shape[1])
        elif self.kind == "standard":
            center = X.mean(axis=0)
            scale = X.std(axis=0)
            scale[scale == 0.0] = 1.0
        else:
            center = X.min(axis=0)
            scale = X.max(axis=0) - center
            scale[scale == 0.0] = 1.0
        self.center_ = center
        self.scale_ = scale
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = as_matrix(X)
        check_n_features(X, self.n_features_in_)
        return (X - self.center_) / self.scale_

    def to_dict(self):
        return {"kind": self.kind, "center": self.center_.tolist(), "scale": self.scale_.tolist()}

    @classmethod
    def from_dict(cls, d):
        sc = cls(kind=d["kind"])
        sc.center_ = np.asarray(d["center"], dtype=np.float64)
        sc.scale_ = np.asarray(d["scale"], dtype=np.float64)
        sc.n_features_in_ = len(sc.center_)
        return sc


class PCAReducer(BaseEstimator, TransformerMixin):
    """Centered principal-component projection via SVD.

    Components are orthonormal, ordered by non-increasing explained
    variance, and sign-fixed (largest-magnitude entry positive) so fits
    are deterministic.
    """

    def __init__(self, n_components=2):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = as_matrix(X)
        n, p = X.shape
        limit = min(n - 1, p)
        if not 1 <= self.n_components <= limit:
            raise RankError(f"n_components must be in [1, {limit}], got {self.n_components}")
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        components = vt[: self.n_components]
        # deterministic sign: the largest-|.| coordinate of each component is positive
        flip = np.sign(components[np.arange(len(components)), np.abs(components).argmax(axis=1)])
        flip[flip == 0.0] = 1.0
        self.components_ = components * flip[:, None]
        variance = (s**2) / max(n - 1, 1)
        total = float(variance.sum())
        self.explained_variance_ratio_ = (
            variance[: self.n_components] / total if total > 0 else np.zeros(self.n_components)
        )
        self.n_features_in_ = p
        return self

    def transform(self, X):
        X = as_matrix(X)
        check_n_features(X, self.n_features_in_)
        return (X - self.mean_) @ self.components_.T

    def to_dict(self):
        return {
            "n_components": self.n_components,
            "mean": self.mean_.tolist(),
            "components": self.components_.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio_.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        pca = cls(n_components=d["n_components"])
        pca.mean_ = np.asarray(d["mean"], dtype=np.float64)
        pca.components_ = np.asarray(d["components"], dtype=np.float64)
        pca.explained_variance_ratio_ = np.asarray(d["explained_variance_ratio"], dtype=np.float64)
        pca.n_features_in_ = len(pca.mean_)
        return pca


class MlpClassifier(BaseEstimator, ClassifierMixin):
    """Dense network classifier backed by the explicit forward/backward engine."""

    def __init__(
        self,
        hidden=(32,),
        activation="relu",
        learning_rate=0.01,
        epochs=200,
        weight_decay=0.0,
        batch_size=0,
        optimizer="adam",
        seed=0,
        n_classes=None,
    ):
        self.hidden = hidden
        self.activation = activation
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.seed = seed
        self.n_classes = n_classes

    def fit(self, X, y):
        config = TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            weight_decay=self.weight_decay,
            seed=self.seed,
            optimizer=self.optimizer,
        )
        self.params_, self.history_ = train_mlp(
            X,
            y,
            hidden=tuple(self.hidden),
            config=config,
            activation=self.activation,
            n_classes=self.n_classes,
            return_history=True,
        )
        self.n_features_in_ = self.params_.n_inputs
        self.classes_ = np.arange(self.params_.n_outputs)
        return self

    def predict_proba(self, X):
        _, probs = mlp_forward(self.params_, X)
        return probs

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def to_dict(self):
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.get_params().items()}
        return {"kind": "mlp", "params": params, "network": self.params_.to_dict()}

    @classmethod
    def from_dict(cls, d):
        init = dict(d["params"])
        init["hidden"] = tuple(init["hidden"])
        model = cls(**init)
        model.params_ = MlpParams.from_dict(d["network"])
        model.n_features_in_ = model.params_.n_inputs
        model.classes_ = np.arange(model.params_.n_outputs)
        return model


def make_classifier(kind: str, params: dict | None, seed: int, n_classes: int | None):
    """Instantiate one of the supported classifiers from a config fragment."""
    params = dict(params or {})
    if kind == "logistic_regression":
        return LogisticRegressionGD(n_classes=n_classes, **params)
    if kind == "random_forest":
        return RandomForest(seed=seed, n_classes=n_classes, **params)
    if kind == "gradient_boosting":
        return GradientBoosting(n_classes=n_classes, **params)
    if kind == "mlp":
        if "hidden" in params:
            params["hidden"] = tuple(params["hidden"])
        return MlpClassifier(seed=seed, n_classes=n_classes, **params)
    raise ValueError(f"classifier must be one of {CLASSIFIER_KINDS}, got {kind!r}")


def classifier_from_dict(d: dict):
    kind = d["kind"]
    if kind == "logistic":
        return LogisticRegressionGD.from_dict(d)
    if kind == "random_forest":
        return RandomForest.from_dict(d)
    if kind == "gradient_boosting":
        return GradientBoosting.from_dict(d)
    if kind == "mlp":
        return MlpClassifier.from_dict(d)
    raise ValueError(f"unknown classifier kind {kind!r}")


class TabularPipeline(BaseEstimator, ClassifierMixin):
    """Imputation, scaling, optional PCA, and a classifier, fitted in order.

    Parameters
    ----------
    imputer, scaler, reducer : stage kinds (see module constants).
    pca_components : component count when ``reducer == "pca"``.
    classifier : classifier kind.
    classifier_params : hyperparameters forwarded to the classifier.
    seed : seed forwarded to stochastic classifiers.
    n_classes : fixes the probability-column count (useful when a fold's
        training split lacks a class).
    """

    def __init__(
        self,
        imputer="mean",
        scaler="standard",
        reducer="none",
        pca_components=None,
        classifier="logistic_regression",
        classifier_params=None,
        seed=0,
        n_classes=None,
    ):
        self.imputer = imputer
        self.scaler = scaler
        self.reducer = reducer
        self.pca_components = pca_components
        self.classifier = classifier
        self.classifier_params = classifier_params
        self.seed = seed
        self.n_classes = n_classes

    def fit(self, X, y):
        X = as_matrix(X, allow_nan=True)
        y = as_labels(y)
        if len(y) != X.shape[0]:
            raise ShapeMismatch(f"{X.shape[0]} rows vs {len(y)} labels")
        self.imputer_ = Imputer(strategy=self.imputer).fit(X)
        h = self.imputer_.transform(X)
        self.scaler_ = Scaler(kind=self.scaler).fit(h)
        h = self.scaler_.transform(h)
        if self.reducer == "pca":
            self.reducer_ = PCAReducer(n_components=self.pca_components).fit(h)
            h = self.reducer_.transform(h)
        elif self.reducer == "none":
            self.reducer_ = None
        else:
            raise ValueError(f"reducer must be one of {REDUCER_KINDS}")
        self.classifier_ = make_classifier(
            self.classifier, self.classifier_params, self.seed, self.n_classes
        ).fit(h, y)
        self.n_features_in_ = X.shape[1]
        self.classes_ = self.classifier_.classes_
        return self

    def transform(self, X):
        """Apply the fitted pre-classifier stages."""
        X = as_matrix(X, allow_nan=True)
        check_n_features(X, self.n_features_in_)
        h = self.scaler_.transform(self.imputer_.transform(X))
        return self.reducer_.transform(h) if self.reducer_ is not None else h

    def predict_proba(self, X):
        return self.classifier_.predict_proba(self.transform(X))

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def to_dict(self):
        return {
            "kind": "tabular_pipeline",
            "params": {
                "imputer": self.imputer,
                "scaler": self.scaler,
                "reducer": self.reducer,
                "pca_components": self.pca_components,
                "classifier": self.classifier,
                "classifier_params": self.classifier_params,
                "seed": self.seed,
                "n_classes": self.n_classes,
            },
            "stages": {
                "imputer": self.imputer_.to_dict(),
                "scaler": self.scaler_.to_dict(),
                "reducer": self.reducer_.to_dict() if self.reducer_ is not None else None,
            },
            "classifier_state": self.classifier_.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        pipe = cls(**d["params"])
        pipe.imputer_ = Imputer.from_dict(d["stages"]["imputer"])
        pipe.scaler_ = Scaler.from_dict(d["stages"]["scaler"])
        pipe.reducer_ = (
            PCAReducer.from_dict(d["stages"]["reducer"]) if d["stages"]["reducer"] else None
        )
        pipe.classifier_ = classifier_from_dict(d["classifier_state"])
        pipe.n_features_in_ = pipe.imputer_.n_features_in_
        pipe.classes_ = pipe.classifier_.classes_
        return pipe
