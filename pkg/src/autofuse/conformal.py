"""Inductive conformal prediction with regularized adaptive prediction sets.

The nonconformity score of a label is the cumulative sorted probability
mass down to that label's rank plus a rank penalty ``lam * max(0, rank -
k_reg)``. Calibrating the score on held-out data yields a threshold whose
prediction sets carry a finite-sample marginal coverage guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import LengthMismatch
from .metrics import metric_fn
from .validation import as_labels, check_prob_matrix, check_prob_row


@dataclass(frozen=True)
class ConformalConfig:
    """Miscoverage level and RAPS regularization parameters."""

    alpha: float = 0.1
    lam: float = 0.01
    k_reg: int = 2
    randomized: bool = False  # fixed: sets are deterministic

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.lam < 0.0:
            raise ValueError("lam must be >= 0")
        if self.k_reg < 1:
            raise ValueError("k_reg must be >= 1")
        if self.randomized:
            raise ValueError("randomized sets are not supported")


def raps_score_matrix(P, lam: float, k_reg: int) -> np.ndarray:
    """Score of every candidate label for every row, vectorized.

    Probabilities are sorted descending with ties broken toward the lower
    class index; entry [i, c] is the score row i would receive if c were
    the true label.
    """
    P = check_prob_matrix(P)
    n, C = P.shape
    # stable argsort on -P keeps the original (ascending class) order on ties
    order = np.argsort(-P, axis=1, kind="stable")
    sorted_p = np.take_along_axis(P, order, axis=1)
    cumulative = np.cumsum(sorted_p, axis=1)
    ranks = np.arange(1, C + 1, dtype=np.float64)
    penalized = cumulative + lam * np.maximum(0.0, ranks - k_reg)
    scores = np.empty_like(penalized)
    np.put_along_axis(scores, order, penalized, axis=1)
    return scores


def raps_score(p, y: int, lam: float, k_reg: int) -> float:
    """RAPS nonconformity score of label ``y`` under probability row ``p``."""
    p = check_prob_row(p)
    return float(raps_score_matrix(p.reshape(1, -1), lam, k_reg)[0, int(y)])


def calibrate(scores, alpha: float) -> float:
    """Conformal threshold: the ceil((n+1)(1-alpha))-th smallest score.

    Falls back to +inf (full prediction sets) when the index exceeds the
    number of calibration scores.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    n = len(scores)
    if n < 1:
        raise ValueError("calibration requires at least one score")
    index = math.ceil((n + 1) * (1.0 - alpha))
    if index > n:
        return float("inf")
    return float(np.sort(scores)[index - 1])


@dataclass
class ConformalCalibration:
    """A calibrated threshold together with the config that produced it."""

    config: ConformalConfig
    tau: float
    n_cal: int

    @property
    def nontrivial(self) -> bool:
        return self.n_cal >= math.ceil(1.0 / self.config.alpha) - 1

    def to_dict(self) -> dict:
        return {
            "alpha": self.config.alpha,
            "lam": self.config.lam,
            "k_reg": self.config.k_reg,
            "tau": self.tau,
            "n_cal": self.n_cal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConformalCalibration":
        config = ConformalConfig(alpha=d["alpha"], lam=d["lam"], k_reg=d["k_reg"])
        return cls(config=config, tau=float(d["tau"]), n_cal=int(d["n_cal"]))


def fit_conformal(P_cal, y_cal, config: ConformalConfig) -> ConformalCalibration:
    """Calibrate a RAPS threshold from held-out probability predictions."""
    P_cal = check_prob_matrix(P_cal)
    y_cal = as_labels(y_cal)
    if P_cal.shape[0] != len(y_cal):
        raise LengthMismatch(f"{P_cal.shape[0]} rows vs {len(y_cal)} labels")
    scores = raps_score_matrix(P_cal, config.lam, config.k_reg)[np.arange(len(y_cal)), y_cal]
    tau = calibrate(scores, config.alpha)
    return ConformalCalibration(config=config, tau=tau, n_cal=len(y_cal))


def predict_set(p, calibration: ConformalCalibration) -> np.ndarray:
    """Labels whose RAPS score is within the calibrated threshold."""
    p = check_prob_row(p)
    scores = raps_score_matrix(
        p.reshape(1, -1), calibration.config.lam, calibration.config.k_reg
    )[0]
    return np.flatnonzero(scores <= calibration.tau)


def predict_set_matrix(P, calibration: ConformalCalibration) -> np.ndarray:
    """Boolean membership matrix of prediction sets for every row."""
    scores = raps_score_matrix(P, calibration.config.lam, calibration.config.k_reg)
    return scores <= calibration.tau


def set_sizes(P, calibration: ConformalCalibration) -> np.ndarray:
    return predict_set_matrix(P, calibration).sum(axis=1)


def coverage(prediction_sets, y_true) -> float:
    """Fraction of samples whose prediction set contains the true label."""
    y_true = as_labels(y_true)
    if isinstance(prediction_sets, np.ndarray) and prediction_sets.ndim == 2:
        if prediction_sets.shape[0] != len(y_true):
            raise LengthMismatch(
                f"{prediction_sets.shape[0]} sets vs {len(y_true)} labels"
            )
        return float(prediction_sets[np.arange(len(y_true)), y_true].mean())
    sets = list(prediction_sets)
    if len(sets) != len(y_true):
        raise LengthMismatch(f"{len(sets)} sets vs {len(y_true)} labels")
    hits = sum(1 for s, y in zip(sets, y_true) if int(y) in set(int(v) for v in np.asarray(s).ravel()))
    return hits / len(sets) if sets else 0.0


@dataclass
class AcquisitionCurve:
    """Metric as a function of the fraction of samples given the second modality."""

    policy: str
    fractions: list[float]
    values: list[float]
    metric: str

    def __post_init__(self):
        frac = self.fractions
        if frac[0] != 0.0 or frac[-1] != 1.0:
            raise ValueError("fraction grid must include 0 and 1")
        if any(b <= a for a, b in zip(frac, frac[1:])):
            raise ValueError("fractions must be strictly increasing")

    def rows(self) -> list[tuple[str, float, float]]:
        return [(self.policy, f, v) for f, v in zip(self.fractions, self.values)]


def uncertainty_order(P_tab, calibration: ConformalCalibration) -> np.ndarray:
    """Sample indices from most to least uncertain under the tabular model.

    Uncertainty is the RAPS set size; ties break toward the lower maximum
    probability, then toward the lower index, so the order is total.
    """
    P_tab = check_prob_matrix(P_tab)
    sizes = set_sizes(P_tab, calibration)
    max_prob = P_tab.max(axis=1)
    n = P_tab.shape[0]
    return np.lexsort((np.arange(n), max_prob, -sizes))


def acquisition_curve(
    P_tab_test,
    P_mm_test,
    y_test,
    P_tab_cal,
    y_cal,
    config: ConformalConfig,
    fractions,
    policy: str = "uncertainty",
    seed: int = 0,
    metric: str = "accuracy",
) -> AcquisitionCurve:
    """Selective-acquisition curve over a fraction grid.

    For a fraction u the ceil(u*n) samples chosen by the policy are scored
    with the multimodal predictions, the rest with the tabular ones, and
    the metric is recomputed. u=0 therefore reproduces the tabular metric
    exactly and u=1 the multimodal metric.
    """
    P_tab_test = check_prob_matrix(P_tab_test)
    P_mm_test = check_prob_matrix(P_mm_test)
    y_test = as_labels(y_test)
    fractions = [float(f) for f in fractions]

    calibration = fit_conformal(P_tab_cal, y_cal, config)
    n = P_tab_test.shape[0]
    if policy == "uncertainty":
        order = uncertainty_order(P_tab_test, calibration)
    elif policy == "random":
        order = np.random.default_rng(seed).permutation(n)
    else:
        raise ValueError(f"unknown policy {policy!r}")

    fn = metric_fn(metric)
    values = []
    for u in fractions:
        m = math.ceil(u * n)
        mixed = P_tab_test.copy()
        if m > 0:
            acquired = order[:m]
            mixed[acquired] = P_mm_test[acquired]
        values.append(float(fn(y_test, mixed)))
    return AcquisitionCurve(
        policy=policy,
        fractions=fractions,
        values=values,
        metric=metric if isinstance(metric, str) else "custom",
    )


def acquisition_curve_from_predictors(
    tabular_predictor,
    multimodal_predictor,
    test_data,
    y_test,
    calibration_data,
    y_cal,
    config: ConformalConfig,
    fractions,
    policy: str = "uncertainty",
    seed: int = 0,
    metric: str = "accuracy",
) -> AcquisitionCurve:
    """Predictor-level variant: both predictors expose predict_proba(data)."""
    return acquisition_curve(
        tabular_predictor.predict_proba(test_data),
        multimodal_predictor.predict_proba(test_data),
        y_test,
        tabular_predictor.predict_proba(calibration_data),
        y_cal,
        config,
        fractions,
        policy=policy,
        seed=seed,
        metric=metric,
    )
