"""Evaluation metrics and model-agnostic permutation importance.

All metrics are computed from first principles (no sklearn.metrics) so the
test suite can check them against independent brute-force oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import LengthMismatch, UndefinedMetric
from .validation import as_labels, check_prob_matrix

PROB_EPS = 1e-12


def log_loss(P, y) -> float:
    """Mean negative log-likelihood of the true labels under P (clipped)."""
    P = check_prob_matrix(P)
    y = as_labels(y)
    if len(y) != P.shape[0]:
        raise LengthMismatch(f"{P.shape[0]} prediction rows vs {len(y)} labels")
    picked = np.clip(P[np.arange(len(y)), y], PROB_EPS, None)
    return float(np.mean(-np.log(picked)))


def confusion_matrix(y_pred, y_true, n_classes: int) -> np.ndarray:
    """Counts M[t, p] of samples with truth t predicted as p."""
    y_pred = as_labels(y_pred, "y_pred")
    y_true = as_labels(y_true, "y_true")
    if len(y_pred) != len(y_true):
        raise LengthMismatch(f"{len(y_pred)} predictions vs {len(y_true)} labels")
    M = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(M, (y_true, y_pred), 1)
    return M


def confusion_metrics(y_pred, y_true, n_classes: int | None = None) -> dict[str, float]:
    """Accuracy, balanced accuracy, macro F1, and MCC from hard labels.

    Balanced accuracy averages recall over classes present in the truth.
    Macro F1 averages per-class F1; a class absent from the truth counts
    as 0 if it was predicted and is skipped if it never appears at all.
    MCC uses the multiclass covariance form, with 0 for a zero denominator.
    """
    y_pred = as_labels(y_pred, "y_pred")
    y_true = as_labels(y_true, "y_true")
    if n_classes is None:
        n_classes = int(max(y_pred.max(initial=0), y_true.max(initial=0))) + 1
    M = confusion_matrix(y_pred, y_true, n_classes)
    n = M.sum()

    true_counts = M.sum(axis=1)
    pred_counts = M.sum(axis=0)
    diag = np.diag(M)

    accuracy = float(diag.sum() / n)

    present = true_counts > 0
    recalls = diag[present] / true_counts[present]
    balanced_accuracy = float(recalls.mean())

    f1_terms = []
    for c in range(n_classes):
        if true_counts[c] == 0 and pred_counts[c] == 0:
            continue
        denom = true_counts[c] + pred_counts[c]
        f1_terms.append(2.0 * diag[c] / denom if denom > 0 else 0.0)
    macro_f1 = float(np.mean(f1_terms))

    s = float(n)
    cov = float(diag.sum()) * s - float(pred_counts @ true_counts)
    denom_sq = (s * s - float(pred_counts @ pred_counts)) * (s * s - float(true_counts @ true_counts))
    mcc = 0.0 if denom_sq <= 0 else float(cov / np.sqrt(denom_sq))

    return {
        "accuracy": accuracy,
        "balanced_accuracy": balanced_accuracy,
        "macro_f1": macro_f1,
        "mcc": mcc,
    }


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _binary_auroc(scores: np.ndarray, positive: np.ndarray) -> float:
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUROC needs both a positive and a negative sample")
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[positive].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auroc(scores, y_true, n_classes: int | None = None) -> float:
    """Area under the ROC curve, equal to the Mann-Whitney statistic.

    1-D ``scores`` are treated as binary scores for class 1. A matrix is
    treated as per-class probabilities and scored one-vs-rest, macro
    averaged over classes for which both positives and negatives exist.
    """
    y_true = as_labels(y_true, "y_true")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        if len(scores) != len(y_true):
            raise LengthMismatch(f"{len(scores)} scores vs {len(y_true)} labels")
        return _binary_auroc(scores, y_true == 1)
    P = check_prob_matrix(scores, name="scores")
    if P.shape[0] != len(y_true):
        raise LengthMismatch(f"{P.shape[0]} score rows vs {len(y_true)} labels")
    if n_classes is None:
        n_classes = P.shape[1]
    per_class = []
    for c in range(n_classes):
        positive = y_true == c
        if positive.any() and (~positive).any():
            per_class.append(_binary_auroc(P[:, c], positive))
    if not per_class:
        raise UndefinedMetric("no class has both positive and negative samples")
    return float(np.mean(per_class))


def metric_fn(name: str):
    """Resolve a metric name to ``fn(y_true, P) -> float`` (higher is better)."""
    if callable(name):
        return name
    if name == "accuracy":
        return lambda y, P: confusion_metrics(P.argmax(axis=1), y, P.shape[1])["accuracy"]
    if name == "balanced_accuracy":
        return lambda y, P: confusion_metrics(P.argmax(axis=1), y, P.shape[1])["balanced_accuracy"]
    if name == "macro_f1":
        return lambda y, P: confusion_metrics(P.argmax(axis=1), y, P.shape[1])["macro_f1"]
    if name == "mcc":
        return lambda y, P: confusion_metrics(P.argmax(axis=1), y, P.shape[1])["mcc"]
    if name == "auroc":
        return lambda y, P: auroc(P, y)
    if name == "neg_log_loss":
        return lambda y, P: -log_loss(P, y)
    raise UndefinedMetric(f"unknown metric {name!r}")


@dataclass
class PermutationImportance:
    """Mean metric drop per shuffled feature (or whole modality block)."""

    baseline: float
    metric: str
    repeats: int
    seed: int
    feature_drops: dict[str, np.ndarray] = field(default_factory=dict)
    block_drops: dict[str, float] = field(default_factory=dict)


def permutation_importance(
    predict_fn,
    blocks: dict[str, np.ndarray],
    y,
    metric="accuracy",
    repeats: int = 5,
    seed: int = 0,
    per_feature: bool = True,
    feature_blocks=None,
) -> PermutationImportance:
    """Importance by shuffling columns (or whole blocks) across rows.

    ``predict_fn`` maps ``{block name: matrix}`` to a probability matrix;
    the reported drop is baseline metric minus the metric after shuffling,
    averaged over ``repeats`` seeded permutations. Per-feature drops are
    computed for ``feature_blocks`` (all blocks when None) if
    ``per_feature`` is set; whole-block drops are always computed.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    y = as_labels(y)
    fn = metric_fn(metric)
    blocks = {k: np.asarray(v, dtype=np.float64) for k, v in blocks.items()}
    baseline = fn(y, predict_fn(blocks))

    rng = np.random.default_rng(seed)
    n = len(y)
    perms = [rng.permutation(n) for _ in range(repeats)]

    result = PermutationImportance(
        baseline=baseline,
        metric=metric if isinstance(metric, str) else getattr(metric, "__name__", "custom"),
        repeats=repeats,
        seed=seed,
    )

    for name, X in blocks.items():
        featurewise = per_feature and (feature_blocks is None or name in feature_blocks)
        drops = np.zeros(X.shape[1], dtype=np.float64)
        block_drop = 0.0
        for perm in perms:
            shuffled = dict(blocks)
            shuffled[name] = X[perm]
            block_drop += baseline - fn(y, predict_fn(shuffled))
            if featurewise:
                for j in range(X.shape[1]):
                    col = X.copy()
                    col[:, j] = X[perm, j]
                    shuffled_col = dict(blocks)
                    shuffled_col[name] = col
                    drops[j] += baseline - fn(y, predict_fn(shuffled_col))
        result.block_drops[name] = block_drop / repeats
        if featurewise:
            result.feature_drops[name] = drops / repeats
    return result


@dataclass
class MetricReport:
    """Per-fold metric values with mean and standard deviation."""

    values: dict[str, list[float]] = field(default_factory=dict)

    def add(self, fold_metrics: dict[str, float]) -> None:
        for key, value in fold_metrics.items():
            self.values.setdefault(key, []).append(float(value))

    def mean(self, key: str) -> float:
        return float(np.mean(self.values[key]))

    def std(self, key: str) -> float:
        return float(np.std(self.values[key]))

    def summary(self) -> dict[str, dict[str, float | list[float]]]:
        return {
            key: {"per_fold": vals, "mean": float(np.mean(vals)), "std": float(np.std(vals))}
            for key, vals in self.values.items()
        }


def evaluate_probabilities(P, y, task: str = "multiclass") -> dict[str, float]:
    """The standard metric row for one model on one fold."""
    P = check_prob_matrix(P)
    y = as_labels(y)
    out = confusion_metrics(P.argmax(axis=1), y, P.shape[1])
    try:
        out["auroc"] = auroc(P, y)
    except UndefinedMetric:
        out["auroc"] = float("nan")
    out["log_loss"] = log_loss(P, y)
    return out
