"""Patient-grouped, stratified cross-validation splits.

Groups are assigned greedily, largest first, to the fold with the largest
per-class deficit, which keeps folds group-disjoint while approximating
the global label distribution. All index arrays come out sorted, so a
given seed reproduces byte-identical splits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateSplit, InvalidK
from .validation import as_labels


@dataclass
class Fold:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray


@dataclass
class FoldSplit:
    folds: list[Fold]
    seed: int = 0

    @property
    def k(self) -> int:
        return len(self.folds)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "folds": [
                {
                    "train": f.train.tolist(),
                    "valid": f.valid.tolist(),
                    "test": f.test.tolist(),
                }
                for f in self.folds
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FoldSplit":
        folds = [
            Fold(
                train=np.asarray(f["train"], dtype=np.int64),
                valid=np.asarray(f["valid"], dtype=np.int64),
                test=np.asarray(f["test"], dtype=np.int64),
            )
            for f in d["folds"]
        ]
        return cls(folds=folds, seed=int(d["seed"]))


def _group_table(y: np.ndarray, groups: np.ndarray, n_classes: int):
    """Per-group member indices and class-count vectors, first-seen order."""
    order: dict = {}
    for i, g in enumerate(groups):
        order.setdefault(g, []).append(i)
    names = list(order.keys())
    members = [np.asarray(order[g], dtype=np.int64) for g in names]
    counts = np.zeros((len(names), n_classes))
    for k, rows in enumerate(members):
        np.add.at(counts[k], y[rows], 1.0)
    return members, counts


def grouped_stratified_kfold(y, groups, k: int, seed: int = 0) -> FoldSplit:
    """Split into k group-disjoint, approximately stratified test folds."""
    y = as_labels(y)
    groups = np.asarray(groups)
    n_classes = int(y.max()) + 1
    members, counts = _group_table(y, groups, n_classes)
    if k < 2 or k > len(members):
        raise InvalidK(f"k must be in [2, {len(members)}], got {k}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(members))
    sizes = np.array([len(members[i]) for i in perm])
    visit = perm[np.argsort(-sizes, kind="stable")]

    target = counts.sum(axis=0) / k
    fold_counts = np.zeros((k, n_classes))
    fold_sizes = np.zeros(k)
    assignment = np.empty(len(members), dtype=np.int64)
    for g in visit:
        deficit = (target - fold_counts) @ counts[g]
        # largest weighted deficit wins; ties go to the smaller, then lower, fold
        best = min(range(k), key=lambda f: (-deficit[f], fold_sizes[f], f))
        assignment[g] = best
        fold_counts[best] += counts[g]
        fold_sizes[best] += len(members[g])

    folds = []
    for f in range(k):
        test = np.sort(np.concatenate([members[g] for g in range(len(members)) if assignment[g] == f]))
        train = np.sort(np.concatenate([members[g] for g in range(len(members)) if assignment[g] != f]))
        folds.append(Fold(train=train, valid=np.empty(0, dtype=np.int64), test=test))
    return FoldSplit(folds=folds, seed=seed)


def split_train_valid(train_indices, y, groups, fraction: float, seed: int = 0):
    """Carve a group-disjoint, stratified validation set out of a train split.

    The validation size is round(fraction * n_train) up to group
    granularity. Raises DegenerateSplit when the carve would empty the
    train side, drop a class from it, or cannot produce a non-empty
    validation set.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    train_indices = np.asarray(train_indices, dtype=np.int64)
    y = as_labels(y)
    groups = np.asarray(groups)
    y_local = y[train_indices]
    n_classes = int(y.max()) + 1
    members, counts = _group_table(y_local, groups[train_indices], n_classes)

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(members))
    sizes = np.array([len(members[i]) for i in perm])
    visit = perm[np.argsort(-sizes, kind="stable")]

    n = len(train_indices)
    target_total = int(round(fraction * n))
    target = fraction * counts.sum(axis=0)
    valid_counts = np.zeros(n_classes)
    valid_size = 0
    in_valid = np.zeros(len(members), dtype=bool)
    for g in visit:
        size = len(members[g])
        deficit = float((target - valid_counts) @ counts[g])
        closer = abs(valid_size + size - target_total) <= abs(valid_size - target_total)
        if deficit > 0 and closer and valid_size < target_total:
            in_valid[g] = True
            valid_counts += counts[g]
            valid_size += size

    if valid_size == 0:
        raise DegenerateSplit("no group fits the requested validation fraction")
    remaining = counts[~in_valid].sum(axis=0) if (~in_valid).any() else np.zeros(n_classes)
    present = counts.sum(axis=0) > 0
    if not (~in_valid).any() or (remaining[present] == 0).any():
        raise DegenerateSplit("carve would drop a class or all groups from train")

    valid_local = np.sort(np.concatenate([members[g] for g in np.flatnonzero(in_valid)]))
    train_local = np.sort(np.concatenate([members[g] for g in np.flatnonzero(~in_valid)]))
    return train_indices[train_local], train_indices[valid_local]


def make_folds(y, groups, k: int, valid_fraction: float, seed: int = 0) -> FoldSplit:
    """Grouped stratified k-fold with a validation carve in every fold."""
    split = grouped_stratified_kfold(y, groups, k, seed)
    for f, fold in enumerate(split.folds):
        train, valid = split_train_valid(
            fold.train, y, groups, valid_fraction, seed=seed * 1000 + 7 * f + 1
        )
        fold.train = train
        fold.valid = valid
    return split


def check_fold_invariants(split: FoldSplit, y, groups) -> None:
    """Raise if the split violates partition or group-disjointness rules."""
    groups = np.asarray(groups)
    n = len(groups)
    all_test = np.concatenate([f.test for f in split.folds])
    if len(all_test) != n or not np.array_equal(np.sort(all_test), np.arange(n)):
        raise DegenerateSplit("test sets do not partition the samples")
    for fold in split.folds:
        fit_side = np.concatenate([fold.train, fold.valid])
        if np.intersect1d(fit_side, fold.test).size:
            raise DegenerateSplit("train/valid overlaps test")
        if set(groups[fit_side]) & set(groups[fold.test]):
            raise DegenerateSplit("a group appears on both sides of a fold")
        if np.intersect1d(fold.train, fold.valid).size:
            raise DegenerateSplit("train overlaps valid")
