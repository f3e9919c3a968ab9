"""Wiring between search configurations and fitted predictors.

Each strategy (tabular, imaging, late, early, joint) gets a default
search space and a config -> fitted-model constructor. Fit seeds derive
from a stable hash of (base seed, strategy, config, fold), so identical
configs always refit identically and the in-process fit cache is exact.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .data import MultimodalDataset
from .exceptions import ConfigError
from .fusion import (
    EmbeddingMember,
    LateFusionModel,
    Modalities,
    TabularMember,
    fit_early_fusion,
    fit_joint_fusion,
    fit_late_fusion,
)
from .metrics import log_loss
from .nn import TrainConfig
from .search import (
    Categorical,
    FloatRange,
    IntRange,
    Leaderboard,
    MultistrategyEnsemble,
    ParamSpec,
    SearchSpace,
    StrategyEnsemble,
    config_key,
    optimize_simplex_weights,
    run_search,
    weight_fit_audit,
)
from .splits import FoldSplit
from .tabular import TabularPipeline, make_classifier

STRATEGIES = ("tabular", "imaging", "late", "early", "joint")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary string-able parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def _classifier_params_spaces(preset: str):
    fast = preset == "fast"
    return [
        ParamSpec("lr_l2", FloatRange(1e-4, 1.0, log=True), lambda c: c["classifier"] == "logistic_regression"),
        ParamSpec("lr_learning_rate", FloatRange(0.05, 1.0, log=True), lambda c: c["classifier"] == "logistic_regression"),
        ParamSpec("lr_epochs", IntRange(60, 150) if fast else IntRange(100, 400), lambda c: c["classifier"] == "logistic_regression"),
        ParamSpec("rf_n_trees", IntRange(10, 30) if fast else IntRange(20, 80), lambda c: c["classifier"] == "random_forest"),
        ParamSpec("rf_max_depth", IntRange(2, 8) if fast else IntRange(2, 16), lambda c: c["classifier"] == "random_forest"),
        ParamSpec("rf_min_leaf", IntRange(1, 8), lambda c: c["classifier"] == "random_forest"),
        ParamSpec("gb_n_rounds", IntRange(10, 30) if fast else IntRange(20, 80), lambda c: c["classifier"] == "gradient_boosting"),
        ParamSpec("gb_learning_rate", FloatRange(0.03, 0.3, log=True), lambda c: c["classifier"] == "gradient_boosting"),
        ParamSpec("gb_max_depth", IntRange(1, 4), lambda c: c["classifier"] == "gradient_boosting"),
        ParamSpec("mlp_hidden", Categorical(((16,), (32,)) if fast else ((16,), (32,), (64,), (32, 16))), lambda c: c["classifier"] == "mlp"),
        ParamSpec("mlp_activation", Categorical(("relu", "tanh")), lambda c: c["classifier"] == "mlp"),
        ParamSpec("mlp_learning_rate", FloatRange(1e-3, 3e-2, log=True), lambda c: c["classifier"] == "mlp"),
        ParamSpec("mlp_epochs", IntRange(60, 150) if fast else IntRange(150, 400), lambda c: c["classifier"] == "mlp"),
        ParamSpec("mlp_weight_decay", FloatRange(1e-6, 1e-2, log=True), lambda c: c["classifier"] == "mlp"),
    ]


def tabular_space(dataset: MultimodalDataset, preset: str = "default") -> SearchSpace:
    p = dataset.X_tab.shape[1]
    params = [
        ParamSpec("imputer", Categorical(("mean", "most_frequent", "constant_zero"))),
        ParamSpec("scaler", Categorical(("none", "standard", "minmax"))),
        ParamSpec("reducer", Categorical(("none", "pca"))),
        ParamSpec("pca_components", IntRange(1, max(1, min(p, 16))), lambda c: c["reducer"] == "pca"),
        ParamSpec(
            "classifier",
            Categorical(("logistic_regression", "random_forest", "gradient_boosting", "mlp")),
        ),
        *_classifier_params_spaces(preset),
    ]
    return SearchSpace("tabular", params)


def imaging_space(dataset: MultimodalDataset, preset: str = "default") -> SearchSpace:
    names = tuple(sorted(dataset.embeddings))
    params = [
        ParamSpec("source", Categorical(names)),
        ParamSpec("classifier", Categorical(("logistic_regression", "mlp"))),
        *[
            s
            for s in _classifier_params_spaces(preset)
            if s.name.startswith(("lr_", "mlp_"))
        ],
    ]
    return SearchSpace("imaging", params)


def _head_space(strategy: str, preset: str) -> list[ParamSpec]:
    fast = preset == "fast"
    return [
        ParamSpec("hidden", Categorical(((8,), (16,)) if fast else ((32,), (64,), (64, 32)))),
        ParamSpec("activation", Categorical(("relu", "tanh"))),
        ParamSpec("learning_rate", FloatRange(1e-3, 3e-2, log=True)),
        ParamSpec("epochs", IntRange(80, 200) if fast else IntRange(150, 500)),
        ParamSpec("weight_decay", FloatRange(1e-6, 1e-2, log=True)),
    ]


def early_space(preset: str = "default") -> SearchSpace:
    return SearchSpace("early", _head_space("early", preset))


def joint_space(preset: str = "default") -> SearchSpace:
    fast = preset == "fast"
    params = [
        ParamSpec("tab_branch", Categorical(((8,),) if fast else ((8,), (16,), (16, 8)))),
        ParamSpec("emb_branch", Categorical(((16,),) if fast else ((16,), (32,)))),
        ParamSpec("head_hidden", Categorical(((16,),) if fast else ((16,), (32,)))),
        ParamSpec("activation", Categorical(("relu", "tanh"))),
        ParamSpec("learning_rate", FloatRange(1e-3, 3e-2, log=True)),
        ParamSpec("epochs", IntRange(80, 200) if fast else IntRange(150, 500)),
        ParamSpec("weight_decay", FloatRange(1e-6, 1e-2, log=True)),
    ]
    return SearchSpace("joint", params)


def late_space(n_tabular: int, n_imaging: int) -> SearchSpace:
    """Pairs of ranks into the unimodal leaderboards' top configs."""
    return SearchSpace(
        "late",
        [
            ParamSpec("tab_rank", IntRange(0, max(0, n_tabular - 1))),
            ParamSpec("img_rank", IntRange(0, max(0, n_imaging - 1))),
        ],
    )


def default_spaces(dataset: MultimodalDataset, preset: str = "default") -> dict[str, SearchSpace]:
    """Spaces for every strategy except late, which needs leaderboards first."""
    return {
        "tabular": tabular_space(dataset, preset),
        "imaging": imaging_space(dataset, preset),
        "early": early_space(preset),
        "joint": joint_space(preset),
    }


def _prefixed(config: dict, prefix: str) -> dict:
    return {k[len(prefix) :]: v for k, v in config.items() if k.startswith(prefix)}


@dataclass
class BuildContext:
    """Shared state of one ensemble build: data, folds, cache, knobs."""

    dataset: MultimodalDataset
    folds: FoldSplit
    seed: int = 0
    jobs: int = 1
    weight_budget: int = 64
    cache: dict = field(default_factory=dict)
    late_pool: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return self.dataset.n_classes

    def modalities(self, idx) -> Modalities:
        return Modalities.from_dataset(self.dataset, idx)

    def fit(self, strategy: str, config: dict, fold: int):
        key = (strategy, config_key(config), fold)
        if key not in self.cache:
            self.cache[key] = fit_strategy_model(strategy, config, self, fold)
        return self.cache[key]

    def fit_many(self, items):
        """Fit (strategy, config, fold) triples, in parallel when jobs > 1."""
        missing = [
            (strategy, config, fold)
            for strategy, config, fold in items
            if (strategy, config_key(config), fold) not in self.cache
        ]
        if missing:
            if self.jobs > 1:
                fitted = Parallel(n_jobs=self.jobs)(
                    delayed(fit_strategy_model)(strategy, config, self, fold)
                    for strategy, config, fold in missing
                )
            else:
                fitted = [
                    fit_strategy_model(strategy, config, self, fold)
                    for strategy, config, fold in missing
                ]
            for (strategy, config, fold), model in zip(missing, fitted):
                self.cache[(strategy, config_key(config), fold)] = model
        return [self.fit(strategy, config, fold) for strategy, config, fold in items]


def fit_strategy_model(strategy: str, config: dict, ctx: BuildContext, fold: int):
    """Fit one strategy config on one fold's training rows."""
    dataset = ctx.dataset
    fold_split = ctx.folds.folds[fold]
    train, valid = fold_split.train, fold_split.valid
    y = dataset.y
    C = ctx.n_classes
    fit_seed = derive_seed(ctx.seed, strategy, config_key(config), fold)

    if strategy == "tabular":
        classifier = config["classifier"]
        prefix = {
            "logistic_regression": "lr_",
            "random_forest": "rf_",
            "gradient_boosting": "gb_",
            "mlp": "mlp_",
        }[classifier]
        params = _prefixed(config, prefix)
        pipeline = TabularPipeline(
            imputer=config["imputer"],
            scaler=config["scaler"],
            reducer=config["reducer"],
            pca_components=config.get("pca_components"),
            classifier=classifier,
            classifier_params=params,
            seed=fit_seed,
            n_classes=C,
        ).fit(dataset.X_tab[train], y[train])
        return TabularMember(pipeline)

    if strategy == "imaging":
        prefix = "lr_" if config["classifier"] == "logistic_regression" else "mlp_"
        params = _prefixed(config, prefix)
        model = make_classifier(config["classifier"], params, fit_seed, C)
        model.fit(dataset.embeddings[config["source"]][train], y[train])
        return EmbeddingMember(config["source"], model)

    if strategy == "late":
        if not ctx.late_pool.get("tabular") or not ctx.late_pool.get("imaging"):
            raise ConfigError("late fusion requires successful unimodal trials")
        tab_cfg = ctx.late_pool["tabular"][config["tab_rank"]]
        img_cfg = ctx.late_pool["imaging"][config["img_rank"]]
        members = ctx.fit_many([("tabular", tab_cfg, fold), ("imaging", img_cfg, fold)])
        mod_valid = ctx.modalities(valid)
        valid_probs = [m.predict_proba(mod_valid) for m in members]
        weights = fit_late_fusion(
            valid_probs, y[valid], budget=ctx.weight_budget, seed=fit_seed
        )
        model = LateFusionModel(members, weights)
        model.audit_ = weight_fit_audit(weights, valid_probs, y[valid])
        return model

    mod_train = ctx.modalities(train)
    train_config = TrainConfig(
        learning_rate=config["learning_rate"],
        epochs=config["epochs"],
        weight_decay=config["weight_decay"],
        seed=fit_seed,
        optimizer="adam",
    )
    if strategy == "early":
        return fit_early_fusion(
            mod_train,
            y[train],
            hidden=tuple(config["hidden"]),
            config=train_config,
            activation=config["activation"],
            n_classes=C,
        )
    if strategy == "joint":
        n_emb = len(dataset.embeddings)
        branch_hidden = [tuple(config["tab_branch"])] + [tuple(config["emb_branch"])] * n_emb
        return fit_joint_fusion(
            mod_train,
            y[train],
            branch_hidden=branch_hidden,
            head_hidden=tuple(config["head_hidden"]),
            config=train_config,
            activation=config["activation"],
            n_classes=C,
        )
    raise ConfigError(f"unknown strategy {strategy!r}")


def make_evaluator(strategy: str, ctx: BuildContext):
    """Score a config by mean validation log-loss across folds."""

    def evaluate(config: dict) -> list[float]:
        ctx.fit_many([(strategy, config, f) for f in range(ctx.folds.k)])
        scores = []
        for f in range(ctx.folds.k):
            model = ctx.fit(strategy, config, f)
            valid = ctx.folds.folds[f].valid
            P = model.predict_proba(ctx.modalities(valid))
            scores.append(log_loss(P, ctx.dataset.y[valid]))
        return scores

    return evaluate


def _pooled_valid(ctx: BuildContext, predict, folds=None):
    """Stack validation predictions (and labels) across folds."""
    folds = range(ctx.folds.k) if folds is None else folds
    probs, labels = [], []
    for f in folds:
        valid = ctx.folds.folds[f].valid
        probs.append(predict(f, ctx.modalities(valid)))
        labels.append(ctx.dataset.y[valid])
    return np.vstack(probs), np.concatenate(labels)


def build_strategy_ensemble(
    strategy: str, leaderboard: Leaderboard, ctx: BuildContext, k_best: int
) -> StrategyEnsemble | None:
    """Refit the top-K configs per fold and weight them on pooled valid rows."""
    configs = leaderboard.top_configs(k_best)
    if not configs:
        return None
    ctx.fit_many(
        [(strategy, cfg, f) for cfg in configs for f in range(ctx.folds.k)]
    )
    fold_members = [
        [ctx.fit(strategy, cfg, f) for cfg in configs] for f in range(ctx.folds.k)
    ]
    member_probs = []
    y_pooled = None
    for i in range(len(configs)):
        P, y_pooled = _pooled_valid(ctx, lambda f, mod: fold_members[f][i].predict_proba(mod))
        member_probs.append(P)
    weights = optimize_simplex_weights(
        member_probs, y_pooled, budget=ctx.weight_budget,
        seed=derive_seed(ctx.seed, strategy, "ensemble-weights"),
    )
    audit = weight_fit_audit(weights, member_probs, y_pooled)
    return StrategyEnsemble(strategy, configs, weights, fold_members, audit=audit)


def build_multistrategy_ensemble(
    dataset: MultimodalDataset,
    folds: FoldSplit,
    budgets: dict[str, int],
    k_best: int = 3,
    seed: int = 0,
    jobs: int = 1,
    spaces: dict[str, SearchSpace] | None = None,
    sampler: str = "surrogate",
    weight_budget: int = 64,
    late_pool_size: int = 5,
    n_warmup: int = 10,
):
    """Search every strategy, ensemble the top configs, fit outer weights.

    Returns ``(ensemble, leaderboards, trials)`` where trials maps each
    strategy to its full trial list (including failures). A strategy with
    no successful trial is dropped from the outer simplex and recorded.
    """
    ctx = BuildContext(dataset=dataset, folds=folds, seed=seed, jobs=jobs, weight_budget=weight_budget)
    spaces = dict(spaces) if spaces else default_spaces(dataset)
    leaderboards: dict[str, Leaderboard] = {}
    trials: dict[str, list] = {}

    for strategy in ("tabular", "imaging"):
        lb, tr = run_search(
            spaces[strategy],
            make_evaluator(strategy, ctx),
            budgets[strategy],
            seed=derive_seed(seed, strategy, "search"),
            sampler=sampler,
            n_warmup=n_warmup,
        )
        leaderboards[strategy] = lb
        trials[strategy] = tr
        ctx.late_pool[strategy] = lb.top_configs(late_pool_size)

    if "late" not in spaces:
        spaces["late"] = late_space(
            len(ctx.late_pool.get("tabular", [])) or 1,
            len(ctx.late_pool.get("imaging", [])) or 1,
        )
    for strategy in ("late", "early", "joint"):
        lb, tr = run_search(
            spaces[strategy],
            make_evaluator(strategy, ctx),
            budgets[strategy],
            seed=derive_seed(seed, strategy, "search"),
            sampler=sampler,
            n_warmup=n_warmup,
        )
        leaderboards[strategy] = lb
        trials[strategy] = tr

    ensembles: dict[str, StrategyEnsemble] = {}
    dropped: list[str] = []
    for strategy in STRATEGIES:
        built = build_strategy_ensemble(strategy, leaderboards[strategy], ctx, k_best)
        if built is None:
            dropped.append(strategy)
        else:
            ensembles[strategy] = built

    if not ensembles:
        raise ConfigError("every strategy failed; nothing to ensemble")

    order = [s for s in STRATEGIES if s in ensembles]
    strategy_probs = []
    y_pooled = None
    for name in order:
        P, y_pooled = _pooled_valid(ctx, lambda f, mod, n=name: ensembles[n].predict_proba(mod, f))
        strategy_probs.append(P)
    outer = optimize_simplex_weights(
        strategy_probs, y_pooled, budget=weight_budget,
        seed=derive_seed(seed, "outer-weights"),
    )
    audit = weight_fit_audit(outer, strategy_probs, y_pooled)
    ensemble = MultistrategyEnsemble(
        strategies=ensembles,
        order=order,
        outer_weights=outer,
        dropped=dropped,
        audit=audit,
    )
    return ensemble, leaderboards, trials
