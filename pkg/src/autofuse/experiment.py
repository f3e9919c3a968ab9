"""End-to-end experiment driver and the post-hoc audit helpers.

``run_experiment`` executes folds x strategies x search, builds the
multistrategy ensemble, and writes a fully deterministic output
directory:

    report.json    config echo, metric summaries, weights, audits
    metrics.csv    one row per (model, seed, fold)
    trials.csv     every search trial, including failures
    curves.csv     acquisition curves (mean over folds, per policy)
    folds.json     the exact split indices per seed
    schema.json    the fitted tabular schema
    models/        serialized ensembles, one JSON per seed

Every number in metrics.csv can be recomputed from the serialized models
and the dataset; ``recompute_metrics`` does exactly that.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .conformal import ConformalConfig, acquisition_curve, fit_conformal, predict_set_matrix
from .data import TabularSchema, load_dataset, load_manifest
from .exceptions import ConfigError
from .fusion import Modalities
from .metrics import MetricReport, evaluate_probabilities
from .search import MultistrategyEnsemble
from .splits import FoldSplit, make_folds
from .strategies import STRATEGIES, build_multistrategy_ensemble, default_spaces

_METRIC_COLUMNS = ("accuracy", "balanced_accuracy", "macro_f1", "mcc", "auroc", "log_loss")
_DEFAULT_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(11))


def _g(value: float) -> str:
    return format(float(value), ".10g")


@dataclass
class ExperimentConfig:
    manifest: str
    k: int = 5
    valid_fraction: float = 0.2
    seeds: tuple = (0,)
    budgets: dict = field(
        default_factory=lambda: {"tabular": 10, "imaging": 10, "late": 5, "early": 10, "joint": 10}
    )
    ensemble_k: int = 3
    sampler: str = "surrogate"
    space: str = "default"
    n_warmup: int = 10
    weight_budget: int = 64
    conformal: ConformalConfig = field(default_factory=ConformalConfig)
    fractions: tuple = _DEFAULT_FRACTIONS
    policies: tuple = ("uncertainty", "random")
    acquisition_metric: str = "accuracy"
    output: str = "run"
    jobs: int = 1
    explain_samples: int = 5

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if not 0.0 < self.valid_fraction < 1.0:
            raise ConfigError("valid_fraction must be in (0, 1)")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for strategy in STRATEGIES:
            if self.budgets.get(strategy, 0) < 1:
                raise ConfigError(f"budget for {strategy!r} must be >= 1")
        if self.ensemble_k < 1:
            raise ConfigError("ensemble_k must be >= 1")
        if self.sampler not in ("surrogate", "uniform"):
            raise ConfigError("sampler must be 'surrogate' or 'uniform'")
        if self.space not in ("default", "fast"):
            raise ConfigError("space must be 'default' or 'fast'")

    @classmethod
    def from_json(cls, path: str, overrides: dict | None = None) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict) or "manifest" not in raw:
            raise ConfigError("experiment config must be a JSON object with a 'manifest' key")
        raw = dict(raw)
        for key, value in (overrides or {}).items():
            if value is not None:
                raw[key] = value
        if "seed" in raw:  # single-seed shorthand / CLI override
            raw["seeds"] = [raw.pop("seed")]
        conformal = raw.pop("conformal", {})
        acquisition = raw.pop("acquisition", {})
        base = os.path.dirname(os.path.abspath(path))
        manifest = raw.pop("manifest")
        if not os.path.isabs(manifest):
            manifest = os.path.join(base, manifest)
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        kwargs["manifest"] = manifest
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
        if "budgets" in kwargs:
            kwargs["budgets"] = {k: int(v) for k, v in kwargs["budgets"].items()}
        kwargs["conformal"] = ConformalConfig(**conformal) if not isinstance(conformal, ConformalConfig) else conformal
        if acquisition:
            if "fractions" in acquisition:
                kwargs["fractions"] = tuple(float(f) for f in acquisition["fractions"])
            if "policies" in acquisition:
                kwargs["policies"] = tuple(acquisition["policies"])
            if "metric" in acquisition:
                kwargs["acquisition_metric"] = acquisition["metric"]
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest,
            "k": self.k,
            "valid_fraction": self.valid_fraction,
            "seeds": list(self.seeds),
            "budgets": dict(self.budgets),
            "ensemble_k": self.ensemble_k,
            "sampler": self.sampler,
            "space": self.space,
            "n_warmup": self.n_warmup,
            "weight_budget": self.weight_budget,
            "conformal": {
                "alpha": self.conformal.alpha,
                "lam": self.conformal.lam,
                "k_reg": self.conformal.k_reg,
            },
            "acquisition": {
                "fractions": list(self.fractions),
                "policies": list(self.policies),
                "metric": self.acquisition_metric,
            },
            "output": self.output,
            "jobs": self.jobs,
            "explain_samples": self.explain_samples,
        }


@dataclass
class RunReport:
    config: ExperimentConfig
    per_seed: dict = field(default_factory=dict)
    output_dir: str = ""

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "environment": {
                "python": sys.version.split()[0],
                "numpy": np.__version__,
                "autofuse": __version__,
            },
            "seeds": self.per_seed,
        }


def _collect_weight_audits(ensemble: MultistrategyEnsemble) -> list[dict]:
    audits = [{"scope": "outer", **ensemble.audit}]
    for name, strat in ensemble.strategies.items():
        audits.append({"scope": f"strategy:{name}", **strat.audit})
        for f, members in enumerate(strat.fold_members):
            for i, member in enumerate(members):
                audit = getattr(member, "audit_", None)
                if audit:
                    audits.append({"scope": f"late:{name}:fold{f}:member{i}", **audit})
    return audits


def _seed_metrics(ensemble, dataset, folds: FoldSplit):
    """Per-model metric rows on the fold test sets."""
    rows = []
    reports: dict[str, MetricReport] = {}
    models = [*(s for s in STRATEGIES if s in ensemble.strategies), "ensemble"]
    for model in models:
        report = MetricReport()
        for f, fold in enumerate(folds.folds):
            mod_test = Modalities.from_dataset(dataset, fold.test)
            if model == "ensemble":
                P = ensemble.predict_proba(mod_test, f)
            else:
                P = ensemble.strategies[model].predict_proba(mod_test, f)
            row = evaluate_probabilities(P, dataset.y[fold.test], dataset.task)
            report.add(row)
            rows.append((model, f, row))
        reports[model] = report
    return rows, reports


def _seed_conformal(ensemble, dataset, folds: FoldSplit, config: ConformalConfig):
    out = []
    for f, fold in enumerate(folds.folds):
        P_cal = ensemble.predict_proba(Modalities.from_dataset(dataset, fold.valid), f)
        calibration = fit_conformal(P_cal, dataset.y[fold.valid], config)
        P_test = ensemble.predict_proba(Modalities.from_dataset(dataset, fold.test), f)
        sets = predict_set_matrix(P_test, calibration)
        hit = sets[np.arange(len(fold.test)), dataset.y[fold.test]]
        out.append(
            {
                "fold": f,
                "tau": calibration.tau,
                "n_cal": calibration.n_cal,
                "coverage": float(hit.mean()),
                "mean_set_size": float(sets.sum(axis=1).mean()),
            }
        )
    return out


def _seed_acquisition(ensemble, dataset, folds: FoldSplit, cfg: ExperimentConfig, seed: int):
    if "tabular" not in ensemble.strategies:
        return None
    tabular = ensemble.strategies["tabular"]
    curves: dict[str, list[list[float]]] = {p: [] for p in cfg.policies}
    for f, fold in enumerate(folds.folds):
        mod_valid = Modalities.from_dataset(dataset, fold.valid)
        mod_test = Modalities.from_dataset(dataset, fold.test)
        P_tab_cal = tabular.predict_proba(mod_valid, f)
        P_tab_test = tabular.predict_proba(mod_test, f)
        P_mm_test = ensemble.predict_proba(mod_test, f)
        for policy in cfg.policies:
            curve = acquisition_curve(
                P_tab_test,
                P_mm_test,
                dataset.y[fold.test],
                P_tab_cal,
                dataset.y[fold.valid],
                cfg.conformal,
                cfg.fractions,
                policy=policy,
                seed=seed * 100 + f,
                metric=cfg.acquisition_metric,
            )
            curves[policy].append(curve.values)
    return {
        policy: {
            "fractions": list(cfg.fractions),
            "per_fold": per_fold,
            "mean_values": [float(v) for v in np.mean(per_fold, axis=0)],
        }
        for policy, per_fold in curves.items()
    }


def run_experiment(config: ExperimentConfig) -> RunReport:
    manifest = load_manifest(config.manifest)
    dataset, schema = load_dataset(manifest)

    out = config.output
    os.makedirs(out, exist_ok=True)
    os.makedirs(os.path.join(out, "models"), exist_ok=True)
    # flags partial outputs: removed only when the run completes
    marker = os.path.join(out, "_INCOMPLETE")
    with open(marker, "w", encoding="utf-8") as fh:
        fh.write("run in progress or aborted\n")

    report = RunReport(config=config, output_dir=out)
    metrics_rows = []
    trials_rows = []
    curve_rows = []
    folds_record = {}

    for seed in config.seeds:
        folds = make_folds(dataset.y, dataset.groups, config.k, config.valid_fraction, seed)
        folds_record[str(seed)] = folds.to_dict()
        spaces = default_spaces(dataset, preset=config.space)
        ensemble, leaderboards, trials = build_multistrategy_ensemble(
            dataset,
            folds,
            budgets=config.budgets,
            k_best=config.ensemble_k,
            seed=seed,
            jobs=config.jobs,
            spaces=spaces,
            sampler=config.sampler,
            weight_budget=config.weight_budget,
            n_warmup=config.n_warmup,
        )

        rows, reports = _seed_metrics(ensemble, dataset, folds)
        for model, fold, row in rows:
            metrics_rows.append([model, str(seed), str(fold)] + [_g(row[m]) for m in _METRIC_COLUMNS])
        for strategy in STRATEGIES:
            for trial in trials.get(strategy, []):
                trials_rows.append(
                    [
                        str(seed),
                        strategy,
                        str(trial.index),
                        trial.status,
                        _g(trial.score) if trial.status == "ok" else "",
                        ";".join(_g(s) for s in trial.fold_scores),
                        json.dumps(trial.config, sort_keys=True),
                        trial.error,
                    ]
                )

        conformal_diag = _seed_conformal(ensemble, dataset, folds, config.conformal)
        acquisition = _seed_acquisition(ensemble, dataset, folds, config, seed)
        if acquisition:
            for policy, data in acquisition.items():
                for frac, value in zip(data["fractions"], data["mean_values"]):
                    curve_rows.append([str(seed), policy, _g(frac), _g(value)])

        with open(os.path.join(out, "models", f"seed{seed}.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(ensemble.to_dict(), fh, sort_keys=True)
            fh.write("\n")

        report.per_seed[str(seed)] = {
            "metrics": {m: r.summary() for m, r in reports.items()},
            "leaderboards": {s: lb.to_dict() for s, lb in leaderboards.items()},
            "weights": {
                "outer": {name: w for name, w in zip(ensemble.order, ensemble.outer_weights.tolist())},
                "strategies": {
                    name: strat.weights.tolist() for name, strat in ensemble.strategies.items()
                },
            },
            "weight_audits": _collect_weight_audits(ensemble),
            "dropped_strategies": ensemble.dropped,
            "conformal": {
                "alpha": config.conformal.alpha,
                "lam": config.conformal.lam,
                "k_reg": config.conformal.k_reg,
                "per_fold": conformal_diag,
            },
            "acquisition": acquisition,
        }

    _write_rows(
        os.path.join(out, "metrics.csv"),
        ["model", "seed", "fold", *_METRIC_COLUMNS],
        metrics_rows,
    )
    _write_rows(
        os.path.join(out, "trials.csv"),
        ["seed", "strategy", "trial", "status", "score", "fold_scores", "config", "error"],
        trials_rows,
    )
    _write_rows(os.path.join(out, "curves.csv"), ["seed", "policy", "fraction", "metric"], curve_rows)
    with open(os.path.join(out, "folds.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(folds_record, fh, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out, "schema.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(schema.to_dict(), fh, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True)
        fh.write("\n")
    os.remove(marker)
    return report


def _write_rows(path: str, header: list[str], rows) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buffer.getvalue())


@dataclass
class LoadedRun:
    config: ExperimentConfig
    dataset: object
    schema: TabularSchema
    folds: dict[str, FoldSplit]
    ensembles: dict[str, MultistrategyEnsemble]
    report: dict
    run_dir: str


def load_run(run_dir: str, manifest_path: str | None = None) -> LoadedRun:
    """Reload a run directory: config, dataset, folds, and fitted models."""
    if os.path.exists(os.path.join(run_dir, "_INCOMPLETE")):
        raise ConfigError(f"{run_dir} holds partial outputs from an aborted run")
    with open(os.path.join(run_dir, "report.json"), encoding="utf-8") as fh:
        report = json.load(fh)
    raw_config = report["config"]
    conformal = ConformalConfig(**raw_config.pop("conformal"))
    acquisition = raw_config.pop("acquisition")
    config = ExperimentConfig(
        **{
            **raw_config,
            "seeds": tuple(raw_config["seeds"]),
            "conformal": conformal,
            "fractions": tuple(acquisition["fractions"]),
            "policies": tuple(acquisition["policies"]),
            "acquisition_metric": acquisition["metric"],
        }
    )
    manifest = load_manifest(manifest_path or config.manifest)
    with open(os.path.join(run_dir, "schema.json"), encoding="utf-8") as fh:
        schema = TabularSchema.from_dict(json.load(fh))
    dataset, _ = load_dataset(manifest, schema)
    with open(os.path.join(run_dir, "folds.json"), encoding="utf-8") as fh:
        folds = {s: FoldSplit.from_dict(d) for s, d in json.load(fh).items()}
    ensembles = {}
    for seed in config.seeds:
        path = os.path.join(run_dir, "models", f"seed{seed}.json")
        with open(path, encoding="utf-8") as fh:
            ensembles[str(seed)] = MultistrategyEnsemble.from_dict(json.load(fh))
    return LoadedRun(
        config=config,
        dataset=dataset,
        schema=schema,
        folds=folds,
        ensembles=ensembles,
        report=report,
        run_dir=run_dir,
    )


def recompute_metrics(run: LoadedRun) -> list[list[str]]:
    """Recompute every metrics.csv row from the serialized models."""
    rows = []
    for seed in run.config.seeds:
        ensemble = run.ensembles[str(seed)]
        folds = run.folds[str(seed)]
        per_model_rows, _ = _seed_metrics(ensemble, run.dataset, folds)
        for model, fold, row in per_model_rows:
            rows.append([model, str(seed), str(fold)] + [_g(row[m]) for m in _METRIC_COLUMNS])
    return rows


def read_metrics_csv(path: str) -> list[list[str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [row for row in reader]


def recompute_conformal(run: LoadedRun, config: ConformalConfig) -> list[list[str]]:
    """Per-(seed, fold) conformal diagnostics rows for the loaded run."""
    rows = []
    for seed in run.config.seeds:
        diag = _seed_conformal(run.ensembles[str(seed)], run.dataset, run.folds[str(seed)], config)
        for entry in diag:
            rows.append(
                [
                    str(seed),
                    str(entry["fold"]),
                    _g(config.alpha),
                    _g(entry["tau"]),
                    str(entry["n_cal"]),
                    _g(entry["coverage"]),
                    _g(entry["mean_set_size"]),
                ]
            )
    return rows


def recompute_curves(run: LoadedRun, cfg: ExperimentConfig) -> list[list[str]]:
    rows = []
    for seed in run.config.seeds:
        acquisition = _seed_acquisition(
            run.ensembles[str(seed)], run.dataset, run.folds[str(seed)], cfg, int(seed)
        )
        if not acquisition:
            continue
        for policy, data in acquisition.items():
            for frac, value in zip(data["fractions"], data["mean_values"]):
                rows.append([str(seed), policy, _g(frac), _g(value)])
    return rows


def _explain_model_for_fold(ensemble: MultistrategyEnsemble, fold: int):
    """The fold's best attributable model: joint if available, else early."""
    for strategy in ("joint", "early"):
        if strategy in ensemble.strategies:
            return strategy, ensemble.strategies[strategy].fold_members[fold][0]
    return None, None


def explain_run(run: LoadedRun, samples: int = 5, steps: int = 128, repeats: int = 5):
    """Integrated-gradients attributions and permutation importances.

    Attribution targets the fold's top joint (or early) fusion model;
    importance shuffles whole modality blocks (plus per-feature for the
    tabular block) against the final ensemble on the fold's test rows.
    Returns (attribution_rows, importance_rows).
    """
    from .metrics import permutation_importance

    dataset = run.dataset
    attribution_rows = []
    importance_rows = []
    for seed in run.config.seeds:
        ensemble = run.ensembles[str(seed)]
        folds = run.folds[str(seed)]
        for f, fold in enumerate(folds.folds):
            mod_train = Modalities.from_dataset(dataset, fold.train)
            mod_test = Modalities.from_dataset(dataset, fold.test)
            strategy, model = _explain_model_for_fold(ensemble, f)
            if model is not None:
                rows_idx = list(range(min(samples, len(fold.test))))
                blocks, names, baselines = _attribution_blocks(model, mod_train, dataset)
                for r in rows_idx:
                    sample_id = dataset.ids[fold.test[r]]
                    attrs = _attribute(model, strategy, mod_test, r, baselines, steps)
                    for block, (block_names, values) in zip(blocks, zip(names, attrs)):
                        for j, value in enumerate(values):
                            attribution_rows.append(
                                [
                                    str(seed),
                                    str(f),
                                    sample_id,
                                    strategy,
                                    block,
                                    block_names[j],
                                    _g(value),
                                ]
                            )

            test_blocks = {"tabular": dataset.X_tab[fold.test]}
            for name, E in dataset.embeddings.items():
                test_blocks[name] = E[fold.test]

            def predict_fn(bl, fold_index=f, ens=ensemble):
                mod = Modalities(
                    tabular=bl["tabular"],
                    embeddings={k: v for k, v in bl.items() if k != "tabular"},
                )
                return ens.predict_proba(mod, fold_index)

            imp = permutation_importance(
                predict_fn,
                test_blocks,
                dataset.y[fold.test],
                metric="accuracy",
                repeats=repeats,
                seed=derive_explain_seed(seed, f),
                per_feature=True,
                feature_blocks={"tabular"},
            )
            for block, drop in sorted(imp.block_drops.items()):
                importance_rows.append([str(seed), str(f), "block", block, "", _g(drop)])
            for block, drops in sorted(imp.feature_drops.items()):
                feature_names = (
                    dataset.feature_names
                    if block == "tabular"
                    else [f"e{i}" for i in range(len(drops))]
                )
                for j, drop in enumerate(drops):
                    importance_rows.append(
                        [str(seed), str(f), "feature", block, feature_names[j], _g(drop)]
                    )
    return attribution_rows, importance_rows


def derive_explain_seed(seed, fold: int) -> int:
    return int(seed) * 1009 + fold


def _attribution_blocks(model, mod_train: Modalities, dataset):
    """Block names, per-block feature names, and IG baselines for a model."""
    blocks, names, baselines = [], [], []
    for rep in model.representations:
        kind = rep.to_dict()["kind"]
        Z = rep.transform(mod_train)
        if kind in ("tabular", "pipeline"):
            blocks.append("tabular")
            names.append(
                dataset.feature_names
                if Z.shape[1] == len(dataset.feature_names)
                else [f"z{i}" for i in range(Z.shape[1])]
            )
            baselines.append(Z.mean(axis=0))
        else:
            blocks.append(rep.name)
            names.append([f"e{i}" for i in range(Z.shape[1])])
            baselines.append(np.zeros(Z.shape[1]))
    return blocks, names, baselines


def _attribute(model, strategy: str, mod: Modalities, row: int, baselines, steps: int):
    from .fusion import joint_integrated_gradients
    from .nn import integrated_gradients

    if strategy == "joint":
        return joint_integrated_gradients(model, mod, row, baselines=baselines, steps=steps)
    Z = model.extract(mod)
    flat_baseline = np.concatenate(baselines)
    attr = integrated_gradients(model.head, Z[row], baseline=flat_baseline, steps=steps)
    out, start = [], 0
    for base in baselines:
        out.append(attr[start : start + len(base)])
        start += len(base)
    return out
