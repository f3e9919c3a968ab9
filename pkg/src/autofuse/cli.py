"""Command-line entry point.

Subcommands: ``search`` (full experiment), ``evaluate`` (audit metrics
against serialized models), ``conformal`` (prediction-set diagnostics),
``acquire`` (acquisition curves), ``explain`` (attributions and
importances), ``synth`` (synthetic dataset generation). Exit code 0 on
success, 1 on any expected configuration or data error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .exceptions import AutofuseError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="experiment config JSON")
    parser.add_argument("--seed", type=int, help="override the config seeds with one seed")
    parser.add_argument("--output", help="output directory")
    parser.add_argument("--jobs", type=int, help="parallel workers (default from config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autofuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the full search/ensemble experiment")
    _add_common(p)

    p = sub.add_parser("evaluate", help="recompute metrics from serialized models")
    p.add_argument("--run", required=True, help="experiment output directory")
    p.add_argument("--manifest", help="override the manifest path recorded in the run")
    p.add_argument("--seed", type=int, help="restrict to one of the run's seeds")
    p.add_argument("--output", help="where to write metrics_recomputed.csv (default: run dir)")

    p = sub.add_parser("conformal", help="recompute conformal diagnostics for a run")
    p.add_argument("--run", required=True)
    p.add_argument("--manifest")
    p.add_argument("--seed", type=int, help="restrict to one of the run's seeds")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--k-reg", dest="k_reg", type=int)
    p.add_argument("--output")

    p = sub.add_parser("acquire", help="recompute acquisition curves for a run")
    p.add_argument("--run", required=True)
    p.add_argument("--manifest")
    p.add_argument("--seed", type=int, help="restrict to one of the run's seeds")
    p.add_argument("--metric")
    p.add_argument("--policies", help="comma-separated policy list")
    p.add_argument("--fractions", help="comma-separated fraction grid (must include 0 and 1)")
    p.add_argument("--output")

    p = sub.add_parser("explain", help="attributions and permutation importances for a run")
    p.add_argument("--run", required=True)
    p.add_argument("--manifest")
    p.add_argument("--seed", type=int, help="restrict to one of the run's seeds")
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--steps", type=int, default=128)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--output")

    p = sub.add_parser("synth", help="generate a synthetic multimodal dataset")
    p.add_argument("--kind", required=True, choices=("cross_modal_xor", "ambiguous_half", "exchangeable"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    return parser


def _cmd_search(args) -> int:
    from .experiment import ExperimentConfig, run_experiment

    if not args.config:
        print("search requires --config", file=sys.stderr)
        return 1
    overrides = {"output": args.output, "jobs": args.jobs}
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = ExperimentConfig.from_json(args.config, overrides)
    report = run_experiment(config)
    print(f"run complete: {report.output_dir}")
    for seed, payload in report.per_seed.items():
        ens = payload["metrics"].get("ensemble", {})
        acc = ens.get("accuracy", {}).get("mean")
        if acc is not None:
            print(f"  seed {seed}: ensemble accuracy {acc:.4f}")
        if payload["dropped_strategies"]:
            print(f"  seed {seed}: dropped strategies {payload['dropped_strategies']}")
    return 0


def _load_filtered_run(args):
    from dataclasses import replace

    from .exceptions import ConfigError
    from .experiment import load_run

    run = load_run(args.run, args.manifest)
    seed = getattr(args, "seed", None)
    if seed is not None:
        if str(seed) not in run.ensembles:
            raise ConfigError(f"seed {seed} not in run (available: {sorted(run.ensembles)})")
        run.config = replace(run.config, seeds=(seed,))
    return run


def _cmd_evaluate(args) -> int:
    from .experiment import _write_rows, read_metrics_csv, recompute_metrics

    run = _load_filtered_run(args)
    recomputed = recompute_metrics(run)
    stored = read_metrics_csv(os.path.join(args.run, "metrics.csv"))
    if args.seed is not None:
        stored = [row for row in stored if row[1] == str(args.seed)]
    out_dir = args.output or args.run
    os.makedirs(out_dir, exist_ok=True)
    _write_rows(
        os.path.join(out_dir, "metrics_recomputed.csv"),
        ["model", "seed", "fold", "accuracy", "balanced_accuracy", "macro_f1", "mcc", "auroc", "log_loss"],
        recomputed,
    )
    if recomputed == stored:
        print(f"evaluate: all {len(recomputed)} metric rows match the serialized models")
        return 0
    print("evaluate: MISMATCH between metrics.csv and recomputation", file=sys.stderr)
    for row_s, row_r in zip(stored, recomputed):
        if row_s != row_r:
            print(f"  stored:     {row_s}", file=sys.stderr)
            print(f"  recomputed: {row_r}", file=sys.stderr)
    return 1


def _cmd_conformal(args) -> int:
    from .conformal import ConformalConfig
    from .experiment import _write_rows, recompute_conformal

    run = _load_filtered_run(args)
    base = run.config.conformal
    config = ConformalConfig(
        alpha=args.alpha if args.alpha is not None else base.alpha,
        lam=args.lam if args.lam is not None else base.lam,
        k_reg=args.k_reg if args.k_reg is not None else base.k_reg,
    )
    rows = recompute_conformal(run, config)
    out_dir = args.output or args.run
    os.makedirs(out_dir, exist_ok=True)
    _write_rows(
        os.path.join(out_dir, "conformal.csv"),
        ["seed", "fold", "alpha", "tau", "n_cal", "coverage", "mean_set_size"],
        rows,
    )
    for row in rows:
        print(f"seed {row[0]} fold {row[1]}: coverage {row[5]}, mean set size {row[6]}")
    return 0


def _cmd_acquire(args) -> int:
    from dataclasses import replace

    from .experiment import _write_rows, recompute_curves

    run = _load_filtered_run(args)
    cfg = run.config
    if args.metric:
        cfg = replace(cfg, acquisition_metric=args.metric)
    if args.policies:
        cfg = replace(cfg, policies=tuple(args.policies.split(",")))
    if args.fractions:
        cfg = replace(cfg, fractions=tuple(float(f) for f in args.fractions.split(",")))
    rows = recompute_curves(run, cfg)
    out_dir = args.output or args.run
    os.makedirs(out_dir, exist_ok=True)
    _write_rows(
        os.path.join(out_dir, "curves_recomputed.csv"),
        ["seed", "policy", "fraction", "metric"],
        rows,
    )
    print(f"wrote {len(rows)} curve rows")
    return 0


def _cmd_explain(args) -> int:
    from .experiment import _write_rows, explain_run

    run = _load_filtered_run(args)
    attribution_rows, importance_rows = explain_run(
        run, samples=args.samples, steps=args.steps, repeats=args.repeats
    )
    out_dir = args.output or args.run
    os.makedirs(out_dir, exist_ok=True)
    _write_rows(
        os.path.join(out_dir, "attributions.csv"),
        ["seed", "fold", "sample_id", "model", "block", "feature", "attribution"],
        attribution_rows,
    )
    _write_rows(
        os.path.join(out_dir, "importance.csv"),
        ["seed", "fold", "scope", "block", "feature", "drop"],
        importance_rows,
    )
    print(f"wrote {len(attribution_rows)} attribution rows, {len(importance_rows)} importance rows")
    return 0


def _cmd_synth(args) -> int:
    from .synthetic import make_synthetic

    info = make_synthetic(args.kind, args.n, args.seed, args.output)
    print(f"wrote {info['manifest_path']}")
    return 0


_COMMANDS = {
    "search": _cmd_search,
    "evaluate": _cmd_evaluate,
    "conformal": _cmd_conformal,
    "acquire": _cmd_acquire,
    "explain": _cmd_explain,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except AutofuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
