from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Callable, Sequence
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from rich.console import Console
from rich.table import Table

from . import dataio
from .config_loader import (
    get_active_config_files,
    load_logging_config,
    load_settings,
    resolve_config_files,
    resolve_logging_config_file,
    set_active_config_files,
)
from .core import CLASS_NAMES, N_CLASSES, QualityClass
from .errors import InvalidArgument, LengthMismatch, OrdinalQualityError
from .evaluation import correlation_matrix, evaluate_models
from .features import fit_pca, transform_dataset
from .logging_setup import get_logger, setup_logging
from .ordinal import FitOptions, fit, sample_parameters
from .scoring import class_intervals, normalize, score_dataset, threshold_report
from .settings import Settings
from .synth import GeneratorSpec, generate
from .utils import atomic_write_text
from .weighting import apply_weights, compute_weights, population_for_unit

APP_NAME = "ordinal-quality"

log = get_logger(__name__)
settings: Settings


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ordqual", description="Ordinal quality scores from classifier probabilities")
    parser.add_argument("-c", "--config", dest="config_file", default=None, help="Configuration file location.")
    parser.add_argument("-V", "--version", action="version", version=f"{APP_NAME} {_package_version()}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def dataset_args(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--format", dest="fmt", choices=("csv", "jsonl"), default=None, help="Dataset format (default: from suffix).")
        sub.add_argument("--lenient", action="store_true", default=None, help="Drop invalid rows instead of failing.")
        sub.add_argument("--tolerance", type=float, default=None, help="Allowed deviation of probability sums from 1.")

    validate = commands.add_parser("validate", help="Check a dataset and report per-class counts.")
    validate.add_argument("dataset", type=Path)
    dataset_args(validate)

    weights = commands.add_parser("weights", help="Inverse-probability weights for a unit of analysis.")
    weights.add_argument("--population", default=None, help="article, revision, class or a population file.")
    source = weights.add_mutually_exclusive_group(required=True)
    source.add_argument("--dataset", type=Path, help="Take sample counts from this dataset.")
    source.add_argument("--sample-counts", type=int, nargs=N_CLASSES, metavar="N", help="Sample counts Stub..FA.")
    weights.add_argument("--permissive", action="store_true", help="Weight 0 for classes absent from the population.")
    weights.add_argument("-o", "--output", type=Path, default=None, help="Also write the table to this file.")
    dataset_args(weights)

    fit_cmd = commands.add_parser("fit", help="Fit the ordinal model and write a model file.")
    fit_cmd.add_argument("dataset", type=Path)
    fit_cmd.add_argument("-o", "--output", type=Path, required=True)
    fit_cmd.add_argument("--unit", default=None, help="article, revision, class or a population file.")
    fit_cmd.add_argument("--penalty", choices=("t", "none"), default=None)
    fit_cmd.add_argument("--seed", type=int, default=None)
    fit_cmd.add_argument("--holdout", type=int, default=None, help="Reserve this many instances for evaluation.")
    fit_cmd.add_argument("--holdout-out", type=Path, default=None, help="Write the reserved instances here.")
    fit_cmd.add_argument("--full-sample-weights", action="store_true", default=None, help="Weights from counts before the holdout split.")
    fit_cmd.add_argument("--unweighted-pca", action="store_true", default=None)
    fit_cmd.add_argument("--max-iterations", type=int, default=None)
    fit_cmd.add_argument("--require-convergence", action="store_true")
    dataset_args(fit_cmd)

    score_cmd = commands.add_parser("score", help="Score a dataset with a fitted model.")
    score_cmd.add_argument("model", type=Path)
    score_cmd.add_argument("dataset", type=Path)
    score_cmd.add_argument("-o", "--output", type=Path, required=True)
    score_cmd.add_argument("--draws", type=int, default=None)
    score_cmd.add_argument("--seed", type=int, default=None)
    score_cmd.add_argument("--level", type=float, default=None)
    score_cmd.add_argument("--thresholds-out", type=Path, default=None)
    score_cmd.add_argument("--intervals-out", type=Path, default=None)
    dataset_args(score_cmd)

    evaluate = commands.add_parser("evaluate", help="Accuracy and calibration of models on a held-out dataset.")
    evaluate.add_argument("dataset", type=Path)
    evaluate.add_argument("--model", dest="models", action="append", required=True, metavar="[NAME=]PATH")
    evaluate.add_argument("--output-dir", type=Path, required=True)
    evaluate.add_argument("--units", nargs="+", default=None)
    evaluate.add_argument("--sample-counts", type=int, nargs=N_CLASSES, default=None, metavar="N")
    evaluate.add_argument("--calibration-errors", choices=("delta", "bootstrap"), default=None)
    evaluate.add_argument("--bootstrap-samples", type=int, default=None)
    evaluate.add_argument("--draws", type=int, default=None)
    evaluate.add_argument("--seed", type=int, default=None)
    dataset_args(evaluate)

    compare = commands.add_parser("compare", help="Correlations between score files.")
    compare.add_argument("scores", type=Path, nargs="+")
    compare.add_argument("-o", "--output", type=Path, required=True)

    synth = commands.add_parser("synth", help="Generate a synthetic dataset with known ground truth.")
    synth.add_argument("-o", "--output", type=Path, required=True)
    synth.add_argument("--truth", type=Path, required=True)
    synth.add_argument("--n", type=int, default=None)
    synth.add_argument("--kappa", type=float, default=None)
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--thresholds", type=float, nargs=5, default=None)
    synth.add_argument("--coefficients", type=float, nargs=5, default=None)

    features = commands.add_parser("features", help="Write the principal-component features of a dataset.")
    features.add_argument("dataset", type=Path)
    features.add_argument("-o", "--output", type=Path, required=True)
    features.add_argument("--model", type=Path, default=None, help="Use this model's transform instead of fitting one.")
    features.add_argument("--unit", default=None, help="Weights for fitting the transform.")
    dataset_args(features)
    return parser


_OVERRIDES: dict[str, dict[str, str]] = {
    "ingest": {"lenient": "strict", "tolerance": "tolerance"},
    "fit": {
        "unit": "unit",
        "penalty": "penalty",
        "seed": "seed",
        "holdout": "holdout",
        "full_sample_weights": "full_sample_weights",
        "unweighted_pca": "weighted_pca",
        "max_iterations": "max_iterations",
    },
    "score": {"draws": "draws", "seed": "seed", "level": "level"},
    "evaluate": {
        "units": "units",
        "calibration_errors": "calibration_errors",
        "bootstrap_samples": "bootstrap_samples",
        "draws": "draws",
        "seed": "seed",
    },
    "synth": {"n": "n", "kappa": "kappa", "seed": "seed", "thresholds": "thresholds", "coefficients": "coefficients"},
}

_NEGATED = {"lenient", "unweighted_pca"}


def _flag_overrides(args: argparse.Namespace) -> dict[str, Any]:
    sections = {"ingest"} | ({args.command} & _OVERRIDES.keys())
    if args.command == "features":
        sections.add("fit")
    overrides: dict[str, Any] = {}
    for section in sections:
        for flag, key in _OVERRIDES[section].items():
            value = getattr(args, flag, None)
            if value is None:
                continue
            overrides.setdefault(section, {})[key] = (not value) if flag in _NEGATED else value
    return overrides


def _parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "compare" and len(args.scores) < 2:
        parser.error("compare needs at least 2 score files")
    return args


def _init_config(config_file: str | None, overrides: dict[str, Any]) -> None:
    global settings
    config_files = resolve_config_files(APP_NAME, config_file)
    if config_file and not Path(config_files[0]).exists():
        print(json.dumps({"error": "IoFailure", "message": f"config file {config_file} does not exist"}), file=sys.stderr)
        raise SystemExit(1)
    set_active_config_files(config_files)
    try:
        settings = load_settings(config_files, overrides)
    except (ValueError, yaml.YAMLError) as exc:
        message = f"Invalid configuration for {APP_NAME}: {exc}".replace("\n", " ")
        print(json.dumps({"error": "InvalidConfiguration", "message": message}), file=sys.stderr)
        raise SystemExit(1) from exc


def _init_logs() -> None:
    logging_config = load_logging_config(settings, APP_NAME)
    setup_logging(logging_config)
    log.debug("`config` Logging configured from %s", str(resolve_logging_config_file(settings, APP_NAME) or "<defaults>"))
    log.debug("`config` Active config files: %s", [str(path) for path in get_active_config_files()])


def _package_version() -> str:
    try:
        return version(APP_NAME)
    except PackageNotFoundError:
        return "0.1.0"


def _read(args: argparse.Namespace, path: Path | None = None) -> tuple[Any, dataio.IngestReport]:
    return dataio.read_dataset(
        path or args.dataset,
        fmt=getattr(args, "fmt", None),
        strict=settings.ingest.strict,
        tolerance=settings.ingest.tolerance,
    )


def _cmd_validate(args: argparse.Namespace) -> int:
    _, report = _read(args)
    console = Console()
    console.print(f"{report.path}: {report.accepted} of {report.rows} rows valid", soft_wrap=True)
    table = Table(title="Instances per class")
    table.add_column("Class")
    table.add_column("Count", justify="right")
    for name, count in report.class_counts.items():
        table.add_row(name, str(count))
    console.print(table)
    if report.dropped:
        dropped = Table(title="Dropped rows")
        dropped.add_column("Row", justify="right")
        dropped.add_column("Error")
        dropped.add_column("Message")
        for problem in report.dropped:
            dropped.add_row(str(problem.row), problem.code, problem.message)
        console.print(dropped)
    return 0


def _cmd_weights(args: argparse.Namespace) -> int:
    population = population_for_unit(args.population or settings.fit.unit)
    if args.dataset is not None:
        dataset, _ = _read(args)
        counts = [int(c) for c in dataset.class_counts()]
    else:
        counts = list(args.sample_counts)
    table = compute_weights(counts, population, permissive=args.permissive)
    text = yaml.safe_dump(
        {
            "unit": table.unit,
            "sample_counts": dict(zip(CLASS_NAMES, counts)),
            "population": population.as_mapping(),
            "weights": table.as_mapping(),
        },
        sort_keys=False,
    )
    sys.stdout.write(text)
    if args.output is not None:
        atomic_write_text(args.output, text)
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    cfg = settings.fit
    dataset, _ = _read(args)
    fit_part = dataset
    if cfg.holdout > 0:
        fit_part, held = dataset.split_holdout(cfg.holdout, seed=cfg.seed)
        if args.holdout_out is not None:
            dataio.write_dataset(held, args.holdout_out)
        log.info("`fit` Reserved %s instances for evaluation", len(held))
    elif args.holdout_out is not None:
        raise InvalidArgument("--holdout-out requires --holdout")

    population = population_for_unit(cfg.unit)
    counts = dataset.class_counts() if cfg.full_sample_weights else fit_part.class_counts()
    weighted = apply_weights(fit_part, compute_weights(counts, population))
    pca = fit_pca(weighted, weighted=cfg.weighted_pca)
    options = FitOptions(
        penalty=cfg.penalty,
        prior_df=cfg.prior_df,
        prior_scale=cfg.prior_scale,
        max_iterations=cfg.max_iterations,
        gradient_tolerance=cfg.gradient_tolerance,
        separation_limit=cfg.separation_limit,
        require_convergence=args.require_convergence,
    )
    model = fit(weighted, pca, options, unit=population.unit)
    dataio.write_model(model, args.output)
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    cfg = settings.score
    model = dataio.read_model(args.model)
    dataset, _ = _read(args)
    records = score_dataset(dataset, model, draws=cfg.draws, seed=cfg.seed, level=cfg.level)
    normalized = normalize(records, model.thresholds)
    dataio.write_scores(args.output, normalized.records)
    if args.thresholds_out is not None:
        sample = sample_parameters(model, cfg.draws, cfg.seed)
        rows = threshold_report(model, normalized.map, level=cfg.level, sample=sample)
        dataio.write_threshold_report(args.thresholds_out, rows)
    if args.intervals_out is not None:
        dataio.write_class_intervals(args.intervals_out, class_intervals(normalized.thresholds))
    return 0


def _model_arguments(values: Sequence[str]) -> dict[str, Path]:
    models: dict[str, Path] = {}
    for value in values:
        name, sep, path = value.partition("=")
        if not sep:
            name, path = Path(value).stem, value
        if name in models:
            raise InvalidArgument(f"duplicate model name {name!r}")
        models[name] = Path(path)
    return models


def _cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = settings.evaluate
    dataset, _ = _read(args)
    models = {name: dataio.read_model(path) for name, path in _model_arguments(args.models).items()}
    report = evaluate_models(
        dataset,
        models,
        cfg.units,
        sample_counts=args.sample_counts,
        calibration_errors=cfg.calibration_errors,
        bootstrap_samples=cfg.bootstrap_samples,
        draws=cfg.draws,
        seed=cfg.seed,
    )
    out = args.output_dir
    dataio.write_accuracy(out / "accuracy.csv", report.accuracy)
    dataio.write_calibration(out / "calibration.csv", report.calibration)
    dataio.write_uncertainty(out / "uncertainty.csv", report.uncertainty)
    if report.correlations is not None:
        dataio.write_correlations(out / "correlations.csv", report.correlations.pairs())

    table = Table(title="Accuracy")
    for column in ("Unit", "Model", "Accuracy", "Off by one"):
        table.add_column(column, justify="right" if column in ("Accuracy", "Off by one") else "left")
    for row in report.accuracy:
        table.add_row(row.unit, row.model, f"{row.accuracy:.3f}", f"{row.off_by_one:.3f}")
    Console().print(table)
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    frames = [dataio.read_scores(path) for path in args.scores]
    names = [path.stem for path in args.scores]
    if len(set(names)) != len(names):
        names = [str(path) for path in args.scores]

    joined = frames[0][["id"]]
    for frame in frames:
        joined = joined.merge(frame[["id"]], on="id", how="inner")
    if any(len(joined) != len(frame) for frame in frames):
        raise LengthMismatch("score files do not cover the same ids")

    measures: dict[str, np.ndarray] = {}
    for name, frame in zip(names, frames):
        measures[name] = joined.merge(frame, on="id", how="left")["phi"].to_numpy(dtype=np.float64)
    first = joined.merge(frames[0], on="id", how="left")
    if "evenly_spaced" in first.columns:
        measures["evenly spaced"] = first["evenly_spaced"].to_numpy(dtype=np.float64)
    if "mpqc" in first.columns:
        measures["mpqc"] = np.array([int(QualityClass.parse(v)) for v in first["mpqc"]], dtype=np.float64)

    matrix = correlation_matrix(measures)
    dataio.write_correlations(args.output, matrix.pairs())
    table = Table(title="Pearson r / Kendall tau")
    table.add_column("")
    for name in matrix.names:
        table.add_column(name, justify="right")
    for i, name in enumerate(matrix.names):
        table.add_row(name, *(f"{matrix.pearson[i, j]:.2f} / {matrix.kendall[i, j]:.2f}" for j in range(len(matrix.names))))
    Console().print(table)
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = settings.synth
    spec = GeneratorSpec(tuple(cfg.thresholds), tuple(cfg.coefficients), kappa=cfg.kappa, n=cfg.n, seed=cfg.seed)
    dataset, truth = generate(spec)
    dataio.write_dataset(dataset, args.output)
    dataio.write_truth(args.truth, dataset.ids, truth.features, truth.phi, truth.class_probs)
    return 0


def _cmd_features(args: argparse.Namespace) -> int:
    dataset, _ = _read(args)
    if args.model is not None:
        pca = dataio.read_model(args.model).pca
        if pca is None:
            raise InvalidArgument(f"model {args.model} has no PCA transform")
    else:
        population = population_for_unit(settings.fit.unit)
        weighted = apply_weights(dataset, compute_weights(dataset.class_counts(), population))
        pca = fit_pca(weighted, weighted=settings.fit.weighted_pca)
    dataio.write_features(args.output, dataset.ids, transform_dataset(dataset, pca))
    return 0


COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "validate": _cmd_validate,
    "weights": _cmd_weights,
    "fit": _cmd_fit,
    "score": _cmd_score,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "synth": _cmd_synth,
    "features": _cmd_features,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = _parse_args(argv)
    _init_config(args.config_file, _flag_overrides(args))
    _init_logs()
    log.debug("`startup` %s %s", APP_NAME, args.command)

    try:
        return COMMANDS[args.command](args)
    except OrdinalQualityError as exc:
        log.error("`state` %s failed: %s: %s", args.command, exc.code, exc.message)
        print(json.dumps({"error": exc.code, "message": exc.message}), file=sys.stderr)
        return 1
    except Exception as exc:
        log.error("`state` %s failed unexpectedly", args.command, exc_info=True)
        print(json.dumps({"error": "InternalError", "message": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
